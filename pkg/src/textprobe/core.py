"""Embedding algebra and the temperature-scaled softmax zero-shot classifier.

An image embedding is scored against one unit-normalized text embedding per
class; class probabilities are the softmax of the cosine similarities divided
by a temperature. All arithmetic runs in float64 regardless of the storage
dtype of the inputs, and the softmax subtracts the max logit before
exponentiating so CLIP-scale temperatures (tau ~ 0.01) stay stable.

All functions here are pure and safe for concurrent read-only use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyVector,
    InvalidConfig,
    NonFiniteValue,
    ZeroVector,
)

# Norms below this count as zero vectors.
ZERO_NORM_EPS = 1e-12

# Tolerance when validating that stored class embeddings are unit norm.
UNIT_NORM_TOL = 1e-6

# Default softmax temperature, matching the usual learned logit scale of
# contrastive dual encoders (logit scale ~ 100 <=> tau ~ 0.01).
DEFAULT_TEMPERATURE = 0.01


def as_vector(values) -> np.ndarray:
    """Coerce input to a 1-D float64 vector, rejecting non-finite entries."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise NonFiniteValue("vector contains NaN or Inf")
    return vec


def normalize(values) -> np.ndarray:
    """Return v / ||v||_2.

    Raises:
        ZeroVector: if ||v||_2 < 1e-12.
    """
    vec = as_vector(values)
    norm = float(np.linalg.norm(vec))
    if norm < ZERO_NORM_EPS:
        raise ZeroVector("cannot normalize a vector with (near-)zero norm")
    return vec / norm


def normalize_rows(matrix) -> np.ndarray:
    """Unit-normalize every row of a 2-D array in float64."""
    mat = np.asarray(matrix, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise NonFiniteValue("matrix contains NaN or Inf")
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms < ZERO_NORM_EPS):
        bad = int(np.flatnonzero(norms.ravel() < ZERO_NORM_EPS)[0])
        raise ZeroVector(f"row {bad} has (near-)zero norm")
    return mat / norms


def cosine_similarity(a, b) -> float:
    """Cosine similarity of two nonzero vectors of equal dimension.

    Symmetric in its arguments; the result lies in [-1, 1] up to float64
    rounding (|value| <= 1 + 1e-9).
    """
    va = as_vector(a)
    vb = as_vector(b)
    if va.shape[0] != vb.shape[0]:
        raise DimensionMismatch(
            f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}"
        )
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        raise ZeroVector("cosine similarity is undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


def stable_softmax(logits) -> np.ndarray:
    """Softmax over the last axis with max-logit subtraction, in float64."""
    arr = np.asarray(logits, dtype=np.float64)
    shifted = arr - arr.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ZeroShotConfig:
    """Settings for the similarity-softmax classifier."""

    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if not (self.temperature > 0):
            raise InvalidConfig(
                f"temperature must be positive, got {self.temperature}"
            )


@dataclass(frozen=True, eq=False)
class ClassTextEmbeddings:
    """One unit-normalized text embedding per class, in vocabulary order.

    `class_ids` must be the contiguous range 0..K-1 and `matrix` holds the
    corresponding rows.
    """

    class_ids: tuple[int, ...]
    matrix: np.ndarray  # (K, d)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64)
        if mat.ndim != 2:
            raise DimensionMismatch(f"expected (K, d) matrix, got {mat.shape}")
        if len(self.class_ids) != mat.shape[0]:
            raise DimensionMismatch(
                f"{len(self.class_ids)} class ids for {mat.shape[0]} rows"
            )
        if tuple(self.class_ids) != tuple(range(len(self.class_ids))):
            raise InvalidConfig("class_ids must be contiguous from 0")
        if not np.all(np.isfinite(mat)):
            raise NonFiniteValue("class embeddings contain NaN or Inf")
        norms = np.linalg.norm(mat, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            bad = int(np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)[0])
            raise InvalidConfig(
                f"class embedding {bad} is not unit norm (|v|={norms[bad]:.8f})"
            )
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "class_ids", tuple(int(c) for c in self.class_ids))

    @classmethod
    def from_matrix(cls, matrix, renormalize: bool = True) -> "ClassTextEmbeddings":
        """Build from a (K, d) matrix, optionally renormalizing each row."""
        mat = np.asarray(matrix, dtype=np.float64)
        if renormalize:
            mat = normalize_rows(mat)
        return cls(class_ids=tuple(range(mat.shape[0])), matrix=mat)

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]


def zero_shot_probabilities(
    img_emb, class_embs: ClassTextEmbeddings, cfg: ZeroShotConfig | None = None
) -> np.ndarray:
    """Class probabilities for one image embedding.

    p_c = exp(cos(t_c, v) / tau) / sum_c' exp(cos(t_c', v) / tau)

    The image embedding is normalized here (the class rows already are), so
    the dot products below are exactly the cosine similarities. Components
    sum to 1 within 1e-6 for any finite input and any tau > 0.
    """
    if cfg is None:
        cfg = ZeroShotConfig()
    v = normalize(img_emb)
    if v.shape[0] != class_embs.dimension:
        raise DimensionMismatch(
            f"image dimension {v.shape[0]} vs class dimension {class_embs.dimension}"
        )
    sims = class_embs.matrix @ v
    return stable_softmax(sims / cfg.temperature)


def predict_class(probs) -> int:
    """Index of the maximum score; ties break toward the lowest index."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise EmptyVector("predict_class needs a nonempty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("scores contain NaN or Inf")
    return int(np.argmax(arr))
