"""Full-batch training of the linear text classifier.

The objective is label-smoothed cross entropy on unit-normalized text
embeddings perturbed with fresh Gaussian noise each step:

    loss = mean over (t, c) of SCE(W (x_hat + n) + b, c),
    x_hat = E(t) / ||E(t)||,  n ~ N(0, sigma^2 I) resampled per step.

The smoothing target is q = (1 - eps) * onehot(c) + eps / K, so the gradient
with respect to the logits is softmax(logits) - q. Optimization is AdamW
with decoupled weight decay applied to the weight matrix only, never the
bias. Everything runs in float64 and is driven by one seeded generator, so a
given (dataset, embeddings, config, seed) always produces bit-identical
parameters; reproducibility relies on numpy's deterministic kernels for
fixed shapes in a fixed environment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import normalize, normalize_rows
from .data import EmbeddingBundle, TextDataset
from .errors import (
    DimensionMismatch,
    FormatError,
    InvalidConfig,
    InvalidSmoothing,
    NonFiniteLoss,
    ShapeMismatch,
)
from .prompts import ClassVocabulary


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    steps: int = 500
    label_smoothing: float = 0.1
    noise_sigma: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.steps < 0:
            raise InvalidConfig(f"steps must be >= 0, got {self.steps}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise InvalidSmoothing(
                f"label_smoothing must be in [0, 1), got {self.label_smoothing}"
            )
        if self.noise_sigma < 0:
            raise InvalidConfig(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for name in ("adam_beta1", "adam_beta2"):
            beta = getattr(self, name)
            if not 0.0 < beta < 1.0:
                raise InvalidConfig(f"{name} must be in (0, 1), got {beta}")
        if self.weight_decay < 0:
            raise InvalidConfig(f"weight_decay must be >= 0, got {self.weight_decay}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "steps": self.steps,
            "label_smoothing": self.label_smoothing,
            "noise_sigma": self.noise_sigma,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f: doc[f] for f in cls.__dataclass_fields__ if f in doc}
        return cls(**known)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def smoothing_targets(num_classes: int, labels, label_smoothing: float) -> np.ndarray:
    """Rows q = (1 - eps) * onehot(label) + eps / K."""
    if not 0.0 <= label_smoothing < 1.0:
        raise InvalidSmoothing(
            f"label_smoothing must be in [0, 1), got {label_smoothing}"
        )
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    q = np.full((labels.shape[0], num_classes), label_smoothing / num_classes)
    q[np.arange(labels.shape[0]), labels] += 1.0 - label_smoothing
    return q


def smoothed_cross_entropy(
    logits, true_class: int, label_smoothing: float = 0.0
) -> tuple[float, np.ndarray]:
    """Loss and gradient w.r.t. the logits for a single example.

    loss = -sum_c q_c * log softmax(logits)_c, gradient = softmax(logits) - q.
    The gradient components always sum to zero.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ShapeMismatch(f"need a 1-D logit vector with K >= 2, got shape {arr.shape}")
    if not 0 <= true_class < arr.shape[0]:
        raise ShapeMismatch(f"true_class {true_class} outside {arr.shape[0]} classes")
    q = smoothing_targets(arr.shape[0], [true_class], label_smoothing)[0]
    logp = _log_softmax(arr)
    loss = float(-(q * logp).sum())
    grad = np.exp(logp) - q
    return loss, grad


def training_loss_and_grads(
    weights: np.ndarray,
    bias: np.ndarray,
    embeddings: np.ndarray,
    labels: np.ndarray,
    noise: np.ndarray | None = None,
    label_smoothing: float = 0.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean smoothed-CE loss over the batch plus gradients w.r.t. W and b.

    Embeddings are row-normalized here and the (fixed) noise realization is
    added afterwards, mirroring one training step. Used both by the training
    loop and by finite-difference gradient checks.
    """
    W = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    X = normalize_rows(embeddings)
    if noise is not None:
        X = X + np.asarray(noise, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    if labels.shape[0] != n:
        raise ShapeMismatch(f"{labels.shape[0]} labels for {n} rows")
    if W.shape[1] != X.shape[1]:
        raise DimensionMismatch(
            f"weights expect dimension {W.shape[1]}, embeddings have {X.shape[1]}"
        )
    logits = X @ W.T + b
    logp = _log_softmax(logits)
    q = smoothing_targets(W.shape[0], labels, label_smoothing)
    loss = float(-(q * logp).sum(axis=1).mean())
    g_logits = (np.exp(logp) - q) / n
    grad_w = g_logits.T @ X
    grad_b = g_logits.sum(axis=0)
    return loss, grad_w, grad_b


@dataclass(eq=False)
class LinearClassifier:
    """A trained single-layer head: logits = W x (+ b)."""

    weights: np.ndarray  # (K, d)
    bias: np.ndarray  # (K,)
    vocab: ClassVocabulary
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if W.ndim != 2:
            raise ShapeMismatch(f"weights must be 2-D, got shape {W.shape}")
        if b.shape != (W.shape[0],):
            raise ShapeMismatch(f"bias shape {b.shape} does not match {W.shape[0]} classes")
        if W.shape[0] != len(self.vocab):
            raise ShapeMismatch(
                f"{W.shape[0]} weight rows for {len(self.vocab)} classes"
            )
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NonFiniteLoss("classifier parameters contain NaN or Inf")
        self.weights = W
        self.bias = b

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    def batch_logits(self, matrix, normalize_input: bool = True) -> np.ndarray:
        X = np.asarray(matrix, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise DimensionMismatch(
                f"expected (n, {self.dimension}) matrix, got shape {X.shape}"
            )
        if normalize_input:
            X = normalize_rows(X)
        return X @ self.weights.T + self.bias

    def predict(self, matrix, normalize_input: bool = True) -> np.ndarray:
        return np.argmax(self.batch_logits(matrix, normalize_input), axis=1)

    def save(self, path) -> None:
        """Serialize as JSON with the weight matrix flattened row-major."""
        doc = {
            "dimension": self.dimension,
            "class_names": list(self.vocab.names),
            "weights": [float(x) for x in self.weights.ravel(order="C")],
            "bias": [float(x) for x in self.bias],
            "train_meta": self.train_meta,
        }
        Path(path).write_text(
            json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path) -> "LinearClassifier":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from exc
        try:
            dim = int(doc["dimension"])
            names = [str(n) for n in doc["class_names"]]
            flat = np.asarray(doc["weights"], dtype=np.float64)
            bias = np.asarray(doc["bias"], dtype=np.float64)
            meta = dict(doc.get("train_meta", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad classifier record ({exc})") from exc
        k = len(names)
        if flat.size != k * dim:
            raise FormatError(
                f"{path}: weights hold {flat.size} values, expected {k * dim}"
            )
        return cls(
            weights=flat.reshape(k, dim),
            bias=bias,
            vocab=ClassVocabulary(names=tuple(names)),
            train_meta=meta,
        )


def classifier_logits(clf: LinearClassifier, emb, normalize_input: bool = True) -> np.ndarray:
    """Logits W x (+ b) for one embedding; normalizes x first by default,
    matching how inputs were normalized during training."""
    vec = np.asarray(emb, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != clf.dimension:
        raise DimensionMismatch(
            f"expected a {clf.dimension}-vector, got shape {vec.shape}"
        )
    if normalize_input:
        vec = normalize(vec)
    return clf.weights @ vec + clf.bias


def train_text_classifier(
    dataset: TextDataset,
    text_embs: EmbeddingBundle,
    cfg: TrainConfig | None = None,
    init_weights: np.ndarray | None = None,
    init_bias: np.ndarray | None = None,
) -> LinearClassifier:
    """Train the head by full-batch AdamW on the smoothed-CE objective.

    Row i of `text_embs` must be the embedding of dataset item i. Each step
    renormalizes nothing (normalization happens once up front, the rows are
    constant), draws fresh per-row noise, computes the mean loss over the
    whole batch, and applies one AdamW update. `init_weights` overrides the
    default seeded Gaussian init (std 1/sqrt(d)); that is how refinement
    continues from an existing head, and passing the per-class text-embedding
    matrix starts training from the similarity classifier instead.
    """
    if cfg is None:
        cfg = TrainConfig()
    if len(dataset) != text_embs.count:
        raise ShapeMismatch(
            f"dataset has {len(dataset)} items, bundle has {text_embs.count} rows"
        )
    if len(dataset) == 0:
        raise ShapeMismatch("cannot train on an empty dataset")
    k = len(dataset.vocab)
    d = text_embs.dimension
    labels = dataset.labels
    if labels.min() < 0 or labels.max() >= k:
        raise ShapeMismatch("dataset labels outside the vocabulary")

    x_hat = normalize_rows(text_embs.matrix)
    n_rows = x_hat.shape[0]
    rng = np.random.default_rng(cfg.seed)

    if init_weights is not None:
        weights = np.array(init_weights, dtype=np.float64, copy=True)
        if weights.shape != (k, d):
            raise ShapeMismatch(f"init_weights shape {weights.shape}, expected {(k, d)}")
    else:
        weights = rng.normal(0.0, 1.0 / math.sqrt(d), size=(k, d))
    if init_bias is not None:
        bias = np.array(init_bias, dtype=np.float64, copy=True)
        if bias.shape != (k,):
            raise ShapeMismatch(f"init_bias shape {bias.shape}, expected {(k,)}")
    else:
        bias = np.zeros(k, dtype=np.float64)

    m_w = np.zeros_like(weights)
    v_w = np.zeros_like(weights)
    m_b = np.zeros_like(bias)
    v_b = np.zeros_like(bias)

    loss_history: list[float] = []
    for step in range(1, cfg.steps + 1):
        noise = cfg.noise_sigma * rng.standard_normal((n_rows, d))
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad_w, grad_b = training_loss_and_grads(
                weights, bias, x_hat, labels,
                noise=noise, label_smoothing=cfg.label_smoothing,
            )
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"loss became non-finite at step {step}", step=step)
        loss_history.append(loss)

        m_w = cfg.adam_beta1 * m_w + (1 - cfg.adam_beta1) * grad_w
        v_w = cfg.adam_beta2 * v_w + (1 - cfg.adam_beta2) * grad_w * grad_w
        m_b = cfg.adam_beta1 * m_b + (1 - cfg.adam_beta1) * grad_b
        v_b = cfg.adam_beta2 * v_b + (1 - cfg.adam_beta2) * grad_b * grad_b
        bias_c1 = 1 - cfg.adam_beta1 ** step
        bias_c2 = 1 - cfg.adam_beta2 ** step
        # Overflow here is caught by the finite check below, not warned about.
        with np.errstate(over="ignore", invalid="ignore"):
            step_w = (m_w / bias_c1) / (np.sqrt(v_w / bias_c2) + cfg.adam_eps)
            step_b = (m_b / bias_c1) / (np.sqrt(v_b / bias_c2) + cfg.adam_eps)
            # Decoupled decay on the weight matrix only.
            weights = weights - cfg.learning_rate * (step_w + cfg.weight_decay * weights)
            bias = bias - cfg.learning_rate * step_b
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise NonFiniteLoss(f"parameters became non-finite at step {step}", step=step)

    final_noise = cfg.noise_sigma * rng.standard_normal((n_rows, d))
    final_loss, _, _ = training_loss_and_grads(
        weights, bias, x_hat, labels,
        noise=final_noise, label_smoothing=cfg.label_smoothing,
    )
    if not math.isfinite(final_loss):
        raise NonFiniteLoss("final loss is non-finite", step=cfg.steps)
    initial_loss = loss_history[0] if loss_history else final_loss

    meta = {
        "config": cfg.to_dict(),
        "initial_loss": initial_loss,
        "final_loss": final_loss,
        "loss_history": loss_history,
        "num_items": int(n_rows),
    }
    return LinearClassifier(
        weights=weights, bias=bias, vocab=dataset.vocab, train_meta=meta
    )


def continue_training(
    clf: LinearClassifier,
    dataset: TextDataset,
    embs: EmbeddingBundle,
    cfg: TrainConfig,
) -> LinearClassifier:
    """Resume training from an existing head's parameters."""
    return train_text_classifier(
        dataset, embs, cfg, init_weights=clf.weights, init_bias=clf.bias
    )
