import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textprobe.core import (
    ClassTextEmbeddings,
    ZeroShotConfig,
    cosine_similarity,
    normalize,
    predict_class,
    stable_softmax,
    zero_shot_probabilities,
)
from textprobe.errors import (
    DimensionMismatch,
    EmptyVector,
    InvalidConfig,
    NonFiniteValue,
    ZeroVector,
)

finite_vectors = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=32,
)


class TestNormalize:
    def test_unit_vector_unchanged(self):
        np.testing.assert_allclose(normalize([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0])

    def test_three_four_five(self):
        # 3-4-5 triangle by hand: (3,4)/5 = (0.6, 0.8)
        np.testing.assert_allclose(normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            normalize([0.0, 0.0])

    def test_tiny_norm_rejected(self):
        with pytest.raises(ZeroVector):
            normalize([1e-15, 1e-15])

    def test_nan_rejected(self):
        with pytest.raises(NonFiniteValue):
            normalize([1.0, float("nan")])

    def test_result_has_unit_norm(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            v = rng.standard_normal(rng.integers(1, 40))
            assert abs(np.linalg.norm(normalize(v)) - 1.0) < 1e-6

    @given(finite_vectors)
    @settings(max_examples=100, deadline=None)
    def test_idempotent(self, values):
        arr = np.asarray(values)
        if np.linalg.norm(arr) < 1e-6:
            return
        once = normalize(arr)
        twice = normalize(once)
        np.testing.assert_allclose(twice, once, atol=1e-9)


class TestCosineSimilarity:
    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0, abs=1e-12)

    def test_antiparallel(self):
        assert cosine_similarity([1, 0], [-1, 0]) == pytest.approx(-1.0, abs=1e-12)

    def test_45_degrees(self):
        # 1/sqrt(2) by hand
        assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(
            1.0 / math.sqrt(2.0), abs=1e-9
        )

    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            v = rng.standard_normal(16) * 10
            assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal(8), rng.standard_normal(8)
        assert cosine_similarity(a, b) == cosine_similarity(b, a)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_similarity([1, 0], [1, 0, 0])

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine_similarity([0, 0], [1, 0])

    @given(finite_vectors, finite_vectors)
    @settings(max_examples=100, deadline=None)
    def test_bounded(self, a, b):
        n = min(len(a), len(b))
        va, vb = np.asarray(a[:n]), np.asarray(b[:n])
        if np.linalg.norm(va) < 1e-6 or np.linalg.norm(vb) < 1e-6:
            return
        assert abs(cosine_similarity(va, vb)) <= 1.0 + 1e-9


class TestZeroShotProbabilities:
    def _class_embs(self, k, d):
        mat = np.zeros((k, d))
        for i in range(k):
            mat[i, i] = 1.0
        return ClassTextEmbeddings.from_matrix(mat, renormalize=False)

    def test_equal_similarities_are_uniform(self):
        # All classes identical => all similarities equal => uniform by symmetry.
        mat = np.tile(normalize(np.ones(8)), (5, 1))
        ce = ClassTextEmbeddings.from_matrix(mat, renormalize=False)
        probs = zero_shot_probabilities(np.ones(8), ce, ZeroShotConfig(temperature=0.07))
        np.testing.assert_allclose(probs, np.full(5, 0.2), atol=1e-12)

    def test_two_class_tau_one(self):
        # sims (1, 0) at tau=1: p0 = e / (e + 1), evaluated directly.
        ce = self._class_embs(2, 2)
        probs = zero_shot_probabilities([1.0, 0.0], ce, ZeroShotConfig(temperature=1.0))
        expected0 = math.e / (math.e + 1.0)
        assert probs[0] == pytest.approx(expected0, abs=1e-12)
        assert probs[1] == pytest.approx(1.0 - expected0, abs=1e-12)
        # Matches the rounded reference values
        assert probs[0] == pytest.approx(0.73106, abs=1e-5)
        assert probs[1] == pytest.approx(0.26894, abs=1e-5)

    def test_two_class_small_tau_stable(self):
        # sims (1, 0) at tau=0.01 => logit gap 100; the loser lands at e^-100.
        ce = self._class_embs(2, 2)
        probs = zero_shot_probabilities([1.0, 0.0], ce, ZeroShotConfig(temperature=0.01))
        assert probs[0] == pytest.approx(1.0, abs=1e-12)
        assert probs[1] == pytest.approx(math.exp(-100.0), rel=1e-9)
        assert probs[1] == pytest.approx(3.72e-44, rel=1e-2)
        assert predict_class(probs) == 0

    def test_sums_to_one(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            k, d = int(rng.integers(2, 12)), int(rng.integers(2, 20))
            ce = ClassTextEmbeddings.from_matrix(rng.standard_normal((k, d)))
            tau = float(rng.uniform(0.005, 2.0))
            probs = zero_shot_probabilities(
                rng.standard_normal(d), ce, ZeroShotConfig(temperature=tau)
            )
            assert abs(probs.sum() - 1.0) < 1e-6
            assert np.all(probs >= 0)

    def test_argmax_invariant_to_temperature(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            d = 16
            ce = ClassTextEmbeddings.from_matrix(rng.standard_normal((6, d)))
            img = rng.standard_normal(d)
            picks = {
                predict_class(zero_shot_probabilities(img, ce, ZeroShotConfig(t)))
                for t in (0.01, 0.07, 1.0)
            }
            assert len(picks) == 1

    def test_shift_invariance_of_softmax(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            logits = rng.standard_normal(9) * 5
            shift = float(rng.uniform(-100, 100))
            np.testing.assert_allclose(
                stable_softmax(logits), stable_softmax(logits + shift), atol=1e-9
            )

    def test_dimension_mismatch(self):
        ce = self._class_embs(3, 4)
        with pytest.raises(DimensionMismatch):
            zero_shot_probabilities([1.0, 0.0], ce)

    def test_zero_image_rejected(self):
        ce = self._class_embs(3, 4)
        with pytest.raises(ZeroVector):
            zero_shot_probabilities([0.0, 0.0, 0.0, 0.0], ce)

    def test_invalid_temperature(self):
        with pytest.raises(InvalidConfig):
            ZeroShotConfig(temperature=0.0)
        with pytest.raises(InvalidConfig):
            ZeroShotConfig(temperature=-1.0)


class TestClassTextEmbeddings:
    def test_rows_must_be_unit(self):
        with pytest.raises(InvalidConfig):
            ClassTextEmbeddings(class_ids=(0, 1), matrix=np.array([[2.0, 0.0], [0.0, 1.0]]))

    def test_from_matrix_renormalizes(self):
        ce = ClassTextEmbeddings.from_matrix(np.array([[2.0, 0.0], [0.0, 3.0]]))
        np.testing.assert_allclose(ce.matrix, np.eye(2), atol=1e-12)

    def test_contiguous_ids_required(self):
        with pytest.raises(InvalidConfig):
            ClassTextEmbeddings(class_ids=(0, 2), matrix=np.eye(2))


class TestPredictClass:
    def test_simple_argmax(self):
        assert predict_class([0.2, 0.5, 0.3]) == 1

    def test_tie_breaks_low_index(self):
        assert predict_class([0.5, 0.5]) == 0

    def test_uniform_breaks_to_zero(self):
        assert predict_class([0.25] * 4) == 0

    def test_empty_rejected(self):
        with pytest.raises(EmptyVector):
            predict_class([])
