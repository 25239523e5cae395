import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subgnn.errors import DomainError, InputError
from subgnn.metrics import auroc, binary_auroc, decisions, micro_f1


def pairwise_auroc(scores, labels):
    """O(n^2) oracle: fraction of (pos, neg) pairs ranked correctly, ties count half."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def pooled_f1(pred, y):
    tp = fp = fn = 0
    for pr, yr in zip(np.atleast_2d(pred).tolist(), np.atleast_2d(y).tolist()):
        for a, b in zip(pr, yr):
            tp += a == 1 and b == 1
            fp += a == 1 and b == 0
            fn += a == 0 and b == 1
    return 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0


class TestMicroF1:
    def test_perfect(self):
        assert micro_f1(np.array([0, 1, 2]), np.array([0, 1, 2])) == 1.0

    def test_all_wrong_multiclass(self):
        assert micro_f1(np.array([1, 2, 0]), np.array([0, 1, 2])) == 0.0

    def test_multilabel_hand_count(self):
        # TP=2, FP=1, FN=1
        pred = np.array([[1, 1, 0], [1, 0, 0]])
        y = np.array([[1, 0, 1], [1, 0, 0]])
        assert micro_f1(pred, y) == pytest.approx(4 / 6, abs=1e-12)
        assert micro_f1(pred, y) == pytest.approx(0.6667, abs=5e-5)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            micro_f1(np.array([0, 1]), np.array([0, 1, 2]))

    def test_no_positives_is_zero(self):
        assert micro_f1(np.zeros((2, 3), dtype=int), np.zeros((2, 3), dtype=int)) == 0.0

    def test_multiclass_equals_accuracy(self):
        r = np.random.default_rng(0)
        p, y = r.integers(0, 4, 50), r.integers(0, 4, 50)
        assert micro_f1(p, y) == pytest.approx(np.mean(p == y))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5))
    def test_duplication_invariance(self, seed, reps):
        r = np.random.default_rng(seed)
        p, y = r.integers(0, 2, (12, 3)), r.integers(0, 2, (12, 3))
        assert micro_f1(np.tile(p, (reps, 1)), np.tile(y, (reps, 1))) == pytest.approx(micro_f1(p, y))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_pooled_count(self, seed):
        r = np.random.default_rng(seed)
        p, y = r.integers(0, 2, (8, 4)), r.integers(0, 2, (8, 4))
        assert micro_f1(p, y) == pytest.approx(pooled_f1(p, y))


class TestDecisions:
    def test_argmax(self):
        assert decisions(np.array([[0.1, 0.9], [0.7, 0.3]]), False).tolist() == [1, 0]

    def test_threshold(self):
        s = np.array([[0.6, 0.4], [0.5, 0.51]])
        assert decisions(s, True).tolist() == [[1, 0], [0, 1]]
        assert decisions(s, True, threshold=0.3).tolist() == [[1, 1], [1, 1]]


class TestAuroc:
    def test_perfect_and_reversed(self):
        y = np.array([0, 0, 1, 1])
        assert binary_auroc([0.1, 0.2, 0.8, 0.9], y) == 1.0
        assert binary_auroc([0.9, 0.8, 0.2, 0.1], y) == 0.0

    def test_all_tied(self):
        assert binary_auroc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_single_class_binary(self):
        with pytest.raises(DomainError):
            binary_auroc([0.1, 0.2], [1, 1])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 100_000))
    def test_matches_pair_oracle(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(2, 30))
        y = r.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = r.integers(0, 5, n) / 4.0  # coarse scores force ties
        assert binary_auroc(s, y) == pytest.approx(pairwise_auroc(s.tolist(), y.tolist()), abs=1e-12)

    def test_macro_multiclass_matches_oracle(self):
        r = np.random.default_rng(3)
        s = r.random((40, 3))
        y = r.integers(0, 3, 40)
        want = np.mean([pairwise_auroc(s[:, j].tolist(), (y == j).tolist()) for j in range(3)])
        assert auroc(s, y) == pytest.approx(want)

    def test_micro_pools_pairs(self):
        r = np.random.default_rng(4)
        s = r.random((20, 3))
        Y = r.integers(0, 2, (20, 3))
        assert auroc(s, Y, "micro") == pytest.approx(pairwise_auroc(s.ravel().tolist(), Y.ravel().tolist()))

    def test_single_class_column_skipped_with_warning(self):
        s = np.array([[0.9, 0.1], [0.2, 0.3], [0.8, 0.5]])
        Y = np.array([[1, 0], [0, 0], [1, 0]])
        with pytest.warns(RuntimeWarning, match="column 1"):
            assert auroc(s, Y) == 1.0

    def test_all_columns_single_class(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(DomainError):
                auroc(np.random.default_rng(0).random((3, 2)), np.ones((3, 2), dtype=int))

    def test_unknown_average(self):
        with pytest.raises(InputError):
            auroc(np.array([[0.2, 0.8]] * 2), np.array([0, 1]), "weighted")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_transform_invariance(self, seed):
        r = np.random.default_rng(seed)
        s = r.random(25)
        y = np.r_[0, 1, r.integers(0, 2, 23)]
        assert binary_auroc(s, y) == pytest.approx(binary_auroc(np.exp(3 * s) - 2, y))
