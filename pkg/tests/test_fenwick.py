"""Weighted sampling index: prefix sums, search, and kernel bit-identity."""

import numpy as np
import pytest

from sharekin import _kernel
from sharekin.fenwick import WeightIndex
from sharekin.model import site_weight


def _linear_find(weights, target):
    """Smallest index with cumulative weight > target, by linear scan."""
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if target < acc:
            return i
    return len(weights) - 1


class TestWeightIndex:
    def test_validation(self):
        with pytest.raises(ValueError):
            WeightIndex([])
        with pytest.raises(ValueError):
            WeightIndex([1.0, -0.5])
        with pytest.raises(ValueError):
            WeightIndex([1.0, float("nan")])

    def test_prefix_sums_match_cumsum(self):
        rng = np.random.default_rng(3)
        for n in (1, 2, 3, 7, 8, 33, 100):
            w = rng.random(n)
            idx = WeightIndex(w)
            cs = np.cumsum(w)
            for k in range(n + 1):
                want = 0.0 if k == 0 else cs[k - 1]
                assert idx.prefix_sum(k) == pytest.approx(want, rel=1e-12, abs=1e-15)
            assert idx.total == pytest.approx(cs[-1], rel=1e-12)

    def test_get_returns_single_weight(self):
        w = [0.5, 2.0, 0.0, 3.25]
        idx = WeightIndex(w)
        for i, wi in enumerate(w):
            assert idx.get(i) == pytest.approx(wi, abs=1e-12)

    def test_find_matches_linear_scan(self):
        rng = np.random.default_rng(4)
        for n in (1, 2, 5, 16, 17, 100):
            w = rng.random(n) * rng.integers(0, 2, n)  # some exact zeros
            if w.sum() == 0:
                w[0] = 1.0
            idx = WeightIndex(w)
            for u in rng.random(200):
                t = u * idx.total
                assert idx.find(t) == _linear_find(w, t)

    def test_find_never_returns_zero_weight_interior(self):
        w = [0.0, 1.0, 0.0, 2.0, 0.0]
        idx = WeightIndex(w)
        rng = np.random.default_rng(5)
        hits = {idx.find(u * idx.total) for u in rng.random(2000)}
        assert hits <= {1, 3}

    def test_sample_frequencies(self):
        w = np.array([1.0, 2.0, 3.0, 4.0])
        idx = WeightIndex(w)
        rng = np.random.default_rng(6)
        draws = np.array([idx.sample(u) for u in rng.random(40000)])
        freq = np.bincount(draws, minlength=4) / len(draws)
        assert np.allclose(freq, w / w.sum(), atol=0.01)

    def test_update_then_queries(self):
        rng = np.random.default_rng(7)
        w = rng.random(20)
        idx = WeightIndex(w)
        for _ in range(300):
            i = int(rng.integers(0, 20))
            delta = float(rng.normal()) * 0.1
            if w[i] + delta < 0:
                continue
            idx.update(i, delta)
            w[i] += delta
        assert idx.total == pytest.approx(w.sum(), rel=1e-9)
        for i in range(20):
            assert idx.get(i) == pytest.approx(w[i], abs=1e-9)

    def test_update_bounds(self):
        idx = WeightIndex([1.0, 2.0])
        with pytest.raises(IndexError):
            idx.update(2, 1.0)
        with pytest.raises(IndexError):
            idx.update(-1, 1.0)

    def test_checked_total_passes_when_consistent(self):
        idx = WeightIndex([1.0, 2.0, 3.0])
        assert idx.checked_total() == pytest.approx(6.0)

    def test_checked_total_detects_drift(self):
        idx = WeightIndex([1.0, 2.0, 3.0])
        idx.total += 1.0  # simulate accumulated float drift past tolerance
        with pytest.raises(AssertionError):
            idx.checked_total()


class TestKernelTreeBitIdentity:
    def test_build_matches_rebuild_exactly(self):
        rng = np.random.default_rng(8)
        for n in (1, 2, 3, 8, 9, 31, 64, 100):
            counts = rng.integers(1, 10**6, n).astype(np.int64)
            for b in (0.0, 1.0, 2.0, 3.0, 2.5):
                idx = WeightIndex([site_weight(int(m), b) for m in counts])
                tree = np.zeros(n + 1)
                total = _kernel._tree_build(tree, counts, b, 0.0)
                assert np.array_equal(tree, idx.tree)
                assert total == idx.total

    def test_find_matches_kernel_find(self):
        rng = np.random.default_rng(9)
        for n in (2, 5, 16, 100):
            counts = rng.integers(1, 50, n).astype(np.int64)
            idx = WeightIndex([float(m) ** 2 for m in counts])
            tree = np.zeros(n + 1)
            _kernel._tree_build(tree, counts, 2.0, 0.0)
            top_bit = 1 << n.bit_length()
            for u in rng.random(500):
                t = u * idx.total
                assert int(_kernel._tree_find(tree, n, t, top_bit)) == idx.find(t)

    def test_update_matches_kernel_update(self):
        n = 24
        rng = np.random.default_rng(10)
        counts = rng.integers(1, 30, n).astype(np.int64)
        idx = WeightIndex([float(m) ** 2 for m in counts])
        tree = np.zeros(n + 1)
        _kernel._tree_build(tree, counts, 2.0, 0.0)
        for _ in range(200):
            i = int(rng.integers(0, n))
            delta = float(rng.normal())
            idx.update(i, delta)
            _kernel._tree_update(tree, n, i, delta)
            assert np.array_equal(tree, idx.tree)
