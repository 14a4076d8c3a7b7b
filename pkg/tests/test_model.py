"""Model state: weights, configurations, moves, rates, shares."""

import math

import numpy as np
import pytest

from sharekin.model import (
    Configuration,
    ModelParams,
    ShareVector,
    discretize_shares,
    log_weight_sum,
    shares_of,
    site_weight,
    total_exit_rate,
    transfer_rate,
)


class TestModelParams:
    def test_density_and_unit_share(self):
        p = ModelParams(4, 10, 2.0)
        assert p.density == 2.5
        assert p.unit_share == 0.1

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelParams(1, 10)
        with pytest.raises(ValueError):
            ModelParams(5, 4)  # fewer units than sites
        with pytest.raises(ValueError):
            ModelParams(2, 4, -1.0)
        with pytest.raises(ValueError):
            ModelParams(2, 4, math.inf)


class TestSiteWeight:
    def test_integer_exponent_fast_paths(self):
        for m in (1, 2, 3, 17, 1000):
            assert site_weight(m, 0.0) == 1.0
            assert site_weight(m, 1.0) == float(m)
            assert site_weight(m, 2.0) == float(m) * float(m)
            assert site_weight(m, 3.0) == float(m) ** 3

    def test_general_exponent_matches_exp_log(self):
        for m in (1, 2, 5, 400):
            for b in (0.5, 2.5, 4.0):
                assert site_weight(m, b) == pytest.approx(m**b, rel=1e-14)

    def test_log_scale_shifts_weight(self):
        w = site_weight(7, 2.5, log_scale=3.0)
        assert w == pytest.approx(7**2.5 * math.exp(-3.0), rel=1e-14)

    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            site_weight(0, 2.0)

    def test_log_weight_sum_stable(self):
        counts = np.array([3, 5, 9], dtype=np.int64)
        want = math.log(9 + 25 + 81)
        assert log_weight_sum(counts, 2.0) == pytest.approx(want, rel=1e-14)


class TestConfiguration:
    def test_validation(self):
        p = ModelParams(3, 9, 2.0)
        with pytest.raises(ValueError):
            Configuration(p, [3, 3])  # wrong length
        with pytest.raises(ValueError):
            Configuration(p, [0, 4, 5])  # empty site
        with pytest.raises(ValueError):
            Configuration(p, [3, 3, 4])  # wrong total

    def test_cached_weight_sum(self):
        p = ModelParams(3, 9, 2.0)
        c = Configuration(p, [2, 3, 4])
        assert c.cached_weight_sum == pytest.approx(4 + 9 + 16, rel=1e-14)
        assert c.log_weight_sum == pytest.approx(math.log(29), rel=1e-14)

    def test_apply_move_matches_fresh_recompute(self):
        rng = np.random.default_rng(11)
        for b in (0.0, 1.0, 2.0, 3.0, 2.5):
            p = ModelParams(6, 30, b)
            c = Configuration(p, [5] * 6)
            for _ in range(500):
                src = int(rng.integers(0, 6))
                dst = int(rng.integers(0, 6))
                if src == dst or c.counts[src] < 2:
                    continue
                c.apply_move(src, dst)
                fresh = Configuration(p, c.counts.copy())
                assert c.cached_weight_sum == pytest.approx(
                    fresh.cached_weight_sum, rel=1e-12)
            assert int(c.counts.sum()) == 30
            assert c.counts.min() >= 1

    def test_apply_move_guards(self):
        p = ModelParams(3, 6, 2.0)
        c = Configuration(p, [1, 2, 3])
        with pytest.raises(ValueError):
            c.apply_move(1, 1)
        with pytest.raises(ValueError):
            c.apply_move(0, 1)  # single-unit source

    def test_second_moment(self):
        p = ModelParams(2, 4, 2.0)
        c = Configuration(p, [1, 3])
        # <A^2> = (1 + 9) / (2 * 16)
        assert c.second_moment() == pytest.approx(10 / 32, rel=1e-15)

    def test_copy_is_independent(self):
        p = ModelParams(3, 9, 2.0)
        c = Configuration(p, [2, 3, 4])
        d = c.copy()
        d.apply_move(2, 0)
        assert list(c.counts) == [2, 3, 4]
        assert list(d.counts) == [3, 3, 3]

    def test_extreme_exponent_uses_scaled_weights(self):
        # b log m far beyond float range: rates must stay well-defined
        p = ModelParams(3, 3 * 10**6, 40.0)
        c = Configuration(p, [10**6, 10**6, 10**6])
        assert math.isfinite(c.log_weight_sum)
        r = transfer_rate(c, 0, 1)
        assert math.isfinite(r) and r > 0


class TestTransferRate:
    def test_biquadratic_rate(self):
        p = ModelParams(3, 6, 2.0)
        c = Configuration(p, [1, 2, 3])
        s = 1 + 4 + 9
        assert transfer_rate(c, 1, 2) == pytest.approx(4 * 9 / s, rel=1e-14)
        assert transfer_rate(c, 2, 0) == pytest.approx(9 * 1 / s, rel=1e-14)

    def test_single_unit_source_is_frozen(self):
        p = ModelParams(3, 6, 2.0)
        c = Configuration(p, [1, 2, 3])
        assert transfer_rate(c, 0, 1) == 0.0

    def test_same_site_rejected(self):
        p = ModelParams(3, 6, 2.0)
        c = Configuration(p, [1, 2, 3])
        with pytest.raises(ValueError):
            transfer_rate(c, 1, 1)

    def test_total_exit_rate_is_pair_sum(self):
        p = ModelParams(4, 12, 2.0)
        c = Configuration(p, [1, 2, 4, 5])
        want = sum(
            transfer_rate(c, s, d)
            for s in range(4)
            for d in range(4)
            if s != d
        )
        assert total_exit_rate(c) == pytest.approx(want, rel=1e-12)


class TestShareVector:
    def test_validation(self):
        with pytest.raises(ValueError):
            ShareVector(np.array([0.5, 0.6]))  # sum != 1
        with pytest.raises(ValueError):
            ShareVector(np.array([1.0, 0.0]))  # zero entry
        with pytest.raises(ValueError):
            ShareVector(np.array([]))

    def test_from_values_normalizes(self):
        v = ShareVector.from_values([2.0, 3.0, 5.0], label=1962)
        assert np.allclose(v.shares, [0.2, 0.3, 0.5])
        assert v.label == 1962
        assert len(v) == 3

    def test_shares_of_configuration(self):
        p = ModelParams(3, 10, 2.0)
        c = Configuration(p, [2, 3, 5])
        v = shares_of(c)
        assert np.allclose(v.shares, [0.2, 0.3, 0.5])


class TestDiscretizeShares:
    def test_exact_ratio_round_trip(self):
        counts = np.array([3, 7, 15, 25], dtype=np.int64)
        m = int(counts.sum())
        out = discretize_shares(counts / m, m)
        assert np.array_equal(out, counts)

    def test_largest_remainder(self):
        # targets 1.4, 2.4, 3.2 for M = 7: floor gives 6, largest remainder
        # (index 0 on a tie between 0 and 1; here 0.4 == 0.4, lower index wins)
        out = discretize_shares(np.array([0.2, 2.4 / 7, 3.2 / 7]), 7)
        assert out.sum() == 7
        assert out.min() >= 1
        assert np.array_equal(out, [2, 2, 3])

    def test_every_site_keeps_a_unit(self):
        # a tiny share would floor to zero; the repair pass must lift it
        out = discretize_shares(np.array([1e-9, 0.5, 0.5 - 1e-9]), 10)
        assert out.min() >= 1
        assert out.sum() == 10

    def test_validation(self):
        with pytest.raises(ValueError):
            discretize_shares(np.array([0.5, 0.5]), 1)
        with pytest.raises(ValueError):
            discretize_shares(np.array([0.5, -0.5]), 4)
