"""Tests for the CUSUM, Wilcoxon, and self-normalized statistic kernels."""

import numpy as np
import pytest

from lmsvtest.dist import RngStream
from lmsvtest.stats import (
    Transform,
    TrimSpec,
    cusum,
    cusum_by_definition,
    decide,
    ranks,
    sn_cusum,
    sn_cusum_by_definition,
    sn_wilcoxon,
    sn_wilcoxon_by_definition,
    wilcoxon,
    wilcoxon_by_definition,
)


def _rel_close(a, b, tol=1e-10):
    scale = max(abs(a), abs(b), 1e-30)
    return abs(a - b) / scale <= tol


class TestTransforms:
    def test_log_square_is_twice_log_abs(self):
        x = np.array([0.5, -2.0, 3.0])
        assert np.allclose(Transform.LOG_SQUARE.apply(x), 2 * Transform.LOG_ABS.apply(x))

    def test_log_transforms_reject_zero(self):
        with pytest.raises(ValueError):
            Transform.LOG_ABS.apply(np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            Transform.LOG_SQUARE.apply(np.array([0.0]))


class TestCusum:
    def test_constant_series_vanishes(self):
        stat = cusum(np.full(50, 3.7))
        assert stat.sup_value == pytest.approx(0.0, abs=1e-12)

    def test_hand_profile(self):
        # xs = (0, 0, 1, 1): |S_k - k/2| = (0.5, 1, 0.5, 0), sup at k = 2.
        stat = cusum(np.array([0.0, 0.0, 1.0, 1.0]))
        assert np.allclose(stat.profile, [0.5, 1.0, 0.5, 0.0])
        assert stat.sup_value == pytest.approx(1.0)
        assert stat.argmax_k == 2

    def test_profile_vanishes_at_n(self):
        x = RngStream(30).generator().standard_normal(64)
        assert cusum(x).profile[-1] == pytest.approx(0.0, abs=1e-10)

    def test_matches_definition(self):
        rng = RngStream(31).generator()
        for _ in range(20):
            x = rng.standard_normal(97)
            fast, slow = cusum(x), cusum_by_definition(x)
            assert _rel_close(fast.sup_value, slow.sup_value)
            assert fast.argmax_k == slow.argmax_k

    def test_scale_equivariance(self):
        x = RngStream(32).generator().standard_normal(128)
        c = -3.25
        assert _rel_close(cusum(c * x).sup_value, abs(c) * cusum(x).sup_value, 1e-12)

    def test_reversal_maps_argmax(self):
        x = RngStream(33).generator().standard_normal(101)
        fwd, rev = cusum(x), cusum(x[::-1])
        assert _rel_close(fwd.sup_value, rev.sup_value, 1e-12)
        assert rev.argmax_k == x.size - fwd.argmax_k


class TestWilcoxon:
    def test_monotone_series_hand_value(self):
        # Strictly increasing data: every cross pair contributes 1/2, so
        # W(k) = k (n - k) / 2; at k = n/2 that is k^2 / 2.
        n = 10
        stat = wilcoxon(np.arange(1.0, n + 1.0))
        k = n // 2
        assert stat.profile[k - 1] == pytest.approx(k**2 / 2.0)
        slow = wilcoxon_by_definition(np.arange(1.0, n + 1.0))
        assert np.allclose(stat.profile, slow.profile)

    def test_vanishes_at_full_cut(self):
        x = RngStream(34).generator().standard_normal(40)
        assert wilcoxon(x).profile[-1] == pytest.approx(0.0)

    def test_rank_formula_matches_double_sum(self):
        rng = RngStream(35).generator()
        for _ in range(200):
            x = rng.standard_normal(64)
            fast, slow = wilcoxon(x), wilcoxon_by_definition(x)
            assert np.array_equal(fast.profile, slow.profile)

    def test_rank_identity_exhaustive_small_n(self):
        rng = RngStream(36).generator()
        for n in range(2, 65):
            x = rng.standard_normal(n)
            fast, slow = wilcoxon(x), wilcoxon_by_definition(x)
            assert np.array_equal(fast.profile, slow.profile)

    def test_tied_data_falls_back_to_double_sum(self):
        x = np.array([1.0, 2.0, 2.0, 0.5, 2.0, 3.0, 1.0, 4.0])
        fast, slow = wilcoxon(x), wilcoxon_by_definition(x)
        assert np.allclose(fast.profile, slow.profile)

    def test_monotone_transform_invariance(self):
        x = RngStream(37).generator().standard_normal(80)
        direct = wilcoxon(x)
        transformed = wilcoxon(np.exp(x))
        assert np.array_equal(direct.profile, transformed.profile)


class TestRanks:
    def test_ranks_count_leq(self):
        x = np.array([0.3, -1.0, 2.0, 0.1])
        assert np.array_equal(ranks(x), [3, 1, 4, 2])

    def test_ranks_with_ties_use_max_convention(self):
        x = np.array([1.0, 2.0, 2.0, 0.0])
        assert np.array_equal(ranks(x), [2, 4, 4, 1])


class TestSnCusum:
    def test_hand_value(self):
        # xs = 1..6 at k = 3: numerator 4.5, denominator sqrt(2/3).
        stat = sn_cusum(np.arange(1.0, 7.0), trim=TrimSpec(tau1=0.5, tau2=0.51))
        assert stat.k_grid[0] == 3
        assert stat.profile[0] == pytest.approx(4.5 / np.sqrt(2.0 / 3.0), rel=1e-12)
        assert stat.profile[0] == pytest.approx(5.51135, abs=5e-6)

    @pytest.mark.parametrize("value", [2.5, 0.1, 1e12])
    def test_constant_series_degenerate(self, value):
        stat = sn_cusum(np.full(100, value))
        assert stat.degenerate
        assert np.isinf(stat.sup_value)

    def test_piecewise_constant_series_degenerate(self):
        x = np.concatenate([np.zeros(50), np.ones(50)])
        stat = sn_cusum(x, trim=TrimSpec(tau1=0.5, tau2=0.51))
        assert stat.degenerate
        assert np.isinf(stat.sup_value)

    def test_matches_definition(self):
        rng = RngStream(38).generator()
        trim = TrimSpec()
        for n in (16, 64, 128):
            for _ in range(30):
                x = rng.standard_normal(n)
                fast = sn_cusum(x, trim=trim)
                slow = sn_cusum_by_definition(x, trim=trim)
                assert np.max(np.abs(fast.profile - slow.profile) / np.maximum(slow.profile, 1e-30)) < 1e-10
                assert fast.argmax_k == slow.argmax_k

    def test_affine_invariance(self):
        x = RngStream(39).generator().standard_normal(200)
        base = sn_cusum(x)
        moved = sn_cusum(-2.5 * x + 3.75)
        assert np.max(np.abs(base.profile - moved.profile)) < 1e-9 * max(1.0, base.sup_value)

    def test_triple_loop_literal_small_case(self):
        # Pure-Python evaluation of the displayed formula on a tiny series,
        # double-checking the vectorized oracle itself.
        x = RngStream(40).generator().standard_normal(12)
        trim = TrimSpec(tau1=0.25, tau2=0.75)
        n = x.size
        lo, hi = trim.window(n)
        expected = []
        for k in range(lo, hi + 1):
            numer = abs(sum(x[:k]) - k / n * sum(x))
            left = 0.0
            mean_left = sum(x[:k]) / k
            for t in range(1, k + 1):
                s = sum(x[h] - mean_left for h in range(t))
                left += s * s
            right = 0.0
            mean_right = sum(x[k:]) / (n - k)
            for t in range(k + 1, n + 1):
                s = sum(x[h - 1] - mean_right for h in range(k + 1, t + 1))
                right += s * s
            expected.append(numer / np.sqrt((left + right) / n))
        fast = sn_cusum(x, trim=trim)
        assert np.allclose(fast.profile, expected, rtol=1e-10)


class TestSnWilcoxon:
    def test_equals_sn_cusum_on_ranks_of_monotone_series(self):
        x = np.sort(RngStream(41).generator().standard_normal(60))
        stat = sn_wilcoxon(x)
        ref = sn_cusum(np.arange(1.0, 61.0))
        assert np.allclose(stat.profile, ref.profile, rtol=1e-12)

    def test_matches_definition(self):
        rng = RngStream(42).generator()
        for _ in range(30):
            x = rng.standard_normal(100)
            fast = sn_wilcoxon(x)
            slow = sn_wilcoxon_by_definition(x)
            assert np.max(np.abs(fast.profile - slow.profile) / np.maximum(slow.profile, 1e-30)) < 1e-10

    def test_invariant_under_strictly_increasing_transform(self):
        x = RngStream(43).generator().standard_normal(90)
        a = sn_wilcoxon(x)
        b = sn_wilcoxon(np.exp(x) + x**3)
        assert np.array_equal(a.profile, b.profile)
        assert a.argmax_k == b.argmax_k


class TestDecide:
    def test_reject_flag(self):
        stat = cusum(np.array([0.0, 0.0, 5.0, 5.0]))
        out = decide(stat, "cusum", normalization=2.0, critical_value=1.0)
        assert out.statistic == pytest.approx(stat.sup_value / 2.0)
        assert out.reject == (out.statistic > 1.0)

    def test_no_critical_value_means_no_decision(self):
        stat = cusum(np.array([1.0, 2.0, 1.5, 0.5]))
        out = decide(stat, "cusum")
        assert out.reject is None
        assert out.critical_value is None
