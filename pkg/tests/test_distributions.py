import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from hetprobit.distributions import (
    RngStream,
    TruncationRegion,
    categorical_rows,
    logistic_scale,
    sample_categorical,
    sample_logistic,
    sample_mvn,
    sample_truncated_normal,
    std_normal_cdf,
    std_normal_quantile,
)
from hetprobit.errors import DomainError


def mp_phi(z):
    mpmath.mp.dps = 50
    return mpmath.erfc(-mpmath.mpf(z) / mpmath.sqrt(2)) / 2


class TestStdNormalCdf:
    def test_center(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_upper_tail(self):
        p = std_normal_cdf(8.0)
        assert 1 - 1e-14 < p <= 1.0

    def test_quantile_point(self):
        assert std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)

    @pytest.mark.parametrize("z", [-30.0, -8.5, -3.0, -0.3, 0.7, 2.5, 6.0])
    def test_against_high_precision_erf(self, z):
        assert std_normal_cdf(z) == pytest.approx(float(mp_phi(z)), abs=1e-12, rel=1e-12)

    def test_monotone(self):
        z = np.linspace(-40, 40, 20001)
        assert np.all(np.diff(std_normal_cdf(z)) >= 0)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(DomainError):
            std_normal_cdf(bad)

    @given(st.floats(-6, 6))
    def test_round_trip(self, z):
        assert abs(std_normal_quantile(std_normal_cdf(z)) - z) <= 1e-8


def right_tail_cdf(x, a):
    """P(X <= x | X >= a) for X ~ N(0, 1), computed on the log scale."""
    x = np.maximum(x, a)
    return -np.expm1(special.log_ndtr(-x) - special.log_ndtr(-a))


class TestTruncatedNormal:
    def test_half_normal_mean(self):
        z = sample_truncated_normal(RngStream(1), np.zeros(10**6), 1.0, TruncationRegion.RIGHT)
        assert z.mean() == pytest.approx(math.sqrt(2 / math.pi), abs=0.003)
        assert np.all(z >= 0)

    def test_extreme_tail_left(self):
        z = sample_truncated_normal(RngStream(2), np.full(10**5, 10.0), 1.0, TruncationRegion.LEFT)
        assert np.all(z < 0)
        assert np.all(np.isfinite(z))
        # mean of N(10,1) given < 0 is about -1/10
        assert z.mean() == pytest.approx(-0.098, abs=0.005)

    def test_inactive_truncation(self):
        z = sample_truncated_normal(RngStream(3), np.full(10**6, 5.0), 1.0, "[0,inf)")
        assert z.mean() == pytest.approx(5.0, abs=0.01)

    def test_scalar(self):
        z = sample_truncated_normal(RngStream(3), 0.0, 2.0, TruncationRegion.LEFT)
        assert isinstance(z, float) and z < 0

    @pytest.mark.parametrize("var", [0.0, -1.0, np.nan])
    def test_bad_variance(self, var):
        with pytest.raises(DomainError):
            sample_truncated_normal(RngStream(0), 0.0, var, TruncationRegion.RIGHT)

    @pytest.mark.parametrize(
        "mean,var,region",
        [
            (0.0, 1.0, "right"),
            (2.0, 0.5, "left"),
            (-3.0, 4.0, "right"),
            (-12.0, 1.0, "right"),  # bound 12 sd out: rejection branch
            (40.0, 2.0, "left"),
            (0.3, 100.0, "left"),
            (-5.5, 1.0, "right"),
            (-4.9, 1.0, "right"),
        ],
    )
    def test_ks_against_analytic_cdf(self, mean, var, region):
        right = region == "right"
        z = sample_truncated_normal(RngStream(11), np.full(10**5, mean), var, right)
        sd = math.sqrt(var)
        if right:
            assert np.all(z >= 0)
            a = -mean / sd
            u = right_tail_cdf(z / sd + a, a)  # z/sd = x - a
        else:
            assert np.all(z < 0)
            a = mean / sd
            u = right_tail_cdf(-z / sd + a, a)
        # after the probability-integral transform the draws must be uniform
        for alt in ("less", "greater"):
            assert stats.kstest(u, "uniform", alternative=alt).pvalue > 1e-3

    def test_regions_elementwise(self):
        y = np.array([True, False] * 500)
        z = sample_truncated_normal(RngStream(4), np.linspace(-3, 3, 1000), 1.0, y)
        assert np.all(z[y] >= 0) and np.all(z[~y] < 0)


class TestMvn:
    def test_identity_covariance(self):
        rng = RngStream(5)
        draws = np.array([sample_mvn(rng, np.zeros(2), np.eye(2)) for _ in range(10**5)])
        assert np.allclose(np.cov(draws.T), np.eye(2), atol=0.02)

    def test_zero_variance_direction(self):
        cov = np.array([[1.0, 0.0, 0.5], [0.0, 0.0, 0.0], [0.5, 0.0, 1.0]])
        mean = np.array([1.0, 7.25, -2.0])
        for s in range(20):
            assert sample_mvn(RngStream(s), mean, cov)[1] == 7.25

    def test_correlated_mean(self):
        rng = RngStream(6)
        draws = np.array([sample_mvn(rng, [1.0, 2.0], [[2.0, 1.0], [1.0, 2.0]]) for _ in range(10**5)])
        assert np.allclose(draws.mean(axis=0), [1.0, 2.0], atol=0.01)

    def test_deterministic(self):
        a = sample_mvn(RngStream(9, 2), [0, 0], [[1, 0.3], [0.3, 1]])
        b = sample_mvn(RngStream(9, 2), [0, 0], [[1, 0.3], [0.3, 1]])
        assert np.array_equal(a, b)

    def test_indefinite_matrix_fails(self):
        from hetprobit.errors import FactorizationError

        with pytest.raises(FactorizationError) as info:
            sample_mvn(RngStream(0), [0, 0], [[1.0, 2.0], [2.0, 1.0]])
        assert info.value.min_eigenvalue == pytest.approx(-1.0)


class TestCategorical:
    def test_degenerate(self):
        rng = RngStream(0)
        assert all(sample_categorical(rng, [1, 0, 0]) == 0 for _ in range(1000))

    def test_symmetric(self):
        draws = sample_categorical(RngStream(1), [1, 1], size=10**5)
        assert np.mean(draws == 0) == pytest.approx(0.5, abs=0.005)

    def test_frequencies(self):
        draws = sample_categorical(RngStream(2), [1, 2, 7], size=10**5)
        freq = np.bincount(draws, minlength=3) / draws.size
        assert np.allclose(freq, [0.1, 0.2, 0.7], atol=0.01)

    @pytest.mark.parametrize("w", [[0, 0, 0], [1, -1, 1], [np.nan, 1]])
    def test_bad_weights(self, w):
        with pytest.raises(DomainError):
            sample_categorical(RngStream(0), w)

    def test_scale_invariance(self):
        w = np.array([0.5, 3.0, 1.5, 0.0, 2.0])
        a = sample_categorical(RngStream(3), w, size=10**5)
        b = sample_categorical(RngStream(4), 123.0 * w, size=10**5)
        table = np.array([np.bincount(a, minlength=5), np.bincount(b, minlength=5)])
        table = table[:, table.sum(axis=0) > 0]
        assert stats.chi2_contingency(table).pvalue > 1e-3

    def test_rows_match_vector_version(self):
        w = np.array([[1.0, 2.0, 7.0]] * 10**5)
        draws = categorical_rows(RngStream(5), w)
        freq = np.bincount(draws, minlength=3) / draws.size
        assert np.allclose(freq, [0.1, 0.2, 0.7], atol=0.01)

    def test_rows_skip_zero_weights(self):
        w = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]] * 1000)
        draws = categorical_rows(RngStream(6), w)
        assert np.array_equal(draws, np.tile([1, 2, 0], 1000))


class TestLogistic:
    def test_scale(self):
        assert logistic_scale(1.0) == pytest.approx(math.sqrt(3) / math.pi)
        assert logistic_scale(1.0) == pytest.approx(0.55133, abs=1e-5)

    def test_moments(self):
        v = sample_logistic(RngStream(7), 0.0, 1.0, size=10**6)
        assert np.median(v) == pytest.approx(0.0, abs=0.005)
        assert v.var() == pytest.approx(1.0, abs=0.01)

    def test_bad_variance(self):
        with pytest.raises(DomainError):
            sample_logistic(RngStream(0), 0.0, 0.0)


class TestRngStream:
    def test_reproducible_across_samplers(self):
        def run(rng):
            return np.concatenate(
                [
                    np.atleast_1d(sample_truncated_normal(rng, np.zeros(5), 1.0, TruncationRegion.RIGHT)),
                    sample_mvn(rng, [0, 0], np.eye(2)),
                    sample_categorical(rng, [1, 2, 3], size=5),
                    sample_logistic(rng, 0, 1, size=5),
                ]
            )

        assert np.array_equal(run(RngStream(42, 3)), run(RngStream(42, 3)))
        assert not np.array_equal(run(RngStream(42, 3)), run(RngStream(42, 4)))

    def test_streams_uncorrelated(self):
        a = RngStream(1, 0).generator.standard_normal(10**5)
        b = RngStream(1, 1).generator.standard_normal(10**5)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.015

    def test_child(self):
        assert RngStream(3, (1,)).child(2).stream_id == (1, 2)
