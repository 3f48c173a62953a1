import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxtail import coefficients as coef
from maxtail.errors import (
    EmptySet,
    InsufficientResiduals,
    LrdModel,
    OutOfRange,
    SetsOverlap,
    SetTooLarge,
)
from maxtail.models import (
    Armax,
    FrechetAlpha,
    Independent,
    LagSet,
    MaxMovingMaxima,
    PowerLawMaxMovingMaxima,
    indicator_cov,
)

import oracles

M3 = MaxMovingMaxima((0.5, 0.5))
M3B = MaxMovingMaxima((0.5, 0.3, 0.2))


def weights_strategy(max_len=6):
    return st.lists(st.floats(0.0, 1.0), min_size=1, max_size=max_len).filter(lambda v: sum(v) > 1e-3)


def as_model(raw):
    w = np.asarray(raw, dtype=float)
    return MaxMovingMaxima(tuple(w / w.sum()))


class TestTheta:
    def test_independent(self):
        assert coef.theta(Independent(), [0, 7]) == 2.0

    def test_m3_pair(self):
        assert coef.theta(M3, [0, 1]) == pytest.approx(oracles.mm_theta([0.5, 0.5], (0, 1)))
        assert coef.theta(M3, [0, 1]) == pytest.approx(1.5, abs=1e-15)

    @pytest.mark.parametrize("model", [Independent(), Armax(0.3), M3, PowerLawMaxMovingMaxima(2.5, truncation=300)])
    def test_singleton(self, model):
        assert coef.theta(model, [4]) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("h", [1, 2, 5])
    def test_armax_pairwise(self, h):
        assert coef.theta(Armax(0.6), [0, h]) == pytest.approx(2 - 0.6**h, abs=1e-14)

    def test_armax_matches_negative_log_fdd(self):
        from maxtail.models import fdd_cdf

        S = (0, 2, 3, 7)
        assert coef.theta(Armax(0.45), S) == pytest.approx(-math.log(fdd_cdf(Armax(0.45), S, [1.0] * 4)), rel=1e-12)
        assert coef.theta(Armax(0.45), S) == pytest.approx(oracles.mm_theta(oracles.armax_weights(0.45), S), rel=1e-12)

    def test_empty(self):
        with pytest.raises(EmptySet):
            coef.theta(M3, [])

    @settings(max_examples=60, deadline=None)
    @given(raw=weights_strategy(), S=st.sets(st.integers(0, 8), min_size=1, max_size=5))
    def test_in_range(self, raw, S):
        th = coef.theta(as_model(raw), S)
        assert 1.0 - 1e-12 <= th <= len(S) + 1e-12


class TestChi:
    @pytest.mark.parametrize("h", [1, 3])
    @pytest.mark.parametrize("model", [Armax(0.7), M3B, Independent()])
    def test_pair_equals_two_minus_theta(self, model, h):
        assert coef.chi_joint(model, [0, h]) == pytest.approx(2 - coef.theta(model, [0, h]), abs=1e-13)

    def test_independent(self):
        assert coef.chi_joint(Independent(), [0, 1, 4]) == 0.0

    def test_m3_pair(self):
        assert oracles.mm_chi([0.5, 0.5], (0, 1)) == 0.5
        assert coef.chi_joint(M3, [0, 1]) == pytest.approx(0.5, abs=1e-15)

    def test_singleton(self):
        assert coef.chi_joint(Armax(0.2), [0]) == pytest.approx(1.0)

    def test_too_large(self):
        with pytest.raises(SetTooLarge):
            coef.chi_joint(M3, range(21))

    @settings(max_examples=80, deadline=None)
    @given(raw=weights_strategy(), S=st.sets(st.integers(0, 9), min_size=1, max_size=6))
    def test_two_routes_agree(self, raw, S):
        m = as_model(raw)
        S = sorted(S)
        ie = oracles.incl_excl_chi(lambda C: oracles.mm_theta(m.weights, C), S)
        assert coef.chi_joint(m, S) == pytest.approx(coef.chi_direct(m, S), abs=1e-10)
        assert coef.chi_direct(m, S) == pytest.approx(ie, abs=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(raw=weights_strategy(), S=st.sets(st.integers(0, 9), min_size=2, max_size=5))
    def test_bounded_by_pairs(self, raw, S):
        m = as_model(raw)
        S = sorted(S)
        pair_min = min(2 - coef.theta(m, [0, abs(s - t)]) for s, t in itertools.combinations(S, 2))
        assert -1e-12 <= coef.chi_joint(m, S) <= pair_min + 1e-12 <= 1.0 + 2e-12


class TestChiCross:
    @pytest.mark.parametrize("h", [1, 2, 4])
    def test_pair(self, h):
        assert coef.chi_cross(Armax(0.5), [0], [h]) == pytest.approx(2 - coef.theta(Armax(0.5), [0, h]), abs=1e-13)

    def test_independent(self):
        assert coef.chi_cross(Independent(), [0, 2], [1, 3]) == pytest.approx(0.0, abs=1e-14)

    def test_overlap(self):
        with pytest.raises(SetsOverlap):
            coef.chi_cross(M3, [0, 1], [1])

    @pytest.mark.parametrize("model", [M3, M3B, Armax(0.4)])
    def test_matches_extrapolated_covariance(self, model):
        # cov/p = chi + c/u + O(u^-2): Richardson between u and 2u at u = 1e4
        A, B = (0,), (1, 2)
        margin = FrechetAlpha(1.0)

        def r(u):
            return indicator_cov(model, A, B, u) / margin.exceedance(u)

        u = 1e4
        extrapolated = 2 * r(2 * u) - r(u)
        assert coef.chi_cross(model, A, B) == pytest.approx(extrapolated, abs=1e-6)

    def test_m3_value(self):
        # {0} and {1,2} share no asymptotic triple exceedance when X_0, X_2 have no common innovation
        assert coef.chi_cross(M3, [0], [1, 2]) == pytest.approx(0.0, abs=1e-14)


class TestKappa:
    @pytest.mark.parametrize("T", [(0,), (0, 1), (0, 2, 3)])
    def test_zero_shift(self, T):
        assert coef.kappa(M3B, 0, LagSet(T)) == pytest.approx(coef.chi_joint(M3B, T))

    def test_independent(self):
        assert coef.kappa(Independent(), 3, LagSet((0, 1))) == 0.0

    def test_m3(self):
        assert coef.kappa(M3, 1, LagSet((0,))) == pytest.approx(0.5)
        assert coef.kappa(M3, 1, LagSet((0, 1))) == pytest.approx(oracles.mm_chi([0.5, 0.5], (0, 1, 2)))

    def test_bounded_by_residual(self):
        T = LagSet((0, 1, 3))
        for t in range(1, 8):
            k = coef.kappa(Armax(0.6), t, T)
            assert -1e-15 <= k <= 2 - coef.theta(Armax(0.6), [0, t]) + 1e-15


class TestVariances:
    def test_sigma0(self):
        assert coef.sigma0_sq(Independent()).value == 1.0
        assert coef.sigma0_sq(M3).value == pytest.approx(2.0, abs=1e-14)
        s = coef.sigma0_sq(Armax(0.5), 200)
        assert abs(s.value - 3.0) <= s.tail_bound + 1e-13

    def test_sigma0_monotone_with_certified_tail(self):
        model = PowerLawMaxMovingMaxima(2.5, truncation=20_000)
        prev = None
        full = coef.sigma0_sq(model, 19_999)
        for H in (10, 100, 1000):
            s = coef.sigma0_sq(model, H)
            if prev is not None:
                assert s.value >= prev
            assert full.value - s.value <= s.tail_bound + 1e-12
            prev = s.value

    def test_sigma0_diverges_for_lrd(self):
        out = coef.sigma0_sq(PowerLawMaxMovingMaxima(1.5))
        assert isinstance(out, coef.Diverges)
        assert out.lower_bound > 1.0

    def test_sigmaT(self):
        assert coef.sigmaT_sq(M3B, LagSet((0,))).value == pytest.approx(coef.sigma0_sq(M3B).value)
        assert coef.sigmaT_sq(Independent(), LagSet((0, 1))).value == 0.0
        assert coef.sigmaT_sq(M3, LagSet((0, 1))).value == pytest.approx(0.5, abs=1e-14)
        s = coef.sigmaT_sq(Armax(0.5), LagSet((0, 1)), 200)
        assert s.value == pytest.approx(1.5, abs=1e-12)

    def test_sigmaT_lrd(self):
        with pytest.raises(LrdModel):
            coef.sigmaT_sq(PowerLawMaxMovingMaxima(1.5), LagSet((0, 1)))

    def test_matrix_independent(self):
        v = coef.sigma_matrix(Independent(), LagSet((0, 1)))
        np.testing.assert_array_equal(v.sigma_matrix, [[0, 0], [0, 1]])
        assert v.ratio_var == 0.0

    @pytest.mark.parametrize("model", [M3, Armax(0.3), M3B])
    def test_matrix_single_lag(self, model):
        v = coef.sigma_matrix(model, LagSet((0,)), 300)
        assert v.ratio_var == pytest.approx(0.0, abs=1e-12)
        assert v.sigmaT_sq == pytest.approx(v.sigma12) == pytest.approx(v.sigma0_sq)

    def test_matrix_armax(self):
        v = coef.sigma_matrix(Armax(0.5), LagSet((0, 1)), 200)
        assert (v.sigmaT_sq, v.sigma12, v.sigma0_sq) == pytest.approx((1.5, 2.0, 3.0), abs=1e-12)
        assert v.ratio_var == pytest.approx(0.25, abs=1e-12)

    def test_matrix_m3b(self):
        # chi_T = 0.2, sigma_T^2 = 0.2, Sigma_12 = 0.6, sigma_0^2 = 2.4 by the min-sum oracle
        v = coef.sigma_matrix(M3B, LagSet((0, 2)), 50)
        assert (v.chi_T, v.sigmaT_sq, v.sigma12, v.sigma0_sq) == pytest.approx((0.2, 0.2, 0.6, 2.4), abs=1e-13)
        assert v.ratio_var == pytest.approx(0.2 - 2 * 0.2 * 0.6 + 0.04 * 2.4, abs=1e-13)
        assert np.linalg.eigvalsh(v.sigma_matrix).min() >= -1e-9

    def test_matrix_json(self):
        d = json.loads(coef.sigma_matrix(Armax(0.5), LagSet((0, 1)), 100).to_json())
        assert {"sigma0_sq", "sigmaT_sq", "sigma12", "ratio_var", "truncation_error"} <= set(d)

    def test_matrix_lrd(self):
        with pytest.raises(LrdModel):
            coef.sigma_matrix(PowerLawMaxMovingMaxima(1.8), LagSet((0, 1)))

    @pytest.mark.slow
    def test_sigma12_against_monte_carlo(self):
        from maxtail.estimators import threshold_schedule
        from maxtail.harness import jackknife_covariance, replicate_counts

        n, R = 10_000, 10_000
        T = LagSet((0, 1))
        u = threshold_schedule(n, 0.5, 1.0)
        p = FrechetAlpha(1.0).exceedance(u)
        counts = replicate_counts(M3, n, T, u, R, master_seed=2024)
        scale = math.sqrt(n * p)
        den = scale * (counts[:, 0] / n / p - 1.0)
        num = scale * (counts[:, 1] / n / p - 0.5)
        cov, se = jackknife_covariance(num, den)
        target = coef.sigma_matrix(M3, T).sigma12
        assert target == pytest.approx(1.0)
        assert abs(cov - target) <= 3 * se


class TestTable:
    def test_independent_csv(self):
        table = coef.coefficient_table(Independent(), LagSet((0, 1)), 5)
        lines = table.to_csv().strip().split("\n")
        assert lines[0] == "t,theta_t,residual,kappa_t"
        assert all(float(line.split(",")[2]) == 0.0 for line in lines[1:])

    def test_invariants(self):
        table = coef.coefficient_table(Armax(0.7), LagSet((0, 2)), 30)
        assert np.all((table.theta_pairwise >= 1.0) & (table.theta_pairwise <= 2.0))
        assert np.all(table.kappa <= table.residuals + 1e-15)


class TestLrd:
    def test_limit(self):
        assert coef.lrd_variance_limit(1, 0.5) == pytest.approx(8 / 3)
        assert coef.lrd_variance_limit(2, 0.5) == pytest.approx(16 / 3)
        assert coef.lrd_variance_limit(1, 1e-9) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("C,delta", [(0, 0.5), (1, 0.0), (1, 1.0)])
    def test_limit_range(self, C, delta):
        with pytest.raises(OutOfRange):
            coef.lrd_variance_limit(C, delta)

    def test_cesaro_zero(self):
        assert coef.cesaro_scaled_sum(np.zeros(99), 100, 0.5) == 0.0

    @pytest.mark.parametrize("delta", [0.2, 0.5, 0.9])
    def test_cesaro_single_term(self, delta):
        assert coef.cesaro_scaled_sum([0.7], 2, delta) == pytest.approx(2 ** (delta - 1) * 0.7, rel=1e-15)

    def test_cesaro_b_1e6(self):
        r = coef.power_law_residuals(1.0, 0.5, 10**6 - 1)
        value = coef.cesaro_scaled_sum(r, 10**6, 0.5)
        assert value == pytest.approx(oracles.cesaro_reference(r, 10**6, 0.5), rel=1e-12)
        assert abs(value / (8 / 3) - 1) < 0.01

    def test_insufficient(self):
        with pytest.raises(InsufficientResiduals):
            coef.cesaro_scaled_sum([1.0, 0.5], 10, 0.5)

    def test_power_law_model_residuals(self):
        # 2 - theta_t is the weight mass at lags >= t for nonincreasing weights
        m = PowerLawMaxMovingMaxima(1.5, truncation=5_000)
        raw = (1.0 + np.arange(5_000)) ** -1.5
        tail = np.cumsum((raw / raw.sum())[::-1])[::-1]
        r = coef.residuals(m, 4_000)
        np.testing.assert_allclose(r, tail[1:4_001], rtol=1e-9, atol=1e-15)
        assert r[1] == pytest.approx(oracles.mm_chi(m.weights[:50], (0, 2)) + tail[50], rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(raw=weights_strategy(5), labels=st.lists(st.integers(0, 2), min_size=6, max_size=6))
def test_tawn_gap_bounds(raw, labels):
    from maxtail.models import covariance_bound_terms, tawn_gap

    m = as_model(raw)
    A = tuple(i for i, l in enumerate(labels) if l == 1)
    B = tuple(i for i, l in enumerate(labels) if l == 2)
    if not A or not B:
        return
    gap = tawn_gap(m, A, B)
    assert gap >= -1e-12
    assert gap <= covariance_bound_terms(m, A, B) + 1e-12
