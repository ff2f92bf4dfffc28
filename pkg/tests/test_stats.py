import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbmplab import stats
from nbmplab.stats import BoundInputs, EmpiricalCDF, GeomParams


# Reference values below come from plain-Python series or numeric maximisation
# (scipy bounded search of theta*x - log E e^{theta G}), not from the closed forms.
LEGENDRE_REF = {(0.5, 3.0): 0.16989903679539753, (0.3, 2.0): 0.1743533871447781, (0.5, 1.5): 0.08494951839769893}


def test_empirical_cdf_is_right_continuous():
    F = EmpiricalCDF([3.0, 1.0, 2.0, 2.0])
    assert F(1.0) == 0.25
    assert F(2.0) == 0.75
    assert F.left_limit(2.0) == 0.25
    assert F(0.5) == 0.0 and F(10.0) == 1.0


def test_empirical_cdf_rejects_nan():
    with pytest.raises(ValueError):
        EmpiricalCDF([0.0, float("nan")])


def test_sup_norm_two_samples_by_hand():
    assert stats.sup_norm_distance(EmpiricalCDF([0.0, 1.0]), EmpiricalCDF([0.5])) == 0.5
    assert stats.sup_norm_distance(EmpiricalCDF([1.0, 2.0]), EmpiricalCDF([1.0, 2.0])) == 0.0


def test_sup_norm_against_continuous_uses_both_one_sided_limits():
    # F jumps 0 -> 1 at 0 where the uniform(-1, 1) CDF equals 1/2
    d = stats.sup_norm_distance(EmpiricalCDF([0.0]), lambda r: np.clip((np.asarray(r) + 1) / 2, 0, 1))
    assert d == pytest.approx(0.5)


def test_sup_norm_empty_against_continuous_raises():
    with pytest.raises(ValueError):
        stats.sup_norm_distance(EmpiricalCDF([]), lambda r: r)


samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=30)


@given(samples, samples, samples)
@settings(max_examples=200, deadline=None)
def test_sup_norm_is_a_metric(a, b, c):
    Fa, Fb, Fc = EmpiricalCDF(a), EmpiricalCDF(b), EmpiricalCDF(c)
    dab = stats.sup_norm_distance(Fa, Fb)
    assert dab == stats.sup_norm_distance(Fb, Fa)
    assert 0.0 <= dab <= 1.0
    assert dab <= stats.sup_norm_distance(Fa, Fc) + stats.sup_norm_distance(Fc, Fb) + 1e-12


def test_ks_exp1_accepts_exponential_and_rejects_shift():
    rng = np.random.default_rng(7)
    x = rng.exponential(size=20_000)
    d, ok = stats.ks_exp1(x)
    assert ok and d < 0.02
    _, ok_shift = stats.ks_exp1(x + 0.05)
    assert not ok_shift


def test_ks_exp1_censoring():
    rng = np.random.default_rng(8)
    x = rng.exponential(size=20_000)
    x[x > 1.0] = np.inf
    d, ok = stats.ks_exp1(x, horizon=1.0)
    assert ok
    with pytest.raises(ValueError):
        stats.ks_exp1(x)


def test_ks_exp1_input_checks():
    with pytest.raises(ValueError):
        stats.ks_exp1([1.0] * 5)
    with pytest.raises(ValueError):
        stats.ks_exp1([0.0] + [1.0] * 20)


def test_geom_values_by_hand():
    g = GeomParams(0.5)
    assert stats.geom_tail(g, 3) == pytest.approx(0.125, abs=1e-15)
    assert stats.geom_tail(g, 0) == 1.0
    exact, bound = stats.geom_truncated_mean(g, 2)
    assert exact == pytest.approx(1.0, abs=1e-15)   # sum_{k>=3} k 2^-k
    assert bound == pytest.approx(4 * 0.25 / 0.5)
    exact, _ = stats.geom_truncated_mean(GeomParams(0.3), 4)
    assert exact == pytest.approx(1.7607333333333324, abs=1e-12)


@pytest.mark.parametrize("key", sorted(LEGENDRE_REF))
def test_geom_legendre_against_numeric_maximisation(key):
    p, x = key
    assert stats.geom_legendre(GeomParams(p), x) == pytest.approx(LEGENDRE_REF[key], abs=1e-10)


def test_geom_legendre_vanishes_at_mean():
    for p in (0.1, 0.37, 0.9):
        assert abs(stats.geom_legendre(GeomParams(p), 1 / p)) < 1e-12


def test_geom_input_checks():
    with pytest.raises(ValueError):
        GeomParams(1.0)
    with pytest.raises(ValueError):
        stats.geom_tail(GeomParams(0.5), -1)
    with pytest.raises(ValueError):
        stats.geom_truncated_mean(GeomParams(0.5), 1.5)
    with pytest.raises(ValueError):
        stats.geom_legendre(GeomParams(0.5), 1.0)
    with pytest.raises(ValueError):
        stats.geom_cramer_lower_bound(GeomParams(0.5), 2.5, 10)


probs = st.floats(0.01, 0.99)


@given(probs, st.floats(1.0001, 50.0))
@settings(max_examples=300, deadline=None)
def test_legendre_is_nonnegative(p, x):
    assert stats.geom_legendre(GeomParams(p), x) >= -1e-12


@given(probs, st.integers(0, 200))
@settings(max_examples=300, deadline=None)
def test_truncated_mean_below_bound(p, K):
    exact, bound = stats.geom_truncated_mean(GeomParams(p), K)
    assert 0.0 <= exact <= bound * (1 + 1e-12)


@given(probs, st.integers(0, 50))
@settings(max_examples=200, deadline=None)
def test_tail_matches_series(p, K):
    series = sum(p * (1 - p) ** (k - 1) for k in range(K + 1, K + 4000))
    assert stats.geom_tail(GeomParams(p), K) == pytest.approx(series, abs=1e-10)


def test_cramer_bound_is_a_probability_bound():
    g = GeomParams(0.4)
    rng = np.random.default_rng(3)
    n, x = 20, 2.0
    means = rng.geometric(0.4, size=(50_000, n)).mean(axis=1)
    assert np.mean(means < x) <= stats.geom_cramer_lower_bound(g, x, n)


def test_expansion_reference():
    assert stats.legendre_expansion_ref(0.2) == pytest.approx((1 - math.log(2)) * 0.1)


def test_bound_spot_values():
    vals = stats.bound_formulas(BoundInputs(N=1000, eta=0.1, delta=0.1, t=1.0, T=1.0))
    assert vals["C_t"] == pytest.approx(12.059830369402254, rel=1e-14)
    assert vals["c3"] == pytest.approx(0.45867514538708193, rel=1e-14)
    assert vals["N0"] == pytest.approx(9647.864295521804, rel=1e-14)
    assert all(v > 0 for v in vals.values())


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        BoundInputs(beta=0.5)
    with pytest.raises(ValueError):
        BoundInputs(t=2.0, T=1.0)


def test_second_moment_matches_simulation():
    rng = np.random.default_rng(11)
    g = rng.geometric(math.exp(-0.7), size=400_000).astype(float)
    assert np.mean(g**2) == pytest.approx(stats.second_moment_bmp(0.7), rel=0.01)


def test_geometric_chisquare():
    rng = np.random.default_rng(5)
    _, p_ok = stats.geometric_chisquare(rng.geometric(0.3, size=20_000), 0.3)
    assert p_ok > 0.01
    _, p_bad = stats.geometric_chisquare(rng.geometric(0.33, size=20_000), 0.3)
    assert p_bad < 0.01
    with pytest.raises(ValueError):
        stats.geometric_chisquare([0, 1, 2], 0.3)


def test_loglog_slope_recovers_power():
    N = np.array([250, 1000, 4000])
    assert stats.loglog_slope(N, 3.0 * N**-0.5) == pytest.approx(-0.5)


def test_ks_exp1_separates_uniform_from_exponential():
    # at m = 10 the test has little power against U(0, 1) (about 2% rejections);
    # at m = 100 the distance 1 - (1 - 1/e) = 0.37 is far above 1.628 / 10
    rng = np.random.default_rng(9)
    rejected = [not stats.ks_exp1(rng.uniform(size=100))[1] for _ in range(200)]
    assert np.mean(rejected) > 0.99
