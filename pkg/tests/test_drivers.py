import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from nbmplab import drivers as D
from nbmplab.rng import RngStream


def test_bachelier_levy_value():
    # 2 Phi(-1), the chance a standard BM from 1 reaches 0 by time 1
    assert D.crossing_prob_exact_bm(1.0, 0.0, 1.0) == pytest.approx(0.31731050786291415, abs=1e-12)
    assert D.crossing_prob_exact_bm(1.0, 0.0, 0.25) == pytest.approx(0.04550026389635839, abs=1e-12)
    assert D.crossing_prob_exact_bm(0.0, 0.0, 1.0) == 1.0


def test_bachelier_levy_with_drift_against_simulation():
    rng = np.random.default_rng(4)
    n, steps, t = 20_000, 2000, 1.0
    h = t / steps
    x = np.full(n, 0.5)
    hit = np.zeros(n, bool)
    for _ in range(steps):
        y = x - 0.5 * h + math.sqrt(h) * rng.standard_normal(n)
        # bridge correction between grid points
        hit |= (y <= 0) | (rng.random(n) < np.exp(-2 * np.maximum(x, 0) * np.maximum(y, 0) / h))
        x = y
    exact = D.crossing_prob_exact_bm(0.5, 0.0, t, drift=-0.5)
    assert abs(hit.mean() - exact) < 4 * math.sqrt(exact * (1 - exact) / n)


def test_bridge_crossing_probability():
    bm = D.BrownianWithDrift(0.3, 1.0)
    assert D.bridge_crossing_prob(bm, 1.0, 1.0, 0.0, 1.0) == pytest.approx(0.1353352832366127, abs=1e-15)
    assert D.bridge_crossing_prob(bm, -0.1, 1.0, 0.0, 1.0) == 1.0


@pytest.mark.parametrize(
    "obj",
    [
        D.PointMass(1.5),
        D.Uniform(-1.0, 2.0),
        D.QsdDriftedBM(1.3),
        D.ExplicitQuantile((0.0, 0.5, 1.0), (-1.0, 0.0, 3.0)),
    ],
)
def test_law_records_round_trip(obj):
    assert D.law_from_record(D.law_to_record(obj)) == obj


@pytest.mark.parametrize(
    "obj",
    [
        D.BrownianWithDrift(-math.sqrt(2), 1.0),
        D.OrnsteinUhlenbeck(2.0, 0.5, 1.0),
        D.CompoundPoissonDrift(3.0, D.Uniform(-1, 1), 0.2),
    ],
)
def test_driver_records_round_trip(obj):
    assert D.driver_from_record(D.driver_to_record(obj)) == obj


def test_invalid_specs():
    with pytest.raises(ValueError):
        D.Uniform(1.0, 1.0)
    with pytest.raises(ValueError):
        D.BrownianWithDrift(0.0, 0.0)
    with pytest.raises(ValueError):
        D.ExplicitQuantile((0.0, 0.9), (0.0, 1.0))
    with pytest.raises(ValueError):
        D.driver_from_record({"type": "Nope"})


def test_qsd_initial_law_ks():
    law = D.QsdDriftedBM(math.sqrt(2))
    x = D.sample_initial(law, RngStream(1), size=50_000)
    assert sps.kstest(x, law.cdf).pvalue > 0.01
    assert x.mean() == pytest.approx(2 / math.sqrt(2), rel=0.02)


def test_explicit_quantile_is_inverse_cdf():
    law = D.ExplicitQuantile((0.0, 0.25, 1.0), (0.0, 1.0, 2.0))
    x = D.sample_initial(law, RngStream(2), size=40_000)
    assert np.mean(x <= 1.0) == pytest.approx(0.25, abs=0.01)
    assert x.min() >= 0.0 and x.max() <= 2.0


def test_ou_transition_moments():
    ou = D.OrnsteinUhlenbeck(theta=2.0, sigma=0.5, mean=1.0)
    x = D.sample_transition(ou, np.full(100_000, 3.0), 0.3, RngStream(3))
    decay = math.exp(-0.6)
    assert x.mean() == pytest.approx(1.0 + 2.0 * decay, abs=0.01)
    assert x.var() == pytest.approx(0.25 * (1 - math.exp(-1.2)) / 4.0, rel=0.03)


def test_compound_poisson_transition_moments():
    cp = D.CompoundPoissonDrift(rate=4.0, jumps=D.Uniform(0.0, 1.0), drift=-1.0)
    x = D.sample_transition(cp, np.zeros(100_000), 0.5, RngStream(4))
    assert x.mean() == pytest.approx(-0.5 + 4.0 * 0.5 * 0.5, abs=0.01)
    assert x.var() == pytest.approx(4.0 * 0.5 / 3.0, rel=0.03)


def test_transition_rejects_negative_step():
    with pytest.raises(ValueError):
        D.sample_transition(D.BrownianWithDrift(), np.zeros(2), -0.1, RngStream(0))


drivers = st.sampled_from(
    [
        D.BrownianWithDrift(-1.0, 0.7),
        D.OrnsteinUhlenbeck(1.5, 1.0, 0.0),
        D.CompoundPoissonDrift(5.0, D.Uniform(-1, 1), 0.3),
    ]
)


@given(
    drivers,
    st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 3)), min_size=1, max_size=20),
    st.floats(1e-4, 1.0),
    st.integers(0, 2**32),
)
@settings(max_examples=150, deadline=None)
def test_coupled_step_preserves_order(driver, pairs, dt, seed):
    lo = np.array([a for a, _ in pairs])
    hi = lo + np.array([b for _, b in pairs])
    a, b = D.coupled_transition(driver, lo, hi, dt, RngStream(seed))
    assert np.all(a <= b)


def test_coupled_step_has_the_right_marginals():
    bm = D.BrownianWithDrift(0.5, 1.2)
    a, b = D.coupled_transition(bm, np.zeros(50_000), np.ones(50_000), 0.4, RngStream(6))
    ref = sps.norm(0.2, 1.2 * math.sqrt(0.4))
    assert sps.kstest(a, ref.cdf).pvalue > 0.01
    assert sps.kstest(b - 1.0, ref.cdf).pvalue > 0.01
