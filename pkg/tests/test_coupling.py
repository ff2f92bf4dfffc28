import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from nbmplab.boundary import Boundary
from nbmplab.coupling import LOWER, UPPER, barrier_size, check_dominance, gamma_event_holds, run_coupled
from nbmplab.drivers import BrownianWithDrift, CompoundPoissonDrift, OrnsteinUhlenbeck, QsdDriftedBM, Uniform
from nbmplab.nbmp import run_nbmp
from nbmplab.rng import RngStream

QSD_DRIVER = BrownianWithDrift(-math.sqrt(2), 1.0)
QSD_LAW = QsdDriftedBM(math.sqrt(2))
OBS = np.round(np.arange(0, 11) * 0.05, 12)


def test_dominance_examples():
    assert check_dominance([1.0, 2.0], [1.0, 2.0])
    assert check_dominance([1.0, 2.0], [0.5, 1.5, 2.5])
    assert check_dominance([], [0.0])
    assert not check_dominance([1.0, 3.0], [2.0, 2.5])
    assert not check_dominance([0.0, 0.0], [5.0])


@given(st.lists(st.floats(-10, 10), max_size=15), st.lists(st.floats(0, 5), max_size=15),
       st.lists(st.floats(-10, 10), max_size=5))
@settings(max_examples=200, deadline=None)
def test_dominance_by_shift_and_extra_particles(x, shifts, extra):
    shifts = (shifts + [0.0] * len(x))[: len(x)]
    y = [a + s for a, s in zip(x, shifts)] + extra
    assert check_dominance(x, y)


def test_gamma_event_and_barrier_size():
    times, sizes = [0.0, 0.5, 1.0], [12, 10, 9]
    assert gamma_event_holds(times, sizes, 10, UPPER, 0.6)
    assert not gamma_event_holds(times, sizes, 10, UPPER, 1.0)
    assert gamma_event_holds([0.0, 0.5], [8, 10], 10, LOWER, 1.0)
    assert barrier_size(200, 0.2, UPPER) == 240
    assert barrier_size(200, 0.2, LOWER) == 160
    with pytest.raises(ValueError):
        barrier_size(10, 0.2, "middle")


@pytest.mark.parametrize("side", [UPPER, LOWER])
@pytest.mark.parametrize("driver", [
    QSD_DRIVER,
    OrnsteinUhlenbeck(1.0, 1.0, 0.5),
    CompoundPoissonDrift(2.0, Uniform(-0.5, 0.5), -0.5),
])
def test_coupled_runs_keep_the_order(side, driver):
    b = Boundary.constant(0.0, 0.5)
    for r in range(3):
        run = run_coupled(60, 0.2, side, driver, QSD_LAW, b, 0.5, OBS, RngStream(1, (r,)))
        assert run.violations_before_decoupling() == 0
        assert all(p for p, c in zip(run.pairs_ok, run.decoupled) if not c)
        for x, bar, d, c in zip(run.x_snapshots, run.barrier_snapshots, run.dominance, run.decoupled):
            assert x.size == 60
            if not c:
                assert (check_dominance(x, bar) if side == UPPER else check_dominance(bar, x)) == d


def test_certificates_shape():
    run = run_coupled(30, 0.2, UPPER, QSD_DRIVER, QSD_LAW, Boundary.constant(0.0, 0.5), 0.5, OBS, RngStream(2))
    certs = run.certificates()
    assert len(certs) == OBS.size
    assert all(c[1] == UPPER for c in certs)
    assert run.sizes[0] == barrier_size(30, 0.2, UPPER)


def test_coupled_system_has_the_nbmp_marginal():
    # the N-particle half of the coupling must be an N-BMP in law
    reps, N = 150, 20
    b = Boundary.constant(0.0, 0.5)
    coupled = [run_coupled(N, 0.2, UPPER, QSD_DRIVER, QSD_LAW, b, 0.5, np.array([0.5]), RngStream(3, (r,))).x_snapshots[0]
               for r in range(reps)]
    free = [run_nbmp(N, QSD_DRIVER, QSD_LAW, 0.5, np.array([0.5]), RngStream(4, (r,))).snapshots[0] for r in range(reps)]
    for stat in (np.min, np.mean):
        assert sps.ks_2samp([stat(x) for x in coupled], [stat(x) for x in free]).pvalue > 0.001


def test_sandwich_between_barriers():
    # each side runs separately; while coupled, the N-system sits below the upper
    # barrier in one run and above the lower barrier in the other
    b = Boundary.constant(0.0, 0.5)
    up = run_coupled(80, 0.2, UPPER, QSD_DRIVER, QSD_LAW, b, 0.5, OBS, RngStream(5))
    lo = run_coupled(80, 0.2, LOWER, QSD_DRIVER, QSD_LAW, b, 0.5, OBS, RngStream(5))
    checked = 0
    for xu, bu, xl, bl, cu, cl in zip(up.x_snapshots, up.barrier_snapshots, lo.x_snapshots, lo.barrier_snapshots,
                                      up.decoupled, lo.decoupled):
        if not cu:
            assert check_dominance(xu, bu)
            checked += 1
        if not cl:
            assert check_dominance(bl, xl)
    assert checked > 0


def test_coupled_input_checks():
    with pytest.raises(ValueError):
        run_coupled(1, 0.2, UPPER, QSD_DRIVER, QSD_LAW, None, 0.5, OBS, RngStream(0))
    with pytest.raises(ValueError):
        run_coupled(10, 0.6, UPPER, QSD_DRIVER, QSD_LAW, None, 0.5, OBS, RngStream(0))
    with pytest.raises(ValueError):
        run_coupled(10, 0.2, UPPER, QSD_DRIVER, QSD_LAW, Boundary.constant(0.0, 0.2), 0.5, OBS, RngStream(0))


@pytest.mark.parametrize("side", [UPPER, LOWER])
def test_nearest_repair_rule_keeps_the_order(side):
    b = Boundary.constant(0.0, 0.5)
    for r in range(3):
        run = run_coupled(60, 0.2, side, QSD_DRIVER, QSD_LAW, b, 0.5, OBS, RngStream(6, (r,)), repair_rule="nearest")
        assert run.violations_before_decoupling() == 0
    with pytest.raises(ValueError):
        run_coupled(10, 0.2, side, QSD_DRIVER, QSD_LAW, b, 0.5, OBS, RngStream(0), repair_rule="random")
