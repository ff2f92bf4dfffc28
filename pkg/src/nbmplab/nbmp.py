"""Fixed-size branching-selection system.

N particles move independently.  At rate N a uniformly chosen particle
duplicates and the lowest particle (lowest index among ties) is removed, so
the population stays at N.  The newborn takes the freed slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .drivers import DriverSpec, InitialLaw, sample_initial, sample_transition
from .rng import RngStream, as_generator
from .stats import EmpiricalCDF


@dataclass
class NbmpRun:
    times: np.ndarray
    snapshots: np.ndarray       # (obs, N)
    minima: np.ndarray
    event_time: np.ndarray
    branched: np.ndarray
    removed: np.ndarray
    x0: np.ndarray

    @property
    def N(self) -> int:
        return self.snapshots.shape[1]


def run_nbmp(
    N: int,
    driver: DriverSpec,
    mu0: InitialLaw,
    T: float,
    obs_grid,
    stream: RngStream,
) -> NbmpRun:
    if N < 1:
        raise ValueError("N must be >= 1")
    obs = np.asarray(obs_grid, dtype=float)
    if obs.ndim != 1 or np.any(np.diff(obs) < 0) or (obs.size and (obs[0] < 0 or obs[-1] > T)):
        raise ValueError("observation grid must be sorted within [0, T]")
    rng = as_generator(stream)
    x0 = np.atleast_1d(sample_initial(mu0, rng, size=N))
    x = x0.copy()
    snaps, et, eb, er = K.nbmp_run(
        x, *K.encode_driver(driver), obs, float(T), rng, max(16, int(1.2 * N * T) + 16)
    )
    return NbmpRun(obs, snaps, snaps.min(axis=1) if N else np.empty(obs.size), et, eb, er, x0)


def empirical_cdf(snapshot) -> EmpiricalCDF:
    return EmpiricalCDF(snapshot)


def min_trajectory(run: NbmpRun) -> list[tuple[float, float]]:
    return [(float(t), float(m)) for t, m in zip(run.times, run.minima)]


def replay_selection(N: int, driver: DriverSpec, mu0: InitialLaw, T: float, obs_grid, stream: RngStream,
                     run: NbmpRun | None = None) -> bool:
    """Rerun the dynamics in plain numpy from the same stream and audit it.

    Every removal must take the then-lowest particle (lowest index among
    ties).  When ``run`` is given, its event log must also match the replay
    index for index.  Slow; meant for small N and diffusive drivers.
    """
    rng = as_generator(stream)
    x = np.atleast_1d(sample_initial(mu0, rng, size=N)).astype(float)
    obs = np.asarray(obs_grid, dtype=float)
    t, j, k = 0.0, 0, 0
    while j < obs.size and obs[j] <= t:
        j += 1
    while True:
        tau = t + rng.standard_exponential() / N
        while j < obs.size and obs[j] < tau:
            x = np.atleast_1d(sample_transition(driver, x, obs[j] - t, rng))
            t = obs[j]
            j += 1
        if tau > T:
            break
        x = np.atleast_1d(sample_transition(driver, x, tau - t, rng))
        t = tau
        b = min(int(rng.random() * N), N - 1)
        r = int(np.argmin(x))
        if np.any(x < x[r]) or np.any(x[:r] == x[r]):
            return False
        if run is not None:
            if k >= run.event_time.size or run.branched[k] != b or run.removed[k] != r:
                return False
        x[r] = x[b]
        k += 1
    return run is None or k == run.event_time.size
