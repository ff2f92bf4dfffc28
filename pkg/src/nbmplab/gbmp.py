"""Branching Markov processes with and without boundary killing.

Each particle branches at rate 1, the child starting at the parent's
position.  With a boundary, a particle is removed as soon as its path goes
below it; with ``boundary=None`` nothing is removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boundary import Boundary
from .drivers import DriverSpec, InitialLaw
from .engine import run_families, size_path
from .rng import RngStream


@dataclass
class PopulationSnapshot:
    time: float
    positions: np.ndarray
    family: np.ndarray
    spawn: np.ndarray          # (family, spawn) is the particle's lineage key
    sizes: np.ndarray          # alive count per family

    @property
    def total(self) -> int:
        return int(self.sizes.sum())

    def family_view(self, i: int) -> "PopulationSnapshot":
        sel = self.family == i
        return PopulationSnapshot(
            self.time, self.positions[sel], self.family[sel], self.spawn[sel], self.sizes[i : i + 1]
        )


def _snapshots(run, n: int) -> list[PopulationSnapshot]:
    out = []
    order = np.lexsort((run.pos_spawn, run.pos_family, run.pos_obs))
    pos, fam, obs_i, spw = (a[order] for a in (run.pos, run.pos_family, run.pos_obs, run.pos_spawn))
    cuts = np.searchsorted(obs_i, np.arange(run.obs.size + 1))
    for j, t in enumerate(run.obs):
        s = slice(cuts[j], cuts[j + 1])
        out.append(PopulationSnapshot(float(t), pos[s], fam[s], spw[s], run.counts[:, j].copy()))
    return out


def run_gbmp(
    n: int,
    driver: DriverSpec,
    mu0: InitialLaw,
    boundary: Boundary | None,
    T: float,
    obs_grid,
    dt_max: float,
    stream: RngStream,
    *,
    workers: int = 1,
) -> list[PopulationSnapshot]:
    """Simulate n independent families up to T and snapshot them on obs_grid."""
    if boundary is not None and T > boundary.horizon:
        raise ValueError(f"horizon {T} exceeds the boundary horizon {boundary.horizon}")
    run = run_families(
        n, driver, mu0, boundary, obs_grid, T, dt_max, stream, positions=True, workers=workers
    )
    return _snapshots(run, n)


def population_sizes(
    n: int,
    driver: DriverSpec,
    mu0: InitialLaw,
    boundary: Boundary | None,
    t: float,
    replicas: int,
    stream: RngStream,
    *,
    dt_max: float = 0.01,
    workers: int = 1,
) -> np.ndarray:
    """Total population N_t of ``replicas`` independent n-family systems."""
    out = np.empty(replicas, dtype=np.int64)
    for r in range(replicas):
        run = run_families(
            n, driver, mu0, boundary, np.array([t]), t, dt_max, stream.child(r), workers=workers
        )
        out[r] = run.counts[:, 0].sum()
    return out


def chi(snapshot: PopulationSnapshot, r: float) -> int:
    """Number of alive particles strictly above r."""
    return int(np.count_nonzero(snapshot.positions > r))


class EmpiricalG:
    """r -> (1/n) #{alive particles above r}; tends to N_t / n as r -> -inf."""

    def __init__(self, positions, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.values = np.sort(np.asarray(positions, dtype=float))
        self.n = n

    def __call__(self, r):
        above = self.values.size - np.searchsorted(self.values, r, side="right")
        return above / self.n


def empirical_G(snapshot: PopulationSnapshot, n: int, t: float | None = None) -> EmpiricalG:
    if t is not None and not math.isclose(snapshot.time, t):
        raise ValueError(f"snapshot is at t={snapshot.time}, not {t}")
    return EmpiricalG(snapshot.positions, n)


@dataclass(frozen=True)
class ManyToOne:
    lhs: float
    rhs: float
    z: float
    lhs_se: float
    rhs_se: float


def many_to_one_check(
    driver: DriverSpec,
    mu0: InitialLaw,
    boundary: Boundary | None,
    t: float,
    r,
    replicas: int,
    stream: RngStream,
    *,
    dt_max: float = 0.01,
    workers: int = 1,
):
    """Compare E chi_t(r) over single-ancestor systems with e^t P(X_t > r, alive).

    The left side uses branching families from ``stream.child(0)``, the right
    side independent non-branching paths from ``stream.child(1)``.  ``r`` may
    be a scalar or a sequence; the result matches.
    """
    rs = np.atleast_1d(np.asarray(r, dtype=float))
    obs = np.array([t])
    fam = run_families(
        replicas, driver, mu0, boundary, obs, t, dt_max, stream.child(0),
        positions=True, workers=workers,
    )
    single = run_families(
        replicas, driver, mu0, boundary, obs, t, dt_max, stream.child(1),
        branching=False, positions=True, workers=workers,
    )
    grow = math.exp(t)
    out = []
    for rv in rs:
        above = fam.pos > rv
        chi_per = np.bincount(fam.pos_family[above], minlength=replicas)
        lhs = chi_per.mean()
        lhs_se = chi_per.std(ddof=1) / math.sqrt(replicas)
        frac = np.count_nonzero(single.pos > rv) / replicas
        rhs = grow * frac
        rhs_se = grow * math.sqrt(frac * (1 - frac) / replicas)
        se = math.hypot(lhs_se, rhs_se)
        z = 0.0 if se == 0 else (lhs - rhs) / se
        out.append(ManyToOne(float(lhs), float(rhs), float(z), float(lhs_se), float(rhs_se)))
    return out[0] if np.ndim(r) == 0 else out


def gamma_event_path(
    N0: int,
    driver: DriverSpec,
    mu0: InitialLaw,
    boundary: Boundary | None,
    T: float,
    stream: RngStream,
    *,
    dt_max: float = 0.01,
    workers: int = 1,
):
    """Size trajectory (event times, sizes) of one N0-family killed system."""
    run = run_families(
        N0, driver, mu0, boundary, np.empty(0), T, dt_max, stream, events=True, workers=workers
    )
    return size_path(run.ev_time, run.ev_step, N0)
