"""Moving killing boundary: representation, Monte Carlo solver and oracles.

A boundary is stored on a grid 0 < t_1 < ... < t_M.  It is linear between
grid points and constant at ``gamma0`` before t_1; ``gamma0 = -inf``
(``NO_CONSTRAINT``) means nothing is killed before t_1.

The solver picks gamma(t_k) so that exactly round(m e^{-t_k}) of m simulated
paths have never gone below the boundary by time t_k, which makes the
killing time exponentially distributed up to Monte Carlo error.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .drivers import DriverSpec, InitialLaw, is_continuous, sample_initial
from .engine import map_blocks, run_families
from .rng import RngStream
from .stats import EmpiricalCDF

NO_CONSTRAINT = -math.inf


class InfeasibleBoundary(RuntimeError):
    """Raised when survivor counts cannot be matched by any level."""


class OracleStarvation(RuntimeError):
    """Raised when too few paths survive to estimate a conditional law."""


@dataclass(frozen=True, eq=False)
class Boundary:
    t: np.ndarray
    gamma: np.ndarray
    gamma0: float = NO_CONSTRAINT

    def __post_init__(self):
        t = np.array(self.t, dtype=float).ravel()
        g = np.array(self.gamma, dtype=float).ravel()
        if t.size == 0 or t.shape != g.shape:
            raise ValueError("boundary needs matching, non-empty t and gamma arrays")
        if not t[0] > 0 or np.any(np.diff(t) <= 0):
            raise ValueError("boundary grid must be strictly increasing and start after 0")
        if not np.all(np.isfinite(g)):
            raise ValueError("boundary values must be finite on the grid")
        if math.isnan(self.gamma0) or self.gamma0 == math.inf:
            raise ValueError("gamma0 must be finite or -inf")
        t.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "gamma0", float(self.gamma0))

    @classmethod
    def constant(cls, level: float, horizon: float) -> "Boundary":
        return cls(np.array([horizon]), np.array([level]), level)

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def unconstrained_start(self) -> bool:
        return self.gamma0 == NO_CONSTRAINT

    def eval(self, t):
        ta = np.asarray(t, dtype=float)
        if np.any(ta < 0) or np.any(ta > self.horizon) or np.isnan(ta).any():
            raise ValueError(f"boundary evaluated outside [0, {self.horizon}]")
        out = np.interp(ta, self.t, self.gamma)
        out = np.where(ta < self.t[0], self.gamma0, out)
        return float(out) if out.ndim == 0 else out

    def __eq__(self, other):
        if not isinstance(other, Boundary):
            return NotImplemented
        return (
            np.array_equal(self.t, other.t)
            and np.array_equal(self.gamma, other.gamma)
            and self.gamma0 == other.gamma0
        )

    # -------------------------------------------------------------- csv

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,gamma\n")
        buf.write(f"0,{_fmt(self.gamma0)}\n")
        for a, b in zip(self.t, self.gamma):
            buf.write(f"{_fmt(a)},{_fmt(b)}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Boundary":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "gamma"]:
            raise ValueError("boundary CSV must start with the header 't,gamma'")
        data = [(float(a), float(b)) for a, b in (r for r in rows[1:] if r)]
        if not data:
            raise ValueError("boundary CSV has no grid rows")
        gamma0 = None
        if data[0][0] == 0.0:
            gamma0 = data[0][1]
            data = data[1:]
        t = np.array([d[0] for d in data])
        g = np.array([d[1] for d in data])
        if gamma0 is None:
            gamma0 = float(g[0]) if g.size else NO_CONSTRAINT
        return cls(t, g, gamma0)

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "Boundary":
        with open(path) as fh:
            return cls.from_csv(fh.read())


def _fmt(v: float) -> str:
    if v == -math.inf:
        return "-inf"
    return f"{float(v):.17g}"


def eval_boundary(boundary: Boundary, t):
    return boundary.eval(t)


# ------------------------------------------------------------------ solver


def solve_boundary_mc(
    driver: DriverSpec,
    mu0: InitialLaw,
    grid,
    m: int,
    stream: RngStream,
    *,
    monitoring: str = "bridge",
    substeps: int = 1,
    workers: int = 1,
    block: int = 8192,
) -> Boundary:
    """Fit a boundary whose killing time is Exp(1) under mu0.

    ``monitoring="bridge"`` tests each path's exact running minimum over a
    step (Brownian bridge between sub-step endpoints, so OU is approximate);
    ``"grid"`` tests positions at sub-step ends only (grid times when
    ``substeps`` is 1).  The jump driver is always monitored that way.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or not grid[0] > 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("solver grid must be strictly increasing with t_1 > 0")
    if m < 1000:
        raise ValueError("solver needs at least 1000 paths")
    if m * math.exp(-grid[0]) < 1:
        raise ValueError("first grid step too large for the path count")
    if monitoring not in ("bridge", "grid"):
        raise ValueError("monitoring must be 'bridge' or 'grid'")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    enc = K.encode_driver(driver)
    use_bridge = monitoring == "bridge" and is_continuous(driver)

    starts = list(range(0, m, block))
    gens = [stream.child(b).generator() for b in range(len(starts))]
    xs = [sample_initial(mu0, g, size=min(block, m - lo)) for g, lo in zip(gens, starts)]
    alive = [np.ones(x.size, dtype=bool) for x in xs]

    def advance(b, h):
        return K.step_minima(xs[b], alive[b], *enc, h, substeps, use_bridge, gens[b])

    values = np.empty(grid.size)
    survivors = m
    prev = 0.0
    for k, tk in enumerate(grid):
        h = tk - prev
        mins = map_blocks(lambda b: advance(b, h), range(len(xs)), workers)
        target = int(round(m * math.exp(-tk)))
        kills = survivors - target
        pooled = np.sort(np.concatenate(mins))
        pooled = pooled[:survivors]
        if kills > 0:
            lo, hi = pooled[kills - 1], pooled[kills]
            if not lo < hi:
                raise InfeasibleBoundary(
                    f"tied path minima at t={tk:.6g}: survivor count {target} cannot be matched"
                )
            level = 0.5 * (lo + hi)
        else:
            level = np.nextafter(pooled[0], -np.inf)
        values[k] = level
        for b in range(len(xs)):
            alive[b] &= mins[b] >= level
        survivors = target
        prev = tk
    return Boundary(grid, values, NO_CONSTRAINT)


# ------------------------------------------------------------ estimators


def survival_probability(
    boundary: Boundary,
    driver: DriverSpec,
    mu0: InitialLaw,
    t: float,
    m: int,
    bridge_correction: bool,
    stream: RngStream,
    *,
    dt_max: float = 0.01,
    workers: int = 1,
) -> tuple[float, float]:
    """Fresh-path estimate of P(tau_gamma > t) and its standard error."""
    if t > boundary.horizon or t < 0:
        raise ValueError(f"t must lie in [0, {boundary.horizon}]")
    run = run_families(
        m, driver, mu0, boundary, np.array([t]), t, dt_max, stream,
        branching=False, bridge=bridge_correction, workers=workers,
    )
    alive = run.counts[:, 0]
    p = float(alive.mean())
    return p, math.sqrt(max(p * (1 - p), 0.0) / m)


def crossing_times(
    boundary: Boundary,
    driver: DriverSpec,
    mu0: InitialLaw,
    m: int,
    stream: RngStream,
    *,
    dt_max: float = 0.01,
    workers: int = 1,
) -> np.ndarray:
    """Killing times of m fresh paths on [0, horizon]; inf for survivors.

    A path that already sits below gamma(t_1) at time 0 dies at the very start;
    that time is reported as the smallest positive float rather than 0.
    """
    T = boundary.horizon
    run = run_families(
        m, driver, mu0, boundary, np.array([T]), T, dt_max, stream,
        branching=False, workers=workers,
    )
    return np.maximum(run.root_death, np.nextafter(0.0, 1.0))


class OracleCDF(EmpiricalCDF):
    """Empirical CDF of surviving positions, with the survivor count attached."""

    def __init__(self, values, paths: int):
        super().__init__(values)
        self.paths = paths

    @property
    def survivors(self) -> int:
        return self.n


def conditional_law_oracle(
    driver: DriverSpec,
    mu0: InitialLaw,
    boundary: Boundary | None,
    t: float,
    m: int,
    stream: RngStream,
    *,
    dt_max: float = 0.01,
    min_survivors: int = 100,
    workers: int = 1,
) -> OracleCDF:
    """Monte Carlo reference for the law of X_t given survival up to t."""
    if boundary is not None and t > boundary.horizon:
        raise ValueError(f"t must not exceed the boundary horizon {boundary.horizon}")
    if m * math.exp(-t) < 1000:
        raise OracleStarvation(f"expected survivors m e^-t = {m * math.exp(-t):.1f} < 1000")
    run = run_families(
        m, driver, mu0, boundary, np.array([t]), t, dt_max, stream,
        branching=False, positions=True, workers=workers,
    )
    if run.pos.size < min_survivors:
        raise OracleStarvation(f"only {run.pos.size} of {m} paths survived to t={t}")
    return OracleCDF(run.pos, m)
