"""Coupling of the fixed-size system with a killed branching barrier.

Upper side: a killed branching system started from ceil(N(1+delta))
particles is run alongside the N-particle system so that every N-particle is
paired with a barrier particle sitting at or above it.  Lower side: a barrier
of floor(N(1-delta)) particles, each paired with an N-particle at or above it.

Paired particles move with the order-preserving coupled step and branch on a
shared clock.  When a pairing is broken (barrier particle killed on the upper
side, N-particle removed by selection on the lower side) the orphan is
re-paired with the lowest-index free particle on the other side that keeps
the order.  The two systems are decoupled when the barrier size leaves the
favourable range (below N on the upper side, above N on the lower side);
afterwards they evolve independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import Boundary
from .drivers import (
    DriverSpec,
    InitialLaw,
    bridge_crossing_prob,
    coupled_transition,
    is_continuous,
    sample_initial,
    sample_transition,
)
from ._kernels import next_lattice
from .rng import RngStream, as_generator

UPPER = "upper"
LOWER = "lower"
REPAIR_RULES = ("lowest-index", "nearest")


def check_dominance(x, y) -> bool:
    """x is dominated by y: #{x >= r} <= #{y >= r} for every r."""
    xs = np.sort(np.asarray(x, dtype=float))[::-1]
    ys = np.sort(np.asarray(y, dtype=float))[::-1]
    if xs.size > ys.size:
        return False
    return bool(np.all(xs <= ys[: xs.size]))


def gamma_event_holds(times, sizes, N: int, side: str, up_to: float) -> bool:
    t = np.asarray(times, dtype=float)
    s = np.asarray(sizes)
    seen = s[t <= up_to]
    if side == UPPER:
        return bool(np.all(seen >= N))
    if side == LOWER:
        return bool(np.all(seen <= N))
    raise ValueError(f"side must be '{UPPER}' or '{LOWER}'")


def barrier_size(N: int, delta: float, side: str) -> int:
    if side == UPPER:
        return math.ceil(N * (1 + delta))
    if side == LOWER:
        return math.floor(N * (1 - delta))
    raise ValueError(f"side must be '{UPPER}' or '{LOWER}'")


@dataclass
class CoupledRun:
    side: str
    N: int
    delta: float
    times: np.ndarray
    x_snapshots: list = field(default_factory=list)
    barrier_snapshots: list = field(default_factory=list)
    dominance: list = field(default_factory=list)
    gamma_ok: list = field(default_factory=list)
    decoupled: list = field(default_factory=list)
    pairs_ok: list = field(default_factory=list)
    size_times: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    decouple_time: float | None = None
    decouple_reason: str | None = None

    def certificates(self):
        return [
            (float(t), self.side, bool(d), bool(g), bool(c))
            for t, d, g, c in zip(self.times, self.dominance, self.gamma_ok, self.decoupled)
        ]

    def violations_before_decoupling(self) -> int:
        return sum(1 for d, c in zip(self.dominance, self.decoupled) if not c and not d)


class _State:
    def __init__(self, side, N, x, b, rule="lowest-index"):
        self.side = side
        self.rule = rule
        self.N = N
        self.x = x
        cap = max(16, 4 * b.size)
        self.b = np.empty(cap)
        self.b[: b.size] = b
        self.alive = np.zeros(cap, dtype=bool)
        self.alive[: b.size] = True
        self.nb = b.size
        self.x2b = np.full(N, -1, dtype=np.int64)
        self.b2x = np.full(cap, -1, dtype=np.int64)
        self.coupled = True

    def add_barrier(self, pos):
        if self.nb == self.b.size:
            grow = self.b.size
            self.b = np.concatenate([self.b, np.empty(grow)])
            self.alive = np.concatenate([self.alive, np.zeros(grow, dtype=bool)])
            self.b2x = np.concatenate([self.b2x, np.full(grow, -1, dtype=np.int64)])
        j = self.nb
        self.b[j] = pos
        self.alive[j] = True
        self.nb += 1
        return j

    def pair(self, i, j):
        self.x2b[i] = j
        self.b2x[j] = i

    def unpair_x(self, i):
        j = self.x2b[i]
        if j >= 0:
            self.b2x[j] = -1
            self.x2b[i] = -1
        return j

    def unpair_b(self, j):
        i = self.b2x[j]
        if i >= 0:
            self.x2b[i] = -1
            self.b2x[j] = -1
        return i

    def decouple(self):
        self.coupled = False
        self.x2b[:] = -1
        self.b2x[:] = -1

    def alive_count(self):
        return int(np.count_nonzero(self.alive[: self.nb]))

    def barrier_positions(self):
        return self.b[: self.nb][self.alive[: self.nb]].copy()

    def ordered(self, i, j):
        if self.side == UPPER:
            return self.x[i] <= self.b[j]
        return self.b[j] <= self.x[i]

    def pairs_ordered(self):
        ix = np.flatnonzero(self.x2b >= 0)
        jb = self.x2b[ix]
        if self.side == UPPER:
            return bool(np.all(self.x[ix] <= self.b[jb]))
        return bool(np.all(self.b[jb] <= self.x[ix]))

    def repair_x(self, i):
        """Upper side: find a free barrier particle at or above x[i]."""
        n = self.nb
        free = self.alive[:n] & (self.b2x[:n] < 0) & (self.b[:n] >= self.x[i])
        cand = np.flatnonzero(free)
        if cand.size:
            self.pair(i, self._pick(cand, self.b[cand] - self.x[i]))
            return True
        return False

    def repair_b(self, j):
        """Lower side: find a free N-particle at or above b[j]."""
        free = (self.x2b < 0) & (self.x >= self.b[j])
        cand = np.flatnonzero(free)
        if cand.size:
            self.pair(self._pick(cand, self.x[cand] - self.b[j]), j)
            return True
        return False

    def _pick(self, cand, gap):
        if self.rule == "nearest":
            return int(cand[np.argmin(gap)])
        return int(cand[0])

    def rematch(self):
        """Re-pair everything by rank; False when no order-preserving pairing exists."""
        live = np.flatnonzero(self.alive[: self.nb])
        bx = live[np.argsort(-self.b[live], kind="stable")]
        if self.side == UPPER:
            xi = np.argsort(-self.x, kind="stable")
            if xi.size > bx.size or np.any(self.x[xi] > self.b[bx[: xi.size]]):
                return False
            self.x2b[:] = -1
            self.b2x[:] = -1
            for i, j in zip(xi, bx[: xi.size]):
                self.pair(int(i), int(j))
            return True
        xi = np.argsort(-self.x, kind="stable")
        if bx.size > xi.size or np.any(self.b[bx] > self.x[xi[: bx.size]]):
            return False
        self.x2b[:] = -1
        self.b2x[:] = -1
        for j, i in zip(bx, xi[: bx.size]):
            self.pair(int(i), int(j))
        return True


def run_coupled(
    N: int,
    delta: float,
    side: str,
    driver: DriverSpec,
    mu0: InitialLaw,
    boundary: Boundary | None,
    T: float,
    obs_grid,
    stream: RngStream,
    *,
    dt_max: float = 0.01,
    keep_snapshots: bool = True,
    repair_rule: str = "lowest-index",
) -> CoupledRun:
    """Run the N-particle system coupled with a killed barrier on one side.

    ``repair_rule`` picks the partner of an orphan among the admissible free
    particles: the lowest index, or the nearest in position.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    if not 0 < delta < 0.5:
        raise ValueError("delta must be in (0, 1/2)")
    if repair_rule not in REPAIR_RULES:
        raise ValueError(f"repair_rule must be one of {REPAIR_RULES}")
    if boundary is not None and T > boundary.horizon:
        raise ValueError("horizon exceeds the boundary horizon")
    nb0 = barrier_size(N, delta, side)
    obs = np.asarray(obs_grid, dtype=float)
    rng = as_generator(stream)
    cont = is_continuous(driver)

    x = np.atleast_1d(sample_initial(mu0, rng, size=N)).astype(float)
    if side == UPPER:
        extra = np.atleast_1d(sample_initial(mu0, rng, size=nb0 - N))
        b = np.concatenate([x, extra])
        st = _State(side, N, x, b, repair_rule)
        for i in range(N):
            st.pair(i, i)
    else:
        st = _State(side, N, x, x[:nb0].copy(), repair_rule)
        for i in range(nb0):
            st.pair(i, i)

    run = CoupledRun(side, N, delta, obs)
    gamma_ok = True
    t = 0.0

    def note_size():
        nonlocal gamma_ok
        n = st.alive_count()
        run.size_times.append(t)
        run.sizes.append(n)
        if (side == UPPER and n < N) or (side == LOWER and n > N):
            gamma_ok = False
        return n

    def drop(reason):
        if st.coupled:
            st.decouple()
            run.decouple_time = t
            run.decouple_reason = reason

    def kill(dead):
        orphans = []
        for j in dead:
            st.alive[j] = False
            orphans.append(st.unpair_b(j))
        note_size()
        if st.coupled and not gamma_ok:
            drop("gamma")
        if side == UPPER and st.coupled:
            for i in orphans:
                if i >= 0 and not st.repair_x(i) and not st.rematch():
                    drop("order")
                    break

    # killing at time 0
    if boundary is not None:
        g0 = boundary.eval(0.0)
        dead0 = [j for j in range(st.nb) if st.b[j] < g0]
        note_size()
        if dead0:
            kill(dead0)
    else:
        note_size()

    j_obs = 0

    def observe():
        nonlocal j_obs
        while j_obs < obs.size and obs[j_obs] <= t:
            bp = st.barrier_positions()
            if keep_snapshots:
                run.x_snapshots.append(st.x.copy())
                run.barrier_snapshots.append(bp)
            if side == UPPER:
                run.dominance.append(check_dominance(st.x, bp))
            else:
                run.dominance.append(check_dominance(bp, st.x))
            run.gamma_ok.append(gamma_ok)
            run.decoupled.append(not st.coupled)
            run.pairs_ok.append(st.pairs_ordered())
            j_obs += 1

    observe()
    while t < T:
        n_alive = st.alive_count()
        npairs = int(np.count_nonzero(st.x2b >= 0))
        rate = N + n_alive - npairs
        tau = t + rng.standard_exponential() / rate
        stop = min(tau, next_lattice(t, dt_max), T)
        if j_obs < obs.size and obs[j_obs] < stop:
            stop = obs[j_obs]
        fired = stop == tau
        h = stop - t

        # movement
        n = st.nb
        px = np.flatnonzero(st.x2b >= 0)
        pb = st.x2b[px]
        free_x = np.flatnonzero(st.x2b < 0)
        free_b = np.flatnonzero(st.alive[:n] & (st.b2x[:n] < 0))
        live = np.flatnonzero(st.alive[:n])
        start_b = st.b[live].copy()
        if px.size:
            if side == UPPER:
                lo, hi = coupled_transition(driver, st.x[px], st.b[pb], h, rng)
                st.x[px], st.b[pb] = lo, hi
            else:
                lo, hi = coupled_transition(driver, st.b[pb], st.x[px], h, rng)
                st.b[pb], st.x[px] = lo, hi
        if free_x.size:
            st.x[free_x] = sample_transition(driver, st.x[free_x], h, rng)
        if free_b.size:
            st.b[free_b] = sample_transition(driver, st.b[free_b], h, rng)
        t = stop

        # killing
        if boundary is not None and live.size:
            a = boundary.eval(t)
            if a > -math.inf:
                end_b = st.b[live]
                if cont:
                    p = np.atleast_1d(bridge_crossing_prob(driver, start_b, end_b, a, h))
                    hit = rng.random(live.size) < p
                else:
                    hit = end_b < a
                if hit.any():
                    kill(live[hit])

        # branching
        if fired:
            groups_x = np.flatnonzero(st.x2b >= 0)
            single_x = np.flatnonzero(st.x2b < 0)
            n = st.nb
            single_b = np.flatnonzero(st.alive[:n] & (st.b2x[:n] < 0))
            u = int(rng.random() * rate)
            if u < groups_x.size:
                i = int(groups_x[u])
                _branch_pair(st, i, int(st.x2b[i]), drop)
                if side == LOWER:
                    note_size()
                    if st.coupled and not gamma_ok:
                        drop("gamma")
                else:
                    note_size()
            elif u < groups_x.size + single_x.size:
                _branch_x(st, int(single_x[u - groups_x.size]), drop)
            elif u < groups_x.size + single_x.size + single_b.size:
                st.add_barrier(st.b[single_b[u - groups_x.size - single_x.size]])
                note_size()
                if side == LOWER and st.coupled and not gamma_ok:
                    drop("gamma")
            # otherwise the chosen clock belonged to a particle killed this step
        observe()
    return run


def _select(st: _State, i: int) -> int:
    """Duplicate N-particle i into the slot of the current minimum; return that slot."""
    pos = st.x[i]
    r = int(np.argmin(st.x))
    st.x[r] = pos
    return r


def _branch_pair(st: _State, i: int, j: int, drop) -> None:
    jn = st.add_barrier(st.b[j])
    r = _select(st, i)
    q = st.unpair_x(r)
    if st.side == UPPER:
        st.pair(r, jn)
        return
    if st.alive_count() > st.N:
        return
    st.pair(r, jn)
    if q >= 0 and not st.repair_b(q) and not st.rematch():
        drop("order")


def _branch_x(st: _State, i: int, drop) -> None:
    r = _select(st, i)
    q = st.unpair_x(r)
    if st.coupled and q >= 0 and st.side == LOWER:
        if not st.repair_b(q) and not st.rematch():
            drop("order")
