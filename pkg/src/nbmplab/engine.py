"""Block-parallel front end to the compiled family kernel.

Families are cut into fixed-size blocks; block ``b`` draws its initial
positions and all of its dynamics from ``stream.child(b)``.  Blocks are
independent, so results do not depend on how many worker threads run them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .drivers import sample_initial
from .rng import RngStream

BLOCK = 4096


def map_blocks(fn, items, workers: int = 1):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class FamilyRun:
    obs: np.ndarray
    counts: np.ndarray          # (families, obs)
    root_death: np.ndarray      # inf when the ancestor outlives the horizon
    pos: np.ndarray             # alive positions at observation times ...
    pos_family: np.ndarray
    pos_obs: np.ndarray
    pos_spawn: np.ndarray
    ev_time: np.ndarray         # size-change events, unsorted across blocks
    ev_step: np.ndarray
    ev_family: np.ndarray
    x0: np.ndarray


def run_families(
    n: int,
    driver,
    mu0,
    boundary,
    obs,
    horizon: float,
    dt_max: float,
    stream: RngStream,
    *,
    branching: bool = True,
    positions: bool = False,
    events: bool = False,
    bridge: bool = True,
    workers: int = 1,
    block: int = BLOCK,
) -> FamilyRun:
    if n < 0:
        raise ValueError("family count must be non-negative")
    if dt_max <= 0:
        raise ValueError("dt_max must be positive")
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 1 or np.any(np.diff(obs) < 0):
        raise ValueError("observation grid must be a sorted 1-d array")
    if obs.size and (obs[0] < 0 or obs[-1] > horizon):
        raise ValueError("observation times must lie in [0, horizon]")
    enc = K.encode_driver(driver)
    has_b, bt, bg, g0 = K.encode_boundary(boundary)

    def one(b):
        lo = b * block
        size = min(block, n - lo)
        rng = stream.child(b).generator()
        x0 = sample_initial(mu0, rng, size=size)
        out = K.simulate_families(
            x0, *enc, has_b, bt, bg, g0, obs, float(horizon), float(dt_max),
            branching, positions, events, bridge, rng,
        )
        return lo, x0, out

    nblocks = (n + block - 1) // block
    parts = map_blocks(one, range(nblocks), workers)
    if not parts:
        e = np.empty(0)
        ei = np.empty(0, np.int64)
        return FamilyRun(obs, np.zeros((0, obs.size), np.int64), e, e, ei, ei, ei, e, ei, ei, e)
    cat = np.concatenate
    return FamilyRun(
        obs=obs,
        counts=cat([p[2][0] for p in parts]),
        root_death=cat([p[2][1] for p in parts]),
        pos=cat([p[2][2] for p in parts]),
        pos_family=cat([p[2][3] + p[0] for p in parts]),
        pos_obs=cat([p[2][4] for p in parts]),
        pos_spawn=cat([p[2][5] for p in parts]),
        ev_time=cat([p[2][6] for p in parts]),
        ev_step=cat([p[2][7] for p in parts]),
        ev_family=cat([p[2][8] + p[0] for p in parts]),
        x0=cat([p[1] for p in parts]),
    )


def size_path(ev_time, ev_step, start: int):
    """Population size right after each size-change event, in time order.

    Returns (times, sizes) with the initial size prepended at time 0.
    """
    order = np.argsort(ev_time, kind="stable")
    t = ev_time[order]
    sizes = start + np.cumsum(ev_step[order])
    return np.concatenate([[0.0], t]), np.concatenate([[start], sizes]).astype(np.int64)
