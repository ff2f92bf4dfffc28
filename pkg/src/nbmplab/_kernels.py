"""Compiled inner loops.

Drivers, laws and boundaries are passed to the kernels as flat arrays:

driver kind  0 Brownian with drift   dpar = (drift, sigma)
             1 Ornstein-Uhlenbeck    dpar = (theta, sigma, mean)
             2 compound Poisson      dpar = (rate, drift) + jump law
law kind     0 point mass (x)   1 uniform (a, b)   2 QSD of drifted BM (mu)
             3 quantile table (qu, qx)
boundary     grid bt, values bg, g0 (value used before bt[0], -inf when
             unconstrained); has_b = False disables killing.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from numba import njit

from . import drivers as drv

NEG_INF = -np.inf
_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def encode_law(law):
    empty = np.zeros(1)
    if isinstance(law, drv.PointMass):
        return 0, np.array([law.x, 0.0]), empty, empty
    if isinstance(law, drv.Uniform):
        return 1, np.array([law.a, law.b]), empty, empty
    if isinstance(law, drv.QsdDriftedBM):
        return 2, np.array([law.mu, 0.0]), empty, empty
    if isinstance(law, drv.ExplicitQuantile):
        return 3, np.zeros(2), np.array(law.u), np.array(law.x)
    raise TypeError(f"not an initial law: {law!r}")


def encode_driver(driver):
    """Flatten a driver into (kind, dpar, lkind, lpar, qu, qx)."""
    if isinstance(driver, drv.BrownianWithDrift):
        return (0, np.array([driver.drift, driver.sigma, 0.0])) + encode_law(drv.PointMass(0.0))
    if isinstance(driver, drv.OrnsteinUhlenbeck):
        return (1, np.array([driver.theta, driver.sigma, driver.mean])) + encode_law(drv.PointMass(0.0))
    if isinstance(driver, drv.CompoundPoissonDrift):
        return (2, np.array([driver.rate, driver.drift, 0.0])) + encode_law(driver.jumps)
    raise TypeError(f"not a driver: {driver!r}")


def encode_boundary(boundary):
    if boundary is None:
        return False, np.zeros(1), np.zeros(1), NEG_INF
    return True, np.asarray(boundary.t, dtype=float), np.asarray(boundary.gamma, dtype=float), float(boundary.gamma0)


# ------------------------------------------------------------------ helpers


@njit(cache=True, nogil=True)
def ndtr(z):
    return 0.5 * math.erfc(-z / _SQRT2)


@njit(cache=True, nogil=True)
def log_ndtr(z):
    if z > -20.0:
        return math.log(0.5 * math.erfc(-z / _SQRT2))
    # asymptotic Mills-ratio expansion
    z2 = z * z
    return -0.5 * z2 - math.log(-z) - _LOG_SQRT_2PI + math.log(1.0 - 1.0 / z2 + 3.0 / (z2 * z2))


@njit(cache=True, nogil=True)
def law_sample(lk, lpar, qu, qx, rng):
    if lk == 0:
        return lpar[0]
    if lk == 1:
        return lpar[0] + (lpar[1] - lpar[0]) * rng.random()
    if lk == 2:
        return (rng.standard_exponential() + rng.standard_exponential()) / lpar[0]
    return np.interp(rng.random(), qu, qx)


@njit(cache=True, nogil=True)
def jump_sum(k, lk, lpar, qu, qx, rng):
    # kept out of line: inlining this loop slows the diffusive branches ~5x
    y = 0.0
    for _ in range(k):
        y += law_sample(lk, lpar, qu, qx, rng)
    return y


@njit(cache=True, nogil=True, inline="always")
def transition(dk, dpar, lk, lpar, qu, qx, x, h, rng):
    if h <= 0.0:
        return x
    if dk == 0:
        return x + dpar[0] * h + dpar[1] * math.sqrt(h) * rng.standard_normal()
    if dk == 1:
        th = dpar[0]
        decay = math.exp(-th * h)
        sd = dpar[1] * math.sqrt(-math.expm1(-2.0 * th * h) / (2.0 * th))
        return dpar[2] + (x - dpar[2]) * decay + sd * rng.standard_normal()
    k = rng.poisson(dpar[0] * h)
    return x + dpar[1] * h + jump_sum(k, lk, lpar, qu, qx, rng)


@njit(cache=True, nogil=True, inline="always")
def coupled_transition(dk, dpar, lk, lpar, qu, qx, lo, hi, h, rng):
    if h <= 0.0:
        return lo, hi
    if dk == 0:
        inc = dpar[0] * h + dpar[1] * math.sqrt(h) * rng.standard_normal()
        return lo + inc, max(hi + inc, lo + inc)
    if dk == 1:
        th = dpar[0]
        decay = math.exp(-th * h)
        z = dpar[1] * math.sqrt(-math.expm1(-2.0 * th * h) / (2.0 * th)) * rng.standard_normal()
        a = dpar[2] + (lo - dpar[2]) * decay + z
        b = dpar[2] + (hi - dpar[2]) * decay + z
        return a, max(a, b)
    inc = dpar[1] * h + jump_sum(rng.poisson(dpar[0] * h), lk, lpar, qu, qx, rng)
    return lo + inc, max(hi + inc, lo + inc)


@njit(cache=True, nogil=True, inline="always")
def level(has_b, bt, bg, g0, t):
    if not has_b:
        return NEG_INF
    if t < bt[0]:
        return g0
    n = bt.size
    if t >= bt[n - 1]:
        return bg[n - 1]
    i = np.searchsorted(bt, t, side="right")
    w = (t - bt[i - 1]) / (bt[i] - bt[i - 1])
    return bg[i - 1] + w * (bg[i] - bg[i - 1])


@njit(cache=True, nogil=True, inline="always")
def bridge_prob(x, y, a, var):
    if x <= a or y <= a:
        return 1.0
    return math.exp(-2.0 * (x - a) * (y - a) / var)


@njit(cache=True, nogil=True)
def _bridge_hit_cdf(u, v, sig2, h, s):
    # P(bridge from a+u to a+v over [0,h] has gone below a by time s), unnormalised
    if s <= 0.0:
        return 0.0
    if s >= h:
        if v <= 0.0:
            return 1.0
        return math.exp(-2.0 * u * v / (sig2 * h))
    w = s / h
    sd = math.sqrt(sig2 * s * (h - s) / h)
    m1 = u * (1.0 - w) + v * w
    m2 = -u * (1.0 - w) + v * w
    return ndtr(-m1 / sd) + math.exp(-2.0 * u * v / (sig2 * h) + log_ndtr(m2 / sd))


@njit(cache=True, nogil=True)
def bridge_cross_time(x, y, a, sig2, h, rng):
    """Time in (0, h] at which a bridge from x to y first goes below a, given that it does."""
    u = x - a
    if u <= 0.0:
        return 0.0
    v = y - a
    total = _bridge_hit_cdf(u, v, sig2, h, h)
    target = rng.random() * total
    lo, hi = 0.0, h
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _bridge_hit_cdf(u, v, sig2, h, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit(cache=True, nogil=True)
def bridge_min(x, y, sig2, h, rng):
    """Exact sample of the minimum of a Brownian bridge from x to y over h."""
    d = x - y
    return 0.5 * (x + y - math.sqrt(d * d - 2.0 * sig2 * h * math.log(1.0 - rng.random())))


@njit(cache=True, nogil=True, inline="always")
def next_lattice(t, dt):
    k = math.floor(t / dt + 1e-9) + 1.0
    return k * dt


# ------------------------------------------------------------ gamma-BMP kernel


@njit(cache=True, nogil=True)
def _grow(a, n):
    b = np.empty(max(2 * a.size, n), a.dtype)
    b[: a.size] = a
    return b


OVERFLOW_POS, OVERFLOW_EVENTS, OVERFLOW_STACK = 1, 2, 3
STACK_START = 64


@functools.lru_cache(maxsize=None)
def _simulate_families_for(dk):
    # dk is frozen into the compiled code so the other driver branches are pruned.
    # Output buffers come from the caller and are never reassigned here: growing
    # arrays inside the loop made numba refcount them on every step (~20x slower).
    @njit(nogil=True)
    def kernel(
        x0, dpar, lk, lpar, qu, qx, has_b, bt, bg, g0, obs, horizon, dt_max,
        branching, want_pos, want_events, bridge, rng,
        counts, root_death, p_pos, p_fam, p_obs, p_id, e_t, e_s, e_f, sx, st, sc, sid,
    ):
        nf = x0.size
        nobs = obs.size
        cont = dk != 2 and bridge
        sig2 = dpar[1] * dpar[1] if dk != 2 else 0.0
        npos = 0
        nev = 0
        for f in range(nf):
            sx[0] = x0[f]
            st[0] = 0.0
            sc[0] = rng.standard_exponential() if branching else np.inf
            sid[0] = 0
            top = 1
            nid = 1
            while top > 0:
                top -= 1
                x = sx[top]
                t = st[top]
                c = sc[top]
                pid = sid[top]
                alive = True
                if pid == 0:
                    j = np.searchsorted(obs, t, side="left")
                    if x < level(has_b, bt, bg, g0, 0.0):
                        alive = False
                        root_death[f] = 0.0
                        if want_events:
                            if nev >= e_t.size:
                                return OVERFLOW_EVENTS, npos, nev
                            e_t[nev] = 0.0
                            e_s[nev] = -1
                            e_f[nev] = f
                            nev += 1
                else:
                    j = np.searchsorted(obs, t, side="right")
                while alive:
                    while j < nobs and obs[j] <= t:
                        counts[f, j] += 1
                        if want_pos:
                            if npos >= p_pos.size:
                                return OVERFLOW_POS, npos, nev
                            p_pos[npos] = x
                            p_fam[npos] = f
                            p_obs[npos] = j
                            p_id[npos] = pid
                            npos += 1
                        j += 1
                    if t >= horizon:
                        break
                    target = min(next_lattice(t, dt_max), horizon)
                    if j < nobs and obs[j] < target:
                        target = obs[j]
                    fired = c <= target
                    if fired:
                        target = c
                    h = target - t
                    y = transition(dk, dpar, lk, lpar, qu, qx, x, h, rng)
                    if has_b:
                        a = level(has_b, bt, bg, g0, target)
                        killed = False
                        tdeath = target
                        if cont:
                            if a > NEG_INF:
                                p = bridge_prob(x, y, a, sig2 * h)
                                if p >= 1.0 or rng.random() < p:
                                    killed = True
                                    tdeath = t + bridge_cross_time(x, y, a, sig2, h, rng)
                        elif y < a:
                            killed = True
                        if killed:
                            alive = False
                            if pid == 0:
                                root_death[f] = tdeath
                            if want_events:
                                if nev >= e_t.size:
                                    return OVERFLOW_EVENTS, npos, nev
                                e_t[nev] = tdeath
                                e_s[nev] = -1
                                e_f[nev] = f
                                nev += 1
                            break
                    x = y
                    t = target
                    if fired:
                        if top >= sx.size:
                            return OVERFLOW_STACK, npos, nev
                        sx[top] = x
                        st[top] = t
                        sc[top] = t + rng.standard_exponential()
                        sid[top] = nid
                        nid += 1
                        top += 1
                        c = t + rng.standard_exponential()
                        if want_events:
                            if nev >= e_t.size:
                                return OVERFLOW_EVENTS, npos, nev
                            e_t[nev] = t
                            e_s[nev] = 1
                            e_f[nev] = f
                            nev += 1
        return 0, npos, nev

    return kernel


def simulate_families(x0, dk, dpar, lk, lpar, qu, qx, has_b, bt, bg, g0, obs, horizon, dt_max,
                      branching, want_pos, want_events, bridge, rng):
    """Run one single-ancestor (gamma-)BMP per entry of x0, depth first.

    Returns counts (fam, obs), root death time per family (inf when the
    ancestor survives), alive positions at observation times as parallel
    arrays (position, family, obs index, spawn index), and size-change events
    (time, +1/-1, family).  With ``bridge`` off, continuous drivers are
    checked against the boundary at sub-step ends only.

    When a buffer fills up the generator is rewound and the run repeated with
    more room, so the output does not depend on the initial capacities.
    """
    kernel = _simulate_families_for(int(dk))
    nf, nobs = x0.size, obs.size
    pcap = max(16, 2 * nf) if want_pos else 1
    ecap = max(16, 4 * nf) if want_events else 1
    scap = STACK_START
    saved = rng.bit_generator.state
    while True:
        counts = np.zeros((nf, nobs), np.int64)
        root_death = np.full(nf, np.inf)
        pos = (np.empty(pcap), np.empty(pcap, np.int64), np.empty(pcap, np.int64), np.empty(pcap, np.int64))
        ev = (np.empty(ecap), np.empty(ecap, np.int64), np.empty(ecap, np.int64))
        stack = (np.empty(scap), np.empty(scap), np.empty(scap), np.empty(scap, np.int64))
        status, npos, nev = kernel(x0, dpar, lk, lpar, qu, qx, has_b, bt, bg, g0, obs, horizon, dt_max,
                                   branching, want_pos, want_events, bridge, rng,
                                   counts, root_death, *pos, *ev, *stack)
        if status == 0:
            return (counts, root_death, *(a[:npos] for a in pos), *(a[:nev] for a in ev))
        rng.bit_generator.state = saved
        if status == OVERFLOW_POS:
            pcap *= 4
        elif status == OVERFLOW_EVENTS:
            ecap *= 4
        else:
            scap *= 4


# ------------------------------------------------------- solver step (minima)


@functools.lru_cache(maxsize=None)
def _step_minima_for(dk):
    # dk is frozen into the compiled code so the other driver branches are pruned
    @njit(nogil=True)
    def kernel(x, alive, dpar, lk, lpar, qu, qx, h, substeps, bridge, rng):
        """Advance alive paths by h and return their running minimum over the step.

        With ``bridge``, continuous drivers use exact bridge minima between
        sub-step endpoints; otherwise (and always for the jump driver) only the
        sub-step endpoints are monitored.
        """
        n = x.size
        mins = np.full(n, np.inf)
        cont = dk != 2 and bridge
        sig2 = dpar[1] * dpar[1]
        hs = h / substeps
        for i in range(n):
            if not alive[i]:
                continue
            xi = x[i]
            m = np.inf
            for _ in range(substeps):
                y = transition(dk, dpar, lk, lpar, qu, qx, xi, hs, rng)
                if cont:
                    b = bridge_min(xi, y, sig2, hs, rng)
                else:
                    b = y
                if b < m:
                    m = b
                xi = y
            x[i] = xi
            mins[i] = m
        return mins

    return kernel


def step_minima(x, alive, dk, dpar, lk, lpar, qu, qx, h, substeps, bridge, rng):
    return _step_minima_for(int(dk))(x, alive, dpar, lk, lpar, qu, qx, h, substeps, bridge, rng)


# ----------------------------------------------------------------- N-BMP kernel


@functools.lru_cache(maxsize=None)
def _nbmp_run_for(dk):
    # dk is frozen into the compiled code so the other driver branches are pruned
    @njit(nogil=True)
    def kernel(x, dpar, lk, lpar, qu, qx, obs, horizon, rng, ev_cap):
        """Branching-selection dynamics with a global rate-N clock.

        At each event a uniformly chosen particle duplicates and the minimum
        (lowest index among ties) is removed; the newborn takes the freed slot.
        """
        N = x.size
        nobs = obs.size
        snaps = np.empty((nobs, N))
        ev_t = np.empty(ev_cap)
        ev_b = np.empty(ev_cap, np.int64)
        ev_r = np.empty(ev_cap, np.int64)
        nev = 0
        t = 0.0
        j = 0
        while j < nobs and obs[j] <= t:
            snaps[j, :] = x
            j += 1
        while True:
            tau = t + rng.standard_exponential() / N
            while j < nobs and obs[j] < tau:
                h = obs[j] - t
                for i in range(N):
                    x[i] = transition(dk, dpar, lk, lpar, qu, qx, x[i], h, rng)
                t = obs[j]
                snaps[j, :] = x
                j += 1
            if tau > horizon:
                break
            h = tau - t
            for i in range(N):
                x[i] = transition(dk, dpar, lk, lpar, qu, qx, x[i], h, rng)
            t = tau
            b = min(int(rng.random() * N), N - 1)
            r = 0
            xm = x[0]
            for i in range(1, N):
                if x[i] < xm:
                    xm = x[i]
                    r = i
            x[r] = x[b]
            if nev >= ev_t.size:
                ev_t = _grow(ev_t, nev + 1)
                ev_b = _grow(ev_b, nev + 1)
                ev_r = _grow(ev_r, nev + 1)
            ev_t[nev] = t
            ev_b[nev] = b
            ev_r[nev] = r
            nev += 1
        return snaps, ev_t[:nev], ev_b[:nev], ev_r[:nev]

    return kernel


def nbmp_run(x, dk, dpar, lk, lpar, qu, qx, obs, horizon, rng, ev_cap):
    return _nbmp_run_for(int(dk))(x, dpar, lk, lpar, qu, qx, obs, horizon, rng, ev_cap)


@njit(cache=True, nogil=True)
def bridge_cross_times(x, y, a, sig2, h, rng):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = bridge_cross_time(x[i], y[i], a[i], sig2, h[i], rng)
    return out
