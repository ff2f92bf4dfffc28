"""Empirical distribution functions, goodness-of-fit tests and closed-form bounds.

The geometric-distribution helpers use the convention G(p) on {1, 2, ...} with
P(G = k) = p q^(k-1), q = 1 - p.  The BMP started from one particle has size
G(e^-t) at time t, which is where all of these quantities come from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

KS_CRIT_1PCT = 1.628
"""Asymptotic 1% critical value of the Kolmogorov distribution."""


class EmpiricalCDF:
    """Right-continuous step CDF of a finite sample."""

    def __init__(self, values):
        v = np.sort(np.asarray(values, dtype=float).ravel())
        if np.isnan(v).any():
            raise ValueError("EmpiricalCDF: NaN in sample")
        self.values = v

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __call__(self, r):
        if self.n == 0:
            return np.zeros_like(np.asarray(r, dtype=float))
        return np.searchsorted(self.values, r, side="right") / self.n

    def left_limit(self, r):
        """F(r-), the mass strictly below r."""
        if self.n == 0:
            return np.zeros_like(np.asarray(r, dtype=float))
        return np.searchsorted(self.values, r, side="left") / self.n

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"EmpiricalCDF(n={self.n})"


def sup_norm_distance(F: EmpiricalCDF, G: Union[EmpiricalCDF, Callable]) -> float:
    """Exact sup over the real line of |F - G|.

    Between consecutive jump points two step functions are constant, so for two
    empirical CDFs it is enough to compare right-continuous values at the pooled
    jump points.  A callable G is assumed continuous; then both one-sided limits
    of F at each of its jumps are compared against G.
    """
    if isinstance(G, EmpiricalCDF):
        if F.n == 0 and G.n == 0:
            return 0.0
        pts = np.concatenate([F.values, G.values])
        return float(np.max(np.abs(F(pts) - G(pts))))
    if F.n == 0:
        raise ValueError("sup_norm_distance: empty sample against a continuous CDF")
    x = F.values
    g = np.asarray(G(x), dtype=float)
    return float(max(np.max(np.abs(F(x) - g)), np.max(np.abs(F.left_limit(x) - g))))


def ks_exp1(samples, horizon: float | None = None) -> tuple[float, bool]:
    """One-sample KS statistic against Exp(1), with the 1% asymptotic test.

    With ``horizon`` set, samples beyond it are censored (``inf`` allowed) and
    the supremum runs over [0, horizon] only; the critical value stays the
    uncensored one, which makes the test conservative.
    """
    s = np.asarray(samples, dtype=float).ravel()
    m = s.size
    if m < 10:
        raise ValueError(f"ks_exp1 needs at least 10 samples, got {m}")
    if np.isnan(s).any() or (s <= 0).any():
        raise ValueError("ks_exp1: samples must be positive")
    if horizon is None:
        if np.isinf(s).any():
            raise ValueError("ks_exp1: infinite sample without a censoring horizon")
        x = np.sort(s)
    else:
        x = np.sort(s[s <= horizon])
    F = EmpiricalCDF(x)
    cdf = -np.expm1(-x)
    if x.size:
        hi = np.searchsorted(x, x, side="right") / m
        lo = np.searchsorted(x, x, side="left") / m
        d = max(np.max(np.abs(hi - cdf)), np.max(np.abs(lo - cdf)))
    else:
        d = 0.0
    if horizon is not None:
        # gap just before the horizon, where the empirical CDF is flat
        d = max(d, abs(F.n / m + math.expm1(-horizon)))
    d = float(d)
    return d, d <= KS_CRIT_1PCT / math.sqrt(m)


# ---------------------------------------------------------------- geometric law


@dataclass(frozen=True)
class GeomParams:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"geometric parameter must be in (0, 1), got {self.p}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def c(self) -> float:
        return -math.log1p(-self.p)


def geom_tail(g: GeomParams, K: float) -> float:
    """P(G > K) = e^{-cK}."""
    if K < 0:
        raise ValueError("geom_tail: K must be non-negative")
    return math.exp(-g.c * K)


def geom_truncated_mean(g: GeomParams, K: int) -> tuple[float, float]:
    """E(G 1{G > K}): exact value and the (K+2) e^{-cK} / p upper bound."""
    if K < 0 or int(K) != K:
        raise ValueError("geom_truncated_mean: K must be a non-negative integer")
    p, q = g.p, g.q
    exact = q**K * ((K + 1) * p + q) / p
    bound = (K + 2) * math.exp(-g.c * K) / p
    return exact, bound


def geom_legendre(g: GeomParams, x: float) -> float:
    """Rate function Lambda*_p(x) of the geometric law, x > 1."""
    if not x > 1.0:
        raise ValueError(f"geom_legendre: x must exceed 1, got {x}")
    return (x - 1.0) * math.log((x - 1.0) / (x * g.q)) - math.log(g.p * x)


def geom_cramer_lower_bound(g: GeomParams, x: float, n: int) -> float:
    """Upper bound e^{-n Lambda*_p(x)} on P(mean of n geometrics < x), 1 < x < 1/p."""
    if not 1.0 < x < 1.0 / g.p:
        raise ValueError("geom_cramer_lower_bound: x must lie in (1, 1/p)")
    if n < 0:
        raise ValueError("n must be non-negative")
    return math.exp(-n * geom_legendre(g, x))


def legendre_expansion_ref(tau: float) -> float:
    """Leading term (1 - ln 2) tau / 2 of Lambda*_{e^-tau}(1 / (1 - tau/2))."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return (1.0 - math.log(2.0)) * tau / 2.0


# ------------------------------------------------------------- explicit bounds


@dataclass(frozen=True)
class BoundInputs:
    N: int = 1000
    eta: float = 0.1
    delta: float = 0.1
    alpha: float = 0.25
    beta: float = 0.25
    t: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must be in (0, 1/2)")
        if not 0 < self.beta < 0.5:
            raise ValueError("beta must be in (0, 1/2)")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must be in (0, 1/2)")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not 0 <= self.t <= self.T or self.T <= 0:
            raise ValueError("need 0 <= t <= T and T > 0")


def second_moment_bmp(t: float) -> float:
    """C(t) = 2e^{2t} - e^t, the second moment of G(e^-t)."""
    return 2.0 * math.exp(2.0 * t) - math.exp(t)


def bound_formulas(inp: BoundInputs) -> dict[str, float]:
    N, eta, d, a, t, T = inp.N, inp.eta, inp.delta, inp.alpha, inp.t, inp.T
    C_t = second_moment_bmp(t)
    C_T = second_moment_bmp(T)
    c3 = -math.log(-math.expm1(-T))
    eT = math.exp(T)
    half = 0.5 - d
    out = {
        "C_t": C_t,
        "C_T": C_T,
        "c3": c3,
        "N0": max(8.0 * C_t / eta**2, 2.0),
        "N1": max(
            (2.0 / eta + 1.0) / (1.0 - d),
            (32.0 * C_T / eta**2 * (1.5 + d) + 1.0) / (1.0 - d),
        ),
        "N2_plus": max(32.0 * (1 + d) ** 2 * C_T / d**2 + 1.0, 3.0 / (1 + d)),
        "N2_minus": max(32.0 * (1 - d) ** 2 * C_T / d**2 + 1.0, 4.0 / (1 - d)),
        "rhs_gbmp": 16.0 * N**2 * math.exp(-(N ** (1 - 2 * a)) * eta**2 / 32.0)
        + 32.0 * eT * N**2 * math.exp(-c3 * N**a),
        "rhs_stobar": 256.0 * N**2 * math.exp(-(eta**2) * half ** (3 - 2 * a) * N ** (1 - 2 * a) / 128.0)
        + 512.0 * N**2 * math.exp(-c3 * half**a * N**a),
        "rhs_smallevents_plus": 3.0 * N * math.exp(-c3 * N**a)
        + 3.0 * N ** (1 + a) * (
            math.exp(-c3 * (N * d / 2.0 + 1.0))
            + 36.0 * N**2 * math.exp(-(d**2) * N ** (1 - 2 * a) / (128.0 * (1 + d) ** 2))
            + 72.0 * eT * N**2 * math.exp(-c3 * N**a)
        ),
        "rhs_smallevents_minus": N * math.exp(-c3 * N**a)
        + N ** (1 + a) * (
            math.exp(-c3 * (N * d / 2.0 + 1.0))
            + 16.0 * N**2 * math.exp(
                -((1 - d) ** (-1 - 2 * a)) * d**2 * N ** (1 - 2 * a) / (128.0 * 2 ** (1 - 2 * a))
            )
            + 32.0 * eT * N**2 * math.exp(-c3 * (1 - d) ** a * N**a / 2**a)
        ),
    }
    return out


def geometric_chisquare(sizes, p: float, min_expected: float = 5.0) -> tuple[float, float]:
    """Chi-square goodness of fit of positive integer data to G(p).

    Cells are k = 1, 2, ... merged into a final tail cell once the expected
    count would drop below ``min_expected``.  Returns (statistic, p-value).
    """
    from scipy import stats as sps

    x = np.asarray(sizes, dtype=np.int64)
    if (x < 1).any():
        raise ValueError("geometric data must be >= 1")
    n = x.size
    q = 1.0 - p
    K = 1
    while n * p * q ** K >= min_expected and n * q ** (K + 1) >= min_expected:
        K += 1
    # cells 1..K and tail > K
    obs = np.bincount(np.minimum(x, K + 1), minlength=K + 2)[1:]
    probs = np.array([p * q ** (k - 1) for k in range(1, K + 1)] + [q**K])
    res = sps.chisquare(obs, n * probs)
    return float(res.statistic), float(res.pvalue)


def loglog_slope(N_values, stat_values) -> float:
    """Least-squares slope of log(stat) against log(N)."""
    lx = np.log(np.asarray(N_values, dtype=float))
    ly = np.log(np.asarray(stat_values, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])
