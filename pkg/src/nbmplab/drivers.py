"""One-dimensional Markov drivers with exact transitions and monotone couplings.

Three drivers are shipped, all stochastically monotone and all sampled exactly
in law (no Euler steps):

* ``BrownianWithDrift``   x + b dt + sigma W_dt
* ``OrnsteinUhlenbeck``   exact Gaussian transition of dX = theta (m - X) dt + sigma dW
* ``CompoundPoissonDrift`` drift plus a Poisson(rate dt) number of i.i.d. jumps

Initial laws double as jump-size laws for the compound Poisson driver.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np
from scipy.special import ndtr

from .rng import RngLike, as_generator

# ----------------------------------------------------------------- initial laws


@dataclass(frozen=True)
class PointMass:
    x: float = 0.0


@dataclass(frozen=True)
class Uniform:
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"Uniform needs b > a, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class QsdDriftedBM:
    """Density mu^2 x e^{-mu x} on (0, inf): the Yaglom limit of BM with drift -mu killed at 0."""

    mu: float = math.sqrt(2.0)

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("QsdDriftedBM needs mu > 0")

    def cdf(self, r):
        r = np.maximum(np.asarray(r, dtype=float), 0.0)
        return 1.0 - (1.0 + self.mu * r) * np.exp(-self.mu * r)


@dataclass(frozen=True)
class ExplicitQuantile:
    """Piecewise-linear quantile function through (u, x) knots, u running from 0 to 1."""

    u: tuple[float, ...] = (0.0, 1.0)
    x: tuple[float, ...] = (0.0, 1.0)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if u.ndim != 1 or u.shape != x.shape or u.size < 2:
            raise ValueError("quantile table needs matching u and x columns with >= 2 rows")
        if not (np.all(np.diff(u) > 0) and np.all(np.diff(x) > 0)):
            raise ValueError("quantile table must be strictly increasing in both columns")
        if u[0] != 0.0 or u[-1] != 1.0:
            raise ValueError("quantile table must span u = 0 to u = 1")
        if not np.all(np.isfinite(x)):
            raise ValueError("quantile table values must be finite")
        object.__setattr__(self, "u", tuple(float(v) for v in u))
        object.__setattr__(self, "x", tuple(float(v) for v in x))


InitialLaw = Union[PointMass, Uniform, QsdDriftedBM, ExplicitQuantile]

# ---------------------------------------------------------------------- drivers


@dataclass(frozen=True)
class BrownianWithDrift:
    drift: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    theta: float = 1.0
    sigma: float = 1.0
    mean: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class CompoundPoissonDrift:
    rate: float = 1.0
    jumps: InitialLaw = field(default_factory=lambda: Uniform(-1.0, 1.0))
    drift: float = 0.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("jump rate must be non-negative")


DriverSpec = Union[BrownianWithDrift, OrnsteinUhlenbeck, CompoundPoissonDrift]

_LAWS = {c.__name__: c for c in (PointMass, Uniform, QsdDriftedBM, ExplicitQuantile)}
_DRIVERS = {c.__name__: c for c in (BrownianWithDrift, OrnsteinUhlenbeck, CompoundPoissonDrift)}


def is_continuous(driver: DriverSpec) -> bool:
    return not isinstance(driver, CompoundPoissonDrift)


def local_sigma(driver: DriverSpec) -> float:
    if isinstance(driver, CompoundPoissonDrift):
        raise ValueError("jump driver has no diffusive volatility")
    return driver.sigma


# ------------------------------------------------------------------- records


def law_to_record(law: InitialLaw) -> dict:
    rec = {"type": type(law).__name__}
    d = asdict(law)
    if isinstance(law, ExplicitQuantile):
        d = {"u": list(law.u), "x": list(law.x)}
    rec.update(d)
    return rec


def law_from_record(rec: dict) -> InitialLaw:
    rec = dict(rec)
    try:
        cls = _LAWS[rec.pop("type")]
    except KeyError as exc:
        raise ValueError(f"unknown initial law {exc}; expected one of {sorted(_LAWS)}") from None
    if cls is ExplicitQuantile:
        return ExplicitQuantile(tuple(rec["u"]), tuple(rec["x"]))
    return cls(**rec)


def driver_to_record(driver: DriverSpec) -> dict:
    rec = {"type": type(driver).__name__}
    for k, v in asdict(driver).items():
        rec[k] = v
    if isinstance(driver, CompoundPoissonDrift):
        rec["jumps"] = law_to_record(driver.jumps)
    return rec


def driver_from_record(rec: dict) -> DriverSpec:
    rec = dict(rec)
    try:
        cls = _DRIVERS[rec.pop("type")]
    except KeyError as exc:
        raise ValueError(f"unknown driver {exc}; expected one of {sorted(_DRIVERS)}") from None
    if cls is CompoundPoissonDrift and "jumps" in rec:
        rec["jumps"] = law_from_record(rec["jumps"])
    return cls(**rec)


# ------------------------------------------------------------------ sampling


def sample_initial(law: InitialLaw, stream: RngLike, size=None):
    rng = as_generator(stream)
    if isinstance(law, PointMass):
        out = np.full(() if size is None else size, float(law.x))
    elif isinstance(law, Uniform):
        out = rng.uniform(law.a, law.b, size=size)
    elif isinstance(law, QsdDriftedBM):
        # Gamma(2, 1/mu)
        out = rng.gamma(2.0, 1.0 / law.mu, size=size)
    elif isinstance(law, ExplicitQuantile):
        out = np.interp(rng.random(size=size), law.u, law.x)
    else:
        raise TypeError(f"not an initial law: {law!r}")
    return float(out) if size is None else np.asarray(out, dtype=float)


def _ou_coeffs(d: OrnsteinUhlenbeck, dt):
    decay = np.exp(-d.theta * dt)
    sd = d.sigma * np.sqrt(-np.expm1(-2.0 * d.theta * dt) / (2.0 * d.theta))
    return decay, sd


def _jump_sum(d: CompoundPoissonDrift, dt, rng, shape):
    counts = rng.poisson(d.rate * np.broadcast_to(dt, shape))
    total = np.zeros(shape)
    flat_c = np.ravel(counts)
    n = int(flat_c.sum())
    if n:
        draws = sample_initial(d.jumps, rng, size=n)
        owner = np.repeat(np.arange(flat_c.size), flat_c)
        total = np.bincount(owner, weights=draws, minlength=flat_c.size).reshape(shape)
    return total


def _check_dt(dt):
    dt_arr = np.asarray(dt, dtype=float)
    if (dt_arr < 0).any() or np.isnan(dt_arr).any():
        raise ValueError("transition time step must be non-negative")
    return dt_arr


def sample_transition(driver: DriverSpec, x, dt, stream: RngLike):
    """Sample X_dt given X_0 = x (vectorised over x and dt)."""
    dt_arr = _check_dt(dt)
    rng = as_generator(stream)
    x_arr = np.asarray(x, dtype=float)
    shape = np.broadcast_shapes(x_arr.shape, dt_arr.shape)
    if isinstance(driver, BrownianWithDrift):
        y = x_arr + driver.drift * dt_arr + driver.sigma * np.sqrt(dt_arr) * rng.standard_normal(shape)
    elif isinstance(driver, OrnsteinUhlenbeck):
        decay, sd = _ou_coeffs(driver, dt_arr)
        y = driver.mean + (x_arr - driver.mean) * decay + sd * rng.standard_normal(shape)
    elif isinstance(driver, CompoundPoissonDrift):
        y = x_arr + driver.drift * dt_arr + _jump_sum(driver, dt_arr, rng, shape)
    else:
        raise TypeError(f"not a driver: {driver!r}")
    y = np.where(dt_arr == 0, x_arr, y)
    return float(y) if np.ndim(y) == 0 else y


def coupled_transition(driver: DriverSpec, x_low, x_high, dt, stream: RngLike):
    """Order-preserving joint step of two copies of the driver.

    Diffusions share their Gaussian noise; the jump driver shares its jump
    counts and sizes, so the gap is carried over unchanged.
    """
    dt_arr = _check_dt(dt)
    lo = np.asarray(x_low, dtype=float)
    hi = np.asarray(x_high, dtype=float)
    if (lo > hi).any():
        raise ValueError("coupled_transition requires x_low <= x_high")
    rng = as_generator(stream)
    shape = np.broadcast_shapes(lo.shape, hi.shape, dt_arr.shape)
    if isinstance(driver, BrownianWithDrift):
        inc = driver.drift * dt_arr + driver.sigma * np.sqrt(dt_arr) * rng.standard_normal(shape)
        y_lo, y_hi = lo + inc, hi + inc
    elif isinstance(driver, OrnsteinUhlenbeck):
        decay, sd = _ou_coeffs(driver, dt_arr)
        z = sd * rng.standard_normal(shape)
        y_lo = driver.mean + (lo - driver.mean) * decay + z
        y_hi = driver.mean + (hi - driver.mean) * decay + z
    elif isinstance(driver, CompoundPoissonDrift):
        inc = driver.drift * dt_arr + _jump_sum(driver, dt_arr, rng, shape)
        y_lo, y_hi = lo + inc, hi + inc
    else:
        raise TypeError(f"not a driver: {driver!r}")
    y_lo = np.where(dt_arr == 0, lo, y_lo)
    y_hi = np.where(dt_arr == 0, hi, np.maximum(y_hi, y_lo))
    if np.ndim(y_lo) == 0:
        return float(y_lo), float(y_hi)
    return y_lo, y_hi


# ----------------------------------------------------------- crossing oracles


def bridge_crossing_prob(driver: DriverSpec, x, y, a, dt):
    """Probability that the bridge from x to y over dt dips below level a.

    Exact for Brownian drivers; for Ornstein-Uhlenbeck the Brownian-bridge
    formula with the local volatility is used as an approximation.
    """
    if not is_continuous(driver):
        raise ValueError("bridge crossing is defined for continuous-path drivers only")
    dt_arr = np.asarray(dt, dtype=float)
    if (dt_arr <= 0).any():
        raise ValueError("bridge crossing needs dt > 0")
    x, y, a = (np.asarray(v, dtype=float) for v in (x, y, a))
    var = driver.sigma**2 * dt_arr
    with np.errstate(over="ignore", invalid="ignore"):
        p = np.exp(-2.0 * (x - a) * (y - a) / var)
    p = np.where((x <= a) | (y <= a), 1.0, np.minimum(p, 1.0))
    return float(p) if np.ndim(p) == 0 else p


def crossing_prob_exact_bm(x: float, y: float, t: float, drift: float = 0.0, sigma: float = 1.0) -> float:
    """Q_x(tau_y <= t) for x + drift s + sigma W_s, y <= x (Bachelier-Levy formula)."""
    if x < y:
        raise ValueError("crossing_prob_exact_bm needs x >= y")
    if t < 0:
        raise ValueError("t must be non-negative")
    if x == y:
        return 1.0
    if t == 0:
        return 0.0
    d = x - y
    s = sigma * math.sqrt(t)
    first = ndtr((-d - drift * t) / s)
    expo = -2.0 * drift * d / sigma**2
    second = ndtr((-d + drift * t) / s)
    # exp(expo) * second in log space; the product never exceeds 1
    tail = 0.0 if second == 0.0 else math.exp(expo + math.log(second))
    return float(min(first + tail, 1.0))
