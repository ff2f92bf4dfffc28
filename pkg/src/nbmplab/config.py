"""Experiment configuration: defaults, JSON loading, ``key=value`` overrides."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .boundary import Boundary, solve_boundary_mc
from .drivers import driver_from_record, law_from_record
from .persist import canonical_json, sha256_text
from .rng import RngStream

KINDS = ("solve-boundary", "run-nbmp", "run-gbmp", "run-coupled", "verify", "convergence-study", "bounds")
OUTPUT_ENV = "NBMPLAB_OUTPUT"


def _qsd_driver():
    return {"type": "BrownianWithDrift", "drift": -math.sqrt(2.0), "sigma": 1.0}


def _qsd_law():
    return {"type": "QsdDriftedBM", "mu": math.sqrt(2.0)}


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "nbmplab-out")


@dataclass
class ExperimentConfig:
    kind: str = "bounds"
    driver: dict = field(default_factory=_qsd_driver)
    initial_law: dict = field(default_factory=_qsd_law)
    N: int = 1000
    delta: float = 0.2
    beta: float = 0.25
    side: str = "upper"
    repair_rule: str = "lowest-index"
    T: float = 1.0
    t0: float = 0.2
    t: float = 1.0
    hydro_times: list = field(default_factory=lambda: [0.5, 1.0])
    solver_dt: float = 0.01
    obs_dt: float = 0.02
    dt_max: float = 0.01
    replicas: int = 20
    gamma_replicas: int = 200
    seed: int = 20240607
    oracle_paths: int = 1_000_000
    solver_paths: int = 100_000
    N_list: list = field(default_factory=lambda: [250, 1000, 4000])
    boundary: str = "zero"
    eta: float = 0.1
    alpha: float = 0.25
    workers: int = 1
    output_dir: str = field(default_factory=default_output_dir)
    verify_level: str = "fast"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        driver_from_record(self.driver)
        law_from_record(self.initial_law)
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.side not in ("upper", "lower"):
            raise ValueError("side must be 'upper' or 'lower'")
        if self.repair_rule not in ("lowest-index", "nearest"):
            raise ValueError("repair_rule must be 'lowest-index' or 'nearest'")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must be in (0, 1/2)")
        if not 0 < self.beta < 0.5:
            raise ValueError("beta must be in (0, 1/2)")
        if not 0 <= self.t0 < self.T:
            raise ValueError("need 0 <= t0 < T")
        if not 0 <= self.t <= self.T:
            raise ValueError("need 0 <= t <= T")
        if any(not 0 < h <= self.T for h in self.hydro_times):
            raise ValueError("hydro_times must lie in (0, T]")
        for name in ("solver_dt", "obs_dt", "dt_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.replicas < 1 or self.gamma_replicas < 1:
            raise ValueError("replica counts must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if list(self.N_list) != sorted(set(self.N_list)) or min(self.N_list) < 2:
            raise ValueError("N_list must be strictly increasing with entries >= 2")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.verify_level not in ("fast", "full"):
            raise ValueError("verify_level must be 'fast' or 'full'")
        if self.boundary not in ("zero", "solve", "none") and not Path(self.boundary).exists():
            raise ValueError(f"boundary must be 'zero', 'solve', 'none' or an existing CSV path, got {self.boundary!r}")

    # ------------------------------------------------------------ helpers

    def payload(self) -> dict:
        """Fields that determine the numbers (workers and output location excluded)."""
        d = asdict(self)
        d.pop("workers")
        d.pop("output_dir")
        return d

    def config_hash(self) -> str:
        return sha256_text(canonical_json(self.payload()))

    def driver_spec(self):
        return driver_from_record(self.driver)

    def law(self):
        return law_from_record(self.initial_law)

    def stream(self, *key: int) -> RngStream:
        return RngStream(self.seed, tuple(key))

    def obs_grid(self) -> np.ndarray:
        n = int(round(self.T / self.obs_dt))
        g = np.round(np.arange(n + 1) * self.obs_dt, 12)
        return np.unique(np.concatenate([g[g <= self.T], [self.T], self.hydro_times]))

    def solver_grid(self) -> np.ndarray:
        n = int(round(self.T / self.solver_dt))
        return np.round(np.arange(1, n + 1) * self.solver_dt, 12)

    def make_boundary(self) -> Boundary | None:
        if self.boundary == "none":
            return None
        if self.boundary == "zero":
            return Boundary.constant(0.0, self.T)
        if self.boundary == "solve":
            return solve_boundary_mc(
                self.driver_spec(), self.law(), self.solver_grid(), self.solver_paths,
                self.stream(90), workers=self.workers,
            )
        b = Boundary.load(self.boundary)
        if b.horizon < self.T:
            raise ValueError(f"boundary file horizon {b.horizon} is shorter than T={self.T}")
        return b


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    if name not in _FIELDS:
        raise KeyError(f"unknown config key {name!r}; known keys: {sorted(_FIELDS)}")
    current = getattr(ExperimentConfig(), name) if name != "output_dir" else ""
    if isinstance(current, (dict, list)):
        return json.loads(raw)
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def load_config(path=None, overrides=(), **kwargs) -> ExperimentConfig:
    data = {}
    if path is not None:
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(_FIELDS)
        if unknown:
            raise KeyError(f"unknown config keys {sorted(unknown)}")
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        data[k.strip()] = _coerce(k.strip(), v.strip())
    data.update({k: v for k, v in kwargs.items() if v is not None})
    return ExperimentConfig(**data)
