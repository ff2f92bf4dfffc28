"""Experiment orchestration: run a configured experiment and persist its outputs."""

from __future__ import annotations

import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import conditional_law_oracle, crossing_times, solve_boundary_mc
from .config import ExperimentConfig
from .coupling import LOWER, UPPER, barrier_size, gamma_event_holds, run_coupled
from .engine import map_blocks
from .gbmp import gamma_event_path, run_gbmp
from .nbmp import run_nbmp
from .persist import write_csv, write_json
from .stats import BoundInputs, EmpiricalCDF, bound_formulas, ks_exp1, loglog_slope, sup_norm_distance

MANIFEST = "manifest.json"


@dataclass
class ExperimentResult:
    path: Path
    ok: bool
    summary: dict = field(default_factory=dict)


def output_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir) / f"{cfg.kind}-{cfg.config_hash()[:12]}"


def _versions() -> dict:
    import numba
    import scipy

    return {
        "nbmplab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    out = output_path(cfg)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    handler = _HANDLERS[cfg.kind]
    ok, summary = handler(cfg, out)
    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != MANIFEST)
    write_json(
        out / MANIFEST,
        {
            "config": cfg.payload(),
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "kind": cfg.kind,
            "ok": ok,
            "versions": _versions(),
            "wall_clock_seconds": time.perf_counter() - start,
            "workers": cfg.workers,
            "files": files,
        },
    )
    return ExperimentResult(out, ok, summary)


# ---------------------------------------------------------------- handlers


def _solve_boundary(cfg, out):
    b = solve_boundary_mc(cfg.driver_spec(), cfg.law(), cfg.solver_grid(), cfg.solver_paths, cfg.stream(90),
                          workers=cfg.workers)
    b.save(out / "boundary.csv")
    tau = crossing_times(b, cfg.driver_spec(), cfg.law(), cfg.solver_paths, cfg.stream(91), dt_max=cfg.dt_max,
                         workers=cfg.workers)
    d, passed = ks_exp1(tau, horizon=b.horizon)
    summary = {"max_abs_gamma": float(np.max(np.abs(b.gamma))), "ks_statistic": d, "ks_pass": passed}
    write_json(out / "summary.json", summary)
    return passed, summary


def _run_nbmp(cfg, out):
    obs = cfg.obs_grid()
    drv, law = cfg.driver_spec(), cfg.law()

    def one(r):
        return r, run_nbmp(cfg.N, drv, law, cfg.T, obs, cfg.stream(1, r))

    for r, run in map_blocks(one, range(cfg.replicas), cfg.workers):
        d = out / f"replica_{r:04d}"
        d.mkdir(exist_ok=True)
        write_csv(
            d / "snapshots.csv", ["t", "index", "position"],
            ((t, i, x) for t, row in zip(run.times, run.snapshots) for i, x in enumerate(row)),
        )
        write_csv(d / "minima.csv", ["t", "min"], zip(run.times, run.minima))
        write_csv(
            d / "events.csv", ["event_time", "branched_index", "removed_index"],
            zip(run.event_time, run.branched, run.removed),
        )
    return True, {"replicas": cfg.replicas}


def _run_gbmp(cfg, out):
    obs = cfg.obs_grid()
    b = cfg.make_boundary()
    drv, law = cfg.driver_spec(), cfg.law()
    totals = []
    for r in range(cfg.replicas):
        snaps = run_gbmp(cfg.N, drv, law, b, cfg.T, obs, cfg.dt_max, cfg.stream(2, r), workers=cfg.workers)
        d = out / f"replica_{r:04d}"
        d.mkdir(exist_ok=True)
        write_csv(
            d / "snapshots.csv", ["t", "family", "position"],
            ((s.time, f, x) for s in snaps for f, x in zip(s.family, s.positions)),
        )
        write_csv(
            d / "sizes.csv", ["t", "family", "count"],
            ((s.time, f, c) for s in snaps for f, c in enumerate(s.sizes)),
        )
        totals.append(snaps[-1].total)
    summary = {"final_total_mean": float(np.mean(totals)), "n": cfg.N}
    write_json(out / "summary.json", summary)
    return True, summary


def _run_coupled(cfg, out):
    obs = cfg.obs_grid()
    b = cfg.make_boundary()
    drv, law = cfg.driver_spec(), cfg.law()

    def one(r):
        return r, run_coupled(cfg.N, cfg.delta, cfg.side, drv, law, b, cfg.T, obs, cfg.stream(3, r),
                              dt_max=cfg.dt_max, keep_snapshots=False, repair_rule=cfg.repair_rule)

    violations = 0
    decoupled = 0
    for r, run in map_blocks(one, range(cfg.replicas), cfg.workers):
        d = out / f"replica_{r:04d}"
        d.mkdir(exist_ok=True)
        write_csv(d / "certificates.csv", ["t", "side", "dominance_ok", "gamma_ok", "decoupled"], run.certificates())
        write_csv(d / "sizes.csv", ["t", "size"], zip(run.size_times, run.sizes))
        violations += run.violations_before_decoupling()
        decoupled += run.decouple_time is not None
    summary = {"violations_before_decoupling": violations, "decoupled_runs": decoupled, "replicas": cfg.replicas}
    write_json(out / "summary.json", summary)
    return violations == 0, summary


def _bounds(cfg, out):
    inp = BoundInputs(N=cfg.N, eta=cfg.eta, delta=cfg.delta, alpha=cfg.alpha, beta=cfg.beta, t=cfg.t, T=cfg.T)
    vals = bound_formulas(inp)
    write_json(out / "bounds.json", vals)
    return True, vals


def _convergence(cfg, out):
    study = convergence_study(cfg, cfg.N_list, cfg.replicas)
    write_csv(out / "table.csv", STUDY_COLUMNS, ([row[c] for c in STUDY_COLUMNS] for row in study.rows))
    summary = {"slopes": {f"{t:g}": s for t, s in study.slopes.items()}}
    write_json(out / "summary.json", summary)
    return True, summary


def _verify(cfg, out):
    from .verify import run_criteria

    results = run_criteria(cfg.verify_level, seed=cfg.seed, workers=cfg.workers)
    write_json(out / "report.json", [r.as_dict() for r in results])
    for r in results:
        print(r.line())
    return all(r.passed for r in results), {r.id: r.passed for r in results}


_HANDLERS = {
    "solve-boundary": _solve_boundary,
    "run-nbmp": _run_nbmp,
    "run-gbmp": _run_gbmp,
    "run-coupled": _run_coupled,
    "bounds": _bounds,
    "convergence-study": _convergence,
    "verify": _verify,
}

# -------------------------------------------------------- convergence study

STUDY_COLUMNS = ["N", "t", "median_D", "iqr_D", "median_sup_min", "gamma_fail_upper", "gamma_fail_lower"]


@dataclass
class StudyTable:
    rows: list
    slopes: dict
    D: dict                 # (N, t) -> per-replica sup-norm distances
    sup_min: dict           # N -> per-replica sup_t |m^N_t - gamma_t| on [t0, T]
    gamma_fail: dict        # (N, side) -> failure frequency


def gamma_failure_frequency(cfg, N: int, side: str, replicas: int, boundary) -> float:
    """Frequency of the barrier leaving its favourable range on [0, T], delta = N^-beta / 2."""
    delta = N ** (-cfg.beta) / 2
    n0 = barrier_size(N, delta, side)
    b = boundary
    drv, law = cfg.driver_spec(), cfg.law()
    sid = 0 if side == UPPER else 1
    fails = 0
    for r in range(replicas):
        times, sizes = gamma_event_path(n0, drv, law, b, cfg.T, cfg.stream(6, sid, N, r), dt_max=cfg.dt_max,
                                        workers=cfg.workers)
        fails += not gamma_event_holds(times, sizes, N, side, cfg.T)
    return fails / replicas


def convergence_study(cfg: ExperimentConfig, N_list, replicas: int, *, gamma: bool = True) -> StudyTable:
    b = cfg.make_boundary()
    if b is None:
        raise ValueError("convergence study needs a boundary ('zero', 'solve' or a CSV path)")
    drv, law = cfg.driver_spec(), cfg.law()
    times = [float(t) for t in cfg.hydro_times]
    oracles = {
        t: conditional_law_oracle(drv, law, b, t, cfg.oracle_paths, cfg.stream(4, k), dt_max=cfg.dt_max,
                                  workers=cfg.workers)
        for k, t in enumerate(times)
    }
    obs = cfg.obs_grid()
    window = (obs >= cfg.t0 - 1e-12) & (obs <= cfg.T + 1e-12)
    gam = b.eval(obs[window])
    col = {t: int(np.flatnonzero(np.isclose(obs, t))[0]) for t in times}

    D, sup_min, gfail = {}, {}, {}
    for N in N_list:
        def one(r, N=N):
            return run_nbmp(N, drv, law, cfg.T, obs, cfg.stream(5, N, r))

        runs = map_blocks(one, range(replicas), cfg.workers)
        for t in times:
            D[(N, t)] = np.array([sup_norm_distance(EmpiricalCDF(run.snapshots[col[t]]), oracles[t]) for run in runs])
        sup_min[N] = np.array([np.max(np.abs(run.minima[window] - gam)) for run in runs])
        for side in (UPPER, LOWER):
            gfail[(N, side)] = gamma_failure_frequency(cfg, N, side, cfg.gamma_replicas, b) if gamma else math.nan

    rows = []
    for N in N_list:
        for t in times:
            q25, q50, q75 = np.percentile(D[(N, t)], [25, 50, 75])
            rows.append({
                "N": int(N), "t": t, "median_D": float(q50), "iqr_D": float(q75 - q25),
                "median_sup_min": float(np.median(sup_min[N])),
                "gamma_fail_upper": gfail[(N, UPPER)], "gamma_fail_lower": gfail[(N, LOWER)],
            })
    slopes = {t: loglog_slope(N_list, [np.median(D[(N, t)]) for N in N_list]) for t in times}
    return StudyTable(rows, slopes, D, sup_min, gfail)
