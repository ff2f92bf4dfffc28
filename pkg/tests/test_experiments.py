import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbmplab import stats, verify
from nbmplab.cli import main
from nbmplab.config import ExperimentConfig, load_config
from nbmplab.experiments import convergence_study, run_experiment
from nbmplab.persist import read_csv, write_csv
from nbmplab.rng import RngStream


# ------------------------------------------------------------------ persistence


@given(st.lists(st.tuples(st.floats(allow_nan=False), st.integers(-10**12, 10**12), st.booleans()), max_size=20))
@settings(max_examples=100, deadline=None)
def test_csv_round_trip_is_byte_identical(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("csv")
    write_csv(d / "a.csv", ["x", "k", "flag"], rows)
    header, back = read_csv(d / "a.csv")
    write_csv(d / "b.csv", header, back)
    assert (d / "a.csv").read_bytes() == (d / "b.csv").read_bytes()
    for (x, _, _), r in zip(rows, back):
        assert float(r[0]) == x


def test_rng_streams_are_reproducible_and_distinct():
    a = RngStream(1, (2,)).generator().random(4)
    np.testing.assert_array_equal(a, RngStream(1, (2,)).generator().random(4))
    assert not np.array_equal(a, RngStream(1, (3,)).generator().random(4))
    assert RngStream(1).child(2, 3) == RngStream(1, (2, 3))


# ------------------------------------------------------------------ config


def test_overrides_are_coerced():
    cfg = load_config(None, ["N=250", "delta=0.1", "N_list=[10, 20]", "side=lower", "oracle_paths=1e5"])
    assert cfg.N == 250 and cfg.delta == 0.1 and cfg.N_list == [10, 20] and cfg.side == "lower"
    assert cfg.oracle_paths == 100_000


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"kind": "run-nbmp", "N": 7, "seed": 3}))
    cfg = load_config(path, ["seed=4"])
    assert (cfg.kind, cfg.N, cfg.seed) == ("run-nbmp", 7, 4)


@pytest.mark.parametrize("bad", [["N=0"], ["delta=0.7"], ["kind=dance"], ["t0=2"], ["nope=1"], ["N_list=[5, 3]"],
                                 ["boundary=/does/not/exist.csv"], ["N"]])
def test_invalid_configs_are_rejected(bad):
    with pytest.raises((ValueError, KeyError)):
        load_config(None, bad)


def test_hash_ignores_workers_and_output():
    a = ExperimentConfig(workers=1, output_dir="x")
    b = ExperimentConfig(workers=8, output_dir="y")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(seed=1).config_hash()


def test_observation_grid_includes_hydro_times():
    cfg = ExperimentConfig(T=1.0, obs_dt=0.3, hydro_times=[0.5])
    np.testing.assert_allclose(cfg.obs_grid(), [0.0, 0.3, 0.5, 0.6, 0.9, 1.0])


# ------------------------------------------------------------------ experiments


def test_bounds_experiment(tmp_path):
    res = run_experiment(ExperimentConfig(kind="bounds", T=1.0, t=1.0, eta=0.1, output_dir=str(tmp_path)))
    vals = json.loads((res.path / "bounds.json").read_text())
    assert vals["C_t"] == pytest.approx(12.059830369402254, rel=1e-14)
    manifest = json.loads((res.path / "manifest.json").read_text())
    assert manifest["config_hash"] == ExperimentConfig(kind="bounds").config_hash()
    assert manifest["files"] == ["bounds.json"]
    assert {"numpy", "scipy", "numba", "nbmplab"} <= set(manifest["versions"])


def test_single_particle_nbmp_minima_equal_positions(tmp_path):
    cfg = ExperimentConfig(kind="run-nbmp", N=1, replicas=2, T=0.4, t=0.4, obs_dt=0.1, hydro_times=[0.4],
                           output_dir=str(tmp_path))
    res = run_experiment(cfg)
    for rep in ("replica_0000", "replica_0001"):
        _, snaps = read_csv(res.path / rep / "snapshots.csv")
        _, mins = read_csv(res.path / rep / "minima.csv")
        assert [r[2] for r in snaps] == [r[1] for r in mins]


@pytest.mark.parametrize("extra", [
    {"kind": "run-gbmp", "N": 300, "replicas": 1, "T": 0.2, "t": 0.2, "t0": 0.0, "obs_dt": 0.1, "hydro_times": [0.2]},
    {"kind": "run-coupled", "N": 20, "replicas": 2, "T": 0.2, "t": 0.2, "t0": 0.0, "obs_dt": 0.1, "hydro_times": [0.2]},
])
def test_reruns_are_byte_identical(tmp_path, extra):
    paths = [run_experiment(ExperimentConfig(output_dir=str(tmp_path / d), **extra)).path for d in ("a", "b")]
    files = sorted(p.relative_to(paths[0]) for p in paths[0].rglob("*.csv"))
    assert files
    for rel in files:
        assert (paths[0] / rel).read_bytes() == (paths[1] / rel).read_bytes()


def test_written_csv_round_trips(tmp_path):
    res = run_experiment(ExperimentConfig(kind="run-coupled", N=10, replicas=1, T=0.2, t=0.2, t0=0.0, obs_dt=0.1,
                                          hydro_times=[0.2], output_dir=str(tmp_path)))
    for path in res.path.rglob("*.csv"):
        header, rows = read_csv(path)
        write_csv(tmp_path / "again.csv", header, rows)
        assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_convergence_study_with_one_replica_has_zero_iqr():
    cfg = ExperimentConfig(kind="convergence-study", oracle_paths=20_000, T=0.5, t=0.5, hydro_times=[0.5],
                           gamma_replicas=2)
    study = convergence_study(cfg, [20, 40], 1, gamma=True)
    assert [row["iqr_D"] for row in study.rows] == [0.0, 0.0]
    assert set(study.gamma_fail) == {(20, "upper"), (20, "lower"), (40, "upper"), (40, "lower")}
    assert math.isfinite(study.slopes[0.5])


def test_convergence_study_needs_a_boundary():
    with pytest.raises(ValueError):
        convergence_study(ExperimentConfig(kind="convergence-study", boundary="none"), [10, 20], 1)


# ------------------------------------------------------------------ cli


def test_cli_bounds_exit_code(tmp_path, capsys):
    assert main(["bounds", "--output", str(tmp_path), "--set", "eta=0.2", "--T", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] and out["summary"]["N0"] == pytest.approx(max(8 * stats.second_moment_bmp(1.0) / 0.04, 2))


def test_cli_rejects_bad_config(tmp_path, capsys):
    assert main(["run-nbmp", "--output", str(tmp_path), "--N", "0"]) == 2
    assert "invalid configuration" in capsys.readouterr().err


def test_cli_uses_output_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("NBMPLAB_OUTPUT", str(tmp_path))
    assert main(["bounds"]) == 0
    assert any(p.name.startswith("bounds-") for p in tmp_path.iterdir())


# ------------------------------------------------------------------ verify


def test_flipped_legendre_sign_is_caught(monkeypatch):
    good = stats.geom_legendre
    monkeypatch.setattr(stats, "geom_legendre", lambda g, x: -good(g, x))
    crit = verify.a1_appendix_exactness()
    assert not crit.passed
    assert crit.observed["max_err_legendre"] > 1e-3


def test_gamma_fail_trend_rule():
    assert verify.gamma_fail_trend([0.2, 0.1, 0.0])
    assert verify.gamma_fail_trend([0.2, 0.0, 0.0])
    assert not verify.gamma_fail_trend([0.0, 0.0, 0.0])
    assert not verify.gamma_fail_trend([0.2, 0.2, 0.1])


def test_criterion_line_format():
    c = verify.Criterion("A0", "demo", True, {"x": 0.123456789, "n": 3}, "none")
    assert c.line() == "A0 PASS demo | x=0.123457, n=3 | tolerance: none"
