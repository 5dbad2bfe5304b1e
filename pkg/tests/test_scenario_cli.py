import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from zohpde.cli import main
from zohpde.scenario import (ConfigError, ScenarioConfig, load_config, run_scenario, sweep,
                             worker_count)


def small_example(**over):
    d = load_config("paper_example").to_dict()
    d.update(N=200, horizon=4.0, snapshot_times=[1.0, 2.0])
    d.update(over)
    return d


def write_cfg(tmp_path, d, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture(scope="module")
def example_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("paper_example")
    assert main(["run", "--config", "paper_example", "--out", str(out)]) == 0
    return out


def test_paper_example_run(example_out):
    rep = json.loads((example_out / "stability.json").read_text())
    assert rep["M"] == pytest.approx(math.e, abs=1e-3)
    assert rep["a"] == pytest.approx(-math.e, abs=1e-3)
    assert rep["sigma_max"] == pytest.approx(1.0578, abs=1e-3)
    assert rep["envelope_ok"] is True
    assert rep["sigma_fit"] > 0
    summary = json.loads((example_out / "summary.json").read_text())
    assert summary["max_cross_pathway_error"] <= 2e-2
    assert summary["max_abs_v_at_samples"] <= 1e-12


def test_paper_example_manifest(example_out):
    man = json.loads((example_out / "manifest.json").read_text())
    files = {e["path"]: e["sha256"] for e in man["files"]}
    names = set(files)
    expected = {"kernel_k.csv", "kernel_l.csv", "gain.csv", "schedule.csv", "ide_trace.csv",
                "ide_jumps.csv", "fd_trace.csv", "fd_supnorm.csv", "stability.json",
                "summary.json", "ide_snapshots.json", "fd_snapshots.json",
                "ide_profile_t1.csv", "fd_profile_t4.csv"}
    assert expected <= names
    for name, digest in files.items():
        assert hashlib.sha256((example_out / name).read_bytes()).hexdigest() == digest


def test_trace_and_profile_columns(example_out):
    head, data = read_csv(example_out / "ide_trace.csv")
    assert head == ["t", "v", "u"]
    assert data[0, 0] == 0.0 and data[-1, 0] == pytest.approx(8.0)
    assert read_csv(example_out / "fd_trace.csv")[0] == ["t", "v", "u"]
    assert read_csv(example_out / "ide_profile_t2.csv")[0] == ["z", "y"]
    assert read_csv(example_out / "gain.csv")[0] == ["s", "ktilde", "dktilde"]
    assert read_csv(example_out / "kernel_k.csv")[0] == ["z", "s", "value"]


def test_deterministic_outputs(tmp_path):
    cfg = write_cfg(tmp_path, small_example(schedule={"kind": "jittered", "T": 0.1, "seed": 7}))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_flag_changes_schedule(tmp_path):
    cfg = write_cfg(tmp_path, small_example(schedule={"kind": "jittered", "T": 0.1, "seed": 1}))
    main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--pathway", "ide"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--pathway", "ide", "--seed", "2"])
    assert (tmp_path / "a/schedule.csv").read_bytes() != (tmp_path / "b/schedule.csv").read_bytes()
    assert not (tmp_path / "a/fd_trace.csv").exists()


def test_open_loop_run(tmp_path):
    d = small_example(controller="open_loop", N=500, horizon=8.0, pathways="fd")
    assert main(["run", "--config", write_cfg(tmp_path, d), "--out", str(tmp_path / "o")]) == 0
    ol = json.loads((tmp_path / "o/open_loop.json").read_text())
    assert ol["stable"] is False
    assert ol["lambda"] == pytest.approx(1.49375, abs=1e-5)
    summary = json.loads((tmp_path / "o/summary.json").read_text())
    assert summary["growth_confirmed"] is True


def test_zero_problem_flushes(tmp_path):
    d = small_example(problem={"g": {"kind": "zero"}, "f": {"kind": "zero", "dim": 2},
                               "p": {"kind": "zero"}},
                      controller="open_loop", pathways="fd", horizon=2.0)
    assert main(["run", "--config", write_cfg(tmp_path, d), "--out", str(tmp_path / "z")]) == 0
    _, data = read_csv(tmp_path / "z/fd_supnorm.csv")
    assert np.all(data[data[:, 0] >= 1.0, 1] == 0.0)
    _, prof = read_csv(tmp_path / "z/fd_profile_t2.csv")
    assert np.all(prof[:, 1] == 0.0)


def test_infeasible_period_warns(tmp_path):
    d = small_example(schedule={"kind": "periodic", "T": 1.0, "seed": 0}, pathways="ide")
    man = run_scenario(ScenarioConfig.from_dict(d), tmp_path / "inf")
    assert man["stability"]["sigma_max"] == "infeasible"
    assert any("no decay rate" in w for w in man["warnings"])


@pytest.mark.parametrize("patch, field", [
    ({"N": 10}, "N"),
    ({"horizon": -1}, "horizon"),
    ({"schedule": {"kind": "random", "T": 0.1}}, "schedule.kind"),
    ({"schedule": {"kind": "periodic", "T": 0.001}}, "schedule.T"),
    ({"pathways": "all"}, "pathways"),
    ({"snapshot_times": [1.0005]}, "snapshot_times"),
    ({"colour": "red"}, "unknown fields"),
    ({"problem": {"g": {"kind": "exp_example", "A": -1, "r": 1}}}, "problem"),
])
def test_config_errors(tmp_path, capsys, patch, field):
    d = small_example(**patch)
    assert main(["run", "--config", write_cfg(tmp_path, d), "--out", str(tmp_path)]) == 2
    assert field in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["run", "--config", "not_a_bundled_name"]) == 2


def test_numerical_error_exit_code(tmp_path, capsys):
    # constant p = -2N makes the implicit pivot 1 + (h/2) ktilde(0) vanish
    d = small_example(N=50, horizon=2.0, snapshot_times=[],
                      problem={"g": {"kind": "zero"}, "f": {"kind": "zero", "dim": 2},
                               "p": {"kind": "polynomial", "coefficients": [-100.0]}})
    assert main(["run", "--config", write_cfg(tmp_path, d), "--out", str(tmp_path / "n")]) == 3
    assert "numerical error" in capsys.readouterr().err


def test_solve_kernels_verb(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small_example())
    assert main(["solve-kernels", "--config", cfg, "--out", str(tmp_path / "k")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["M"] == pytest.approx(math.e, abs=1e-3)
    assert (tmp_path / "k/kernel_l.csv").exists()


def test_stability_curve_cli(tmp_path):
    assert main(["stability-curve", "--M", "1", "--a", "0", "--T-min", "0.05", "--T-max", "0.5",
                 "--num", "10", "--out", str(tmp_path)]) == 0
    head, data = read_csv(tmp_path / "sigma_curve.csv")
    assert head == ["T", "sigma_max"]
    assert np.all(np.diff(data[:, 1]) < 0)
    np.testing.assert_allclose(data[:, 1], np.log(1 / data[:, 0]) / (1 + data[:, 0]), rtol=1e-12)


def test_stability_curve_from_config(tmp_path):
    cfg = write_cfg(tmp_path, small_example())
    assert main(["stability-curve", "--config", cfg, "--out", str(tmp_path / "c")]) == 0
    assert main(["stability-curve", "--M", "1"]) == 2


def test_sweep_T_with_unit_gain(tmp_path):
    # g = f = 0 and p(s) = s/2 give ktilde = p: M = |p(1)| + int |p'| = 1 and a = p(0) = 0
    d = small_example(problem={"g": {"kind": "zero"}, "f": {"kind": "zero", "dim": 2},
                               "p": {"kind": "polynomial", "coefficients": [0.0, 0.5]}},
                      pathways="ide")
    rows, path = sweep(ScenarioConfig.from_dict(d), "T", [0.05, 0.1, 0.2], tmp_path, workers=2)
    sig = [r["sigma_max"] for r in rows]
    assert all(r["status"] == "ok" for r in rows)
    assert sig == pytest.approx([math.log(1 / T) / (1 + T) for T in (0.05, 0.1, 0.2)], abs=1e-6)
    assert sig[0] > sig[1] > sig[2]
    head = path.read_text().splitlines()[0].split(",")
    assert head == ["value", "sigma_max", "sigma_fit", "max_cross_error", "envelope_ok", "status"]


def test_sweep_N_cross_error_shrinks(tmp_path):
    d = small_example(horizon=2.0, snapshot_times=[1.0, 2.0])
    rows, _ = sweep(ScenarioConfig.from_dict(d), "N", [200, 400], tmp_path, workers=1)
    e200, e400 = (r["max_cross_error"] for r in rows)
    assert e400 < 0.7 * e200


def test_sweep_cli_records_failures(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small_example(horizon=2.0, pathways="ide"))
    assert main(["sweep", "--config", cfg, "--axis", "seed", "--values", "1", "2",
                 "--out", str(tmp_path / "s")]) == 0
    assert json.loads(capsys.readouterr().out)["failed"] == 0
    assert main(["sweep", "--config", cfg, "--axis", "T", "--values", "abc"]) == 2


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("ZOH_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ZOH_THREADS", "x")
    with pytest.raises(ConfigError):
        worker_count()
    monkeypatch.delenv("ZOH_THREADS")
    assert worker_count() >= 1


def test_config_round_trip():
    cfg = load_config("paper_example")
    assert ScenarioConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
