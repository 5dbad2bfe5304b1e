"""Scenario configs, single runs with artifact output, and parameter sweeps."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import stability
from .fd_oracle import simulate_fd, write_manifest
from .functions import FunctionSpec, InputError, ProblemData, demo_initial_condition
from .ide_sim import (NumericalError, history_from_initial, make_schedule, reconstruct_y,
                      solve_ide)
from .kernels import ConvergenceError, _fmt, build_gain, solve_kernel_k, solve_kernel_l

log = logging.getLogger(__name__)

ENVELOPE_EPS = 0.05
PATHWAYS = ("ide", "fd", "both")
CONTROLLERS = ("emulated", "open_loop")


class ConfigError(InputError):
    """Invalid scenario config; the message names the offending field."""


@dataclass
class ScenarioConfig:
    problem: ProblemData = field(default_factory=ProblemData)
    y0: FunctionSpec = field(default_factory=demo_initial_condition)
    N: int = 1000
    horizon: float = 8.0
    schedule: dict = field(default_factory=lambda: {"kind": "periodic", "T": 0.1, "seed": 0})
    controller: str = "emulated"
    sigma_request: Optional[float] = None
    snapshot_times: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    output_dir: str = "out"
    pathways: str = "both"

    FIELDS = ("problem", "y0", "N", "horizon", "schedule", "controller", "sigma_request",
              "snapshot_times", "output_dir", "pathways")

    @classmethod
    def from_dict(cls, d) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: top level must be a JSON object")
        unknown = set(d) - set(cls.FIELDS)
        if unknown:
            raise ConfigError(f"config: unknown fields {sorted(unknown)}")
        kw = {}
        try:
            if "problem" in d:
                kw["problem"] = ProblemData.from_dict(d["problem"])
        except (InputError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"problem: {exc}") from exc
        try:
            if "y0" in d:
                kw["y0"] = FunctionSpec.from_dict(d["y0"], 1)
        except (InputError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"y0: {exc}") from exc
        for name in ("N", "horizon", "controller", "sigma_request", "snapshot_times",
                     "output_dir", "pathways"):
            if name in d:
                kw[name] = d[name]
        if "schedule" in d:
            sched = d["schedule"]
            if not isinstance(sched, dict):
                raise ConfigError("schedule: must be an object")
            extra = set(sched) - {"kind", "T", "seed"}
            if extra:
                raise ConfigError(f"schedule: unknown fields {sorted(extra)}")
            kw["schedule"] = {"kind": "periodic", "T": 0.1, "seed": 0, **sched}
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.N, int) or isinstance(self.N, bool) or self.N < 50:
            raise ConfigError(f"N: must be an integer >= 50, got {self.N!r}")
        if not _is_number(self.horizon) or self.horizon <= 0:
            raise ConfigError(f"horizon: must be a positive number, got {self.horizon!r}")
        if abs(self.horizon * self.N - round(self.horizon * self.N)) > 1e-6:
            raise ConfigError("horizon: must be a multiple of 1/N")
        kind = self.schedule.get("kind")
        if kind not in ("periodic", "jittered"):
            raise ConfigError(f"schedule.kind: must be 'periodic' or 'jittered', got {kind!r}")
        T = self.schedule.get("T")
        if not _is_number(T) or T < 2.0 / self.N:
            raise ConfigError(f"schedule.T: must be a number >= 2/N, got {T!r}")
        seed = self.schedule.get("seed")
        if seed is not None and (not isinstance(seed, int) or seed < 0):
            raise ConfigError(f"schedule.seed: must be a nonnegative integer, got {seed!r}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller: must be one of {CONTROLLERS}")
        if self.sigma_request is not None and (not _is_number(self.sigma_request)
                                               or self.sigma_request < 0):
            raise ConfigError("sigma_request: must be a nonnegative number or null")
        if self.pathways not in PATHWAYS:
            raise ConfigError(f"pathways: must be one of {PATHWAYS}")
        if not isinstance(self.snapshot_times, list):
            raise ConfigError("snapshot_times: must be a list")
        for t in self.snapshot_times:
            if not _is_number(t) or t < 0 or t > self.horizon:
                raise ConfigError(f"snapshot_times: {t!r} outside [0, horizon]")
            if abs(t * self.N - round(t * self.N)) > 1e-6:
                raise ConfigError(f"snapshot_times: {t!r} is not on the time grid")
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigError("output_dir: must be a non-empty string")

    def to_dict(self):
        return {
            "problem": self.problem.to_dict(),
            "y0": self.y0.to_dict(),
            "N": self.N,
            "horizon": self.horizon,
            "schedule": dict(self.schedule),
            "controller": self.controller,
            "sigma_request": self.sigma_request,
            "snapshot_times": list(self.snapshot_times),
            "output_dir": self.output_dir,
            "pathways": self.pathways,
        }


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def load_config(path) -> ScenarioConfig:
    """Read a JSON config; a bare name such as ``paper_example`` loads a bundled one."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = resources.files("zohpde") / "configs" / f"{path}.cfg"
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    return ScenarioConfig.from_dict(data)


@lru_cache(maxsize=8)
def _kernels_cached(problem_json, N):
    problem = ProblemData.from_dict(json.loads(problem_json))
    k = solve_kernel_k(problem, N)
    l = solve_kernel_l(problem, N)
    return k, l, build_gain(problem, k, l)


def compute_kernels(problem: ProblemData, N: int):
    """(k, l, gain); cached per process so sweeps reuse one solve."""
    return _kernels_cached(json.dumps(problem.to_dict(), sort_keys=True), N)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _tname(t):
    return format(float(t), "g")


class _Outputs:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.root / name

    def manifest(self, extra):
        entries = [{"path": f, "sha256": _sha256(self.root / f)} for f in self.files]
        data = {"files": entries, **extra}
        _write_json(self.root / "manifest.json", data)
        return data


def solve_kernels_to(config: ScenarioConfig, out_dir=None):
    out = _Outputs(out_dir or config.output_dir)
    k, l, gain = compute_kernels(config.problem, config.N)
    k.to_csv(out.path("kernel_k.csv"))
    l.to_csv(out.path("kernel_l.csv"))
    gain.to_csv(out.path("gain.csv"))
    return out.manifest({"M": gain.M, "a": gain.a})


def run_scenario(config: ScenarioConfig, out_dir=None):
    """Run one scenario and write all artifacts; returns the manifest dict.

    Raises ConfigError, NumericalError or ConvergenceError.
    """
    out = _Outputs(out_dir or config.output_dir)
    problem, N, horizon = config.problem, config.N, float(config.horizon)
    warnings = []
    summary = {}

    k, l, gain = compute_kernels(problem, N)
    k.to_csv(out.path("kernel_k.csv"))
    l.to_csv(out.path("kernel_l.csv"))
    gain.to_csv(out.path("gain.csv"))

    T = float(config.schedule["T"])
    sigma_max = stability.max_sigma(gain.M, gain.a, T)
    if sigma_max == stability.INFEASIBLE:
        warnings.append(f"M p_a(T) >= 1 for T={T}: no decay rate is certified; running anyway")

    y0 = config.y0
    if config.controller == "open_loop":
        return _run_open_loop(config, out, warnings)

    schedule = make_schedule(config.schedule["kind"], T, horizon, config.schedule.get("seed"), N)
    out_sched = out.path("schedule.csv")
    with open(out_sched, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau"])
        for t in schedule.times:
            w.writerow([_fmt(t)])

    if config.sigma_request is not None:
        sigma_used = float(config.sigma_request)
        if isinstance(sigma_max, float) and sigma_used >= sigma_max:
            warnings.append(f"sigma_request={sigma_used} violates the sampling bound "
                            f"(sigma_max={sigma_max:.6g})")
    elif isinstance(sigma_max, float):
        sigma_used = 0.95 * sigma_max
    elif sigma_max == stability.UNBOUNDED:
        sigma_used = 1.0
    else:
        sigma_used = 0.0

    report = stability.StabilityReport(gain.M, gain.a, T, sigma_max, sigma_used)
    ide_profiles, fd_profiles = {}, {}
    fit_trace = None

    if config.pathways in ("ide", "both"):
        run = solve_ide(gain, schedule, history_from_initial(y0, k), horizon)
        run.to_csv(out.path("ide_trace.csv"))
        run.jumps_to_csv(out.path("ide_jumps.csv"))
        snaps = []
        for t in config.snapshot_times:
            prof = reconstruct_y(run, l, t)
            ide_profiles[t] = prof
            name = f"ide_profile_t{_tname(t)}.csv"
            prof.to_csv(out.path(name))
            snaps.append({"file": name, "t": float(t)})
        v = run.v_right[N:]
        report.envelope_ok = stability.envelope_holds(run.t, v, sigma_used, run.initial_sup,
                                                      ENVELOPE_EPS)
        if not report.envelope_ok:
            warnings.append(f"IDE envelope check failed for sigma={sigma_used:.6g}")
        summary["max_abs_v_at_samples"] = float(np.max(np.abs(v[schedule.indices[
            schedule.indices <= run.n_steps]])))
        fit_trace = run.v_trace
        _write_json(out.path("ide_snapshots.json"), {"snapshots": snaps})

    if config.pathways in ("fd", "both"):
        fd = simulate_fd(problem, schedule, k, y0, horizon, N, config.snapshot_times)
        fd.to_csv(out.path("fd_trace.csv"))
        fd.supnorm_trace.to_csv(out.path("fd_supnorm.csv"))
        snaps = []
        for t, prof in sorted(fd.profiles.items()):
            fd_profiles[t] = prof
            name = f"fd_profile_t{_tname(t)}.csv"
            prof.to_csv(out.path(name))
            snaps.append({"file": name, "t": t})
        write_manifest(out.path("fd_snapshots.json"), snaps)
        fit_trace = fd.supnorm_trace

    if fit_trace is not None and horizon > 2.0:
        try:
            report.G_fit, report.sigma_fit = stability.fit_envelope(fit_trace, 1.0)
        except stability.InsufficientDataError as exc:
            warnings.append(f"envelope fit skipped: {exc}")

    if ide_profiles and fd_profiles:
        errs = {_tname(t): float(np.max(np.abs(ide_profiles[t].values - fd_profiles[float(t)].values)))
                for t in config.snapshot_times}
        summary["cross_pathway_error"] = errs
        summary["max_cross_pathway_error"] = max(errs.values()) if errs else None

    report.to_json(out.path("stability.json"))
    summary["envelope_fit"] = {"G_fit": report.G_fit, "sigma_fit": report.sigma_fit,
                               "fit_window": [1.0, horizon]}
    _write_json(out.path("summary.json"), summary)
    for msg in warnings:
        log.warning(msg)
    return out.manifest({"warnings": warnings, "stability": report.to_dict(), "summary": summary})


def _example_parameters(problem: ProblemData):
    g = problem.g
    if g.kind == "exp_example" and problem.f.is_zero and problem.p.is_zero:
        return g.A, g.r
    return None


def _run_open_loop(config, out, warnings):
    summary = {}
    N, horizon = config.N, float(config.horizon)
    if config.pathways == "ide":
        warnings.append("open loop runs on the FD pathway only")
    fd = simulate_fd(config.problem, None, None, config.y0, horizon, N,
                     config.snapshot_times, open_loop=True)
    fd.to_csv(out.path("fd_trace.csv"))
    fd.supnorm_trace.to_csv(out.path("fd_supnorm.csv"))
    snaps = []
    for t, prof in sorted(fd.profiles.items()):
        name = f"fd_profile_t{_tname(t)}.csv"
        prof.to_csv(out.path(name))
        snaps.append({"file": name, "t": t})
    write_manifest(out.path("fd_snapshots.json"), snaps)

    if horizon >= 3.0:
        t_end = min(7.0, horizon - 1.0) if horizon > 3.0 else horizon
        try:
            _, rate = stability.fit_log_rate(fd.supnorm_trace.t, fd.supnorm_trace.values,
                                             2.0, t_end, envelope=False)
            summary["growth_rate"] = rate
            summary["growth_window"] = [2.0, t_end]
        except stability.InsufficientDataError as exc:
            warnings.append(f"growth fit skipped: {exc}")

    params = _example_parameters(config.problem)
    if params is not None:
        rep = stability.open_loop_test(*params)
        rep.to_json(out.path("open_loop.json"))
        if not rep.stable and "growth_rate" in summary:
            rel = abs(summary["growth_rate"] - rep.lambda_) / max(rep.lambda_, 1e-12)
            summary["growth_confirmed"] = bool(rep.lambda_ > 0 and rel <= 0.05)
        summary["open_loop"] = rep.to_dict()
    _write_json(out.path("summary.json"), summary)
    for msg in warnings:
        log.warning(msg)
    return out.manifest({"warnings": warnings, "summary": summary})


# -- sweeps -------------------------------------------------------------------

SWEEP_AXES = ("T", "N", "seed")


def _apply_axis(config: ScenarioConfig, axis, value):
    cfg = copy.deepcopy(config)
    if axis == "T":
        cfg.schedule["T"] = float(value)
    elif axis == "N":
        cfg.N = int(value)
    elif axis == "seed":
        cfg.schedule["seed"] = int(value)
    else:
        raise ConfigError(f"axis: must be one of {SWEEP_AXES}")
    cfg.validate()
    return cfg


def _sweep_one(args):
    cfg, axis, value, out_dir = args
    row = {"value": value, "sigma_max": None, "sigma_fit": None,
           "max_cross_error": None, "envelope_ok": None, "status": "ok"}
    try:
        man = run_scenario(cfg, out_dir)
        rep = man["stability"]
        row.update(sigma_max=rep["sigma_max"], sigma_fit=rep["sigma_fit"],
                   envelope_ok=rep["envelope_ok"],
                   max_cross_error=man["summary"].get("max_cross_pathway_error"))
    except (InputError, NumericalError, ConvergenceError) as exc:
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
    return row


def worker_count():
    env = os.environ.get("ZOH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ZOH_THREADS: must be an integer, got {env!r}")
    return os.cpu_count() or 1


def sweep(config: ScenarioConfig, axis, values, out_dir=None, workers=None):
    """Run the scenario once per value of ``axis``; writes ``sweep_<axis>.csv``.

    Failed runs are kept as rows with a ``failed: ...`` status.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis: must be one of {SWEEP_AXES}")
    if config.controller != "emulated":
        raise ConfigError("controller: sweeps need the emulated controller")
    root = Path(out_dir or config.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    jobs = []
    for v in values:
        cfg = _apply_axis(config, axis, v)
        jobs.append((cfg, axis, v, str(root / f"{axis}_{_tname(v)}")))
    workers = workers or worker_count()
    if workers == 1 or len(jobs) == 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    path = root / f"sweep_{axis}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "sigma_max", "sigma_fit", "max_cross_error", "envelope_ok", "status"])
        for r in rows:
            w.writerow([_cell(r[c]) for c in ("value", "sigma_max", "sigma_fit",
                                               "max_cross_error", "envelope_ok", "status")])
    return rows, path


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return _fmt(x)
    return str(x)
