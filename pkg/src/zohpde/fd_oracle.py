"""Brute-force finite-difference simulation of the original plant under sampled boundary feedback.

Grid with dt = dz = 1/N: advection is an exact shift along characteristics
and only the source term ``g(z) y(t,1) + int_z^1 f(z,s) y(t,s) ds`` and the
boundary relation ``y(t,0) = u(t) - int_0^1 p(s) y(t,s) ds`` are discretised
(Heun along characteristics, trapezoid in s).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .functions import FunctionSpec, InputError, ProblemData
from .ide_sim import (PIVOT_EPS, NumericalError, SamplingSchedule, StateProfile, Trace,
                      _grid_index)
from .kernels import TriangularKernel, _fmt, grid, row_trapz


def controller_u(y_prof: StateProfile, problem: ProblemData, k: TriangularKernel) -> float:
    """u_i = int_0^1 (p(s) + k(0, s)) y(tau_i, s) ds."""
    if y_prof.N != k.N:
        raise InputError(f"resolution mismatch: {y_prof.N} vs {k.N}")
    weight = problem.p(y_prof.z) + k.values[0]
    return float(np.trapezoid(weight * y_prof.values, dx=1.0 / k.N))


@dataclass(eq=False)
class FdRun:
    N: int
    profiles: dict
    supnorm_trace: Trace
    u_trace: Trace
    outlet_trace: Trace  # y(t, 1)
    files: dict = field(default_factory=dict)

    def to_csv(self, path):
        """Trace CSV with columns t, v, u (v is the outlet value y(t, 1))."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "v", "u"])
            for row in zip(self.u_trace.t, self.outlet_trace.values, self.u_trace.values):
                w.writerow([_fmt(x) for x in row])


class _Plant:
    def __init__(self, problem, N):
        self.N = N
        self.h = 1.0 / N
        z = grid(N)
        self.g = problem.g(z)
        self.p = problem.p(z)
        self.has_f = not problem.f.is_zero
        if self.has_f:
            Z, S = np.meshgrid(z, z, indexing="ij")
            self.F = np.triu(problem.f(Z, S))
        self.pivot = 1.0 + 0.5 * self.h * self.p[0]
        if abs(self.pivot) < PIVOT_EPS:
            raise NumericalError("degenerate boundary pivot 1 + (h/2) p(0); refine N")
        self.has_p = bool(np.any(self.p != 0))

    def source(self, y):
        s = self.g * y[-1]
        if self.has_f:
            s = s + row_trapz(self.F * y[None, :], self.h)
        return s

    def boundary(self, y, u):
        """Solve y0 = u - trapz(p y) for y0 (y0 enters with weight h/2 p(0))."""
        if not self.has_p:
            return u
        rest = np.dot(self.p[1:-1], y[1:-1]) + 0.5 * self.p[-1] * y[-1]
        return (u - self.h * rest) / self.pivot

    def step(self, y, u):
        h = self.h
        s_n = self.source(y)
        pred = np.empty_like(y)
        pred[1:] = y[:-1] + h * s_n[:-1]
        pred[0] = self.boundary(pred, u)
        s_p = self.source(pred)
        new = np.empty_like(y)
        new[1:] = y[:-1] + 0.5 * h * (s_n[:-1] + s_p[1:])
        new[0] = self.boundary(new, u)
        return new


def simulate_fd(problem: ProblemData, schedule: SamplingSchedule | None, k: TriangularKernel | None,
                y0: FunctionSpec, horizon: float, N: int, snapshot_times=(),
                open_loop: bool = False) -> FdRun:
    """March the closed loop (or the open loop with u = 0) on the CFL-1 grid.

    At each sampling time the boundary node is first advanced with the old
    input, the controller is evaluated on that profile, and the boundary is
    then re-solved with the new input.
    """
    if N < 50:
        raise InputError("FD resolution must be >= 50")
    if not open_loop:
        if schedule is None or k is None:
            raise InputError("closed loop needs a schedule and a kernel")
        if schedule.N != N or k.N != N:
            raise InputError("schedule, kernel and FD grids must share N")
    n_end = _grid_index(horizon, N)
    snaps = {}
    for t in snapshot_times:
        n = _grid_index(t, N)
        if n < 0 or n > n_end:
            raise InputError(f"snapshot time {t} outside [0, horizon]")
        snaps[n] = float(t)
    is_sample = np.zeros(n_end + 1, dtype=bool)
    if not open_loop:
        idx = schedule.indices
        is_sample[idx[idx <= n_end]] = True

    plant = _Plant(problem, N)
    h = 1.0 / N
    y = y0(grid(N)).astype(float)
    u = 0.0
    sup = np.empty(n_end + 1)
    outlet = np.empty(n_end + 1)
    us = np.empty(n_end + 1)
    profiles = {}
    for n in range(n_end + 1):
        if n > 0:
            y = plant.step(y, u)
        if is_sample[n]:
            u = controller_u(StateProfile(n * h, y), problem, k)
            y[0] = plant.boundary(y, u)
        elif n == 0:
            # the inlet node obeys the boundary relation from t = 0 on
            y[0] = plant.boundary(y, u)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"FD solution blew up at t={n * h}")
        sup[n] = np.max(np.abs(y))
        outlet[n] = y[-1]
        us[n] = u
        if n in snaps:
            profiles[snaps[n]] = StateProfile(snaps[n], y.copy())
    t = np.arange(n_end + 1) * h
    return FdRun(N, profiles, Trace(t, sup, "supnorm"), Trace(t, us, "u"), Trace(t, outlet, "y1"))


def write_manifest(path, entries):
    """Snapshot manifest: list of {file, t} objects."""
    with open(path, "w") as fh:
        json.dump({"snapshots": entries}, fh, indent=2, sort_keys=True)
        fh.write("\n")
