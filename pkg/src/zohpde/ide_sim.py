"""Closed-loop simulation through the integral delay equation for the boundary trace.

The transformed state is pure transport, so the whole closed loop reduces to
the scalar equation

    v(t) = u(t) - int_0^1 ktilde(s) v(t - s) ds,    u(t) = u_i on [tau_i, tau_{i+1}),

with ``u_i = int_0^1 ktilde(s) v(tau_i - s) ds``.  Time is discretised on a
uniform grid of step 1/N, so the delay window is exactly N steps long.  Every
node stores a right value and a left limit; they differ only at sampling
times, where v jumps.  Quadrature intervals use the right value at their left
end and the left limit at their right end, which is what splitting an
interval at a jump amounts to when jumps sit on nodes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .functions import FunctionSpec, InputError
from .kernels import GainProfile, TriangularKernel, grid, row_trapz, _fmt

PIVOT_EPS = 1e-12


class NumericalError(ArithmeticError):
    """A discretisation became singular; refine the grid."""


@dataclass(frozen=True, eq=False)
class Trace:
    """Scalar time series on a grid."""

    t: np.ndarray
    values: np.ndarray
    name: str = "value"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", self.name])
            for row in zip(self.t, self.values):
                w.writerow([_fmt(x) for x in row])


@dataclass(frozen=True, eq=False)
class StateProfile:
    """Spatial profile on z_j = j/N."""

    t: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise InputError("profile needs at least two nodes")
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite profile values at t={self.t}")
        object.__setattr__(self, "values", v)

    @property
    def N(self):
        return self.values.size - 1

    @property
    def z(self):
        return grid(self.N)

    @classmethod
    def from_function(cls, func: FunctionSpec, N, t=0.0):
        return cls(t, func(grid(N)))

    def sup(self):
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "y"])
            for row in zip(self.z, self.values):
                w.writerow([_fmt(x) for x in row])


# -- sampling schedules -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class SamplingSchedule:
    """Sampling times snapped to the time grid of step 1/N."""

    times: np.ndarray
    sup_gap: float
    N: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size == 0 or t[0] != 0.0:
            raise InputError("schedule must start at 0")
        if np.any(np.diff(t) <= 0):
            raise InputError("schedule times must be strictly increasing")
        if t.size > 1 and np.max(np.diff(t)) > self.sup_gap + 1e-12:
            raise InputError("schedule gap exceeds sup_gap")
        object.__setattr__(self, "times", t)

    @property
    def indices(self):
        return np.rint(self.times * self.N).astype(np.int64)

    def to_list(self):
        return [float(x) for x in self.times]


def make_schedule(kind, T, horizon, seed=None, N=1000) -> SamplingSchedule:
    """Periodic (tau_i = iT) or jittered (gaps uniform on [T/2, T]) sampling.

    Gaps are rounded down to whole time steps, so the snapped schedule never
    exceeds the requested sup gap.
    """
    h = 1.0 / N
    if not T > 0 or T < 2 * h - 1e-12:
        raise InputError(f"sampling bound T={T} must be at least two time steps ({2 * h})")
    if not horizon > 0:
        raise InputError("horizon must be positive")
    n_end = int(round(horizon * N))
    max_steps = int(np.floor(T * N + 1e-9))
    if kind == "periodic":
        idx = np.arange(0, n_end + 1, max_steps)
    elif kind == "jittered":
        rng = np.random.default_rng(seed)
        min_steps = max(1, int(np.ceil(0.5 * T * N - 1e-9)))
        idx = [0]
        while idx[-1] < n_end:
            gap = rng.uniform(0.5 * T, T)
            steps = min(max(int(np.floor(gap * N + 1e-9)), min_steps), max_steps)
            idx.append(idx[-1] + steps)
        idx = np.asarray(idx)
    else:
        raise InputError(f"unknown schedule kind {kind!r}")
    return SamplingSchedule(idx / N, float(T), N)


# -- history window -----------------------------------------------------------

class HistoryBuffer:
    """Sliding window of v over [t - 1, t] on N + 1 grid nodes.

    ``right`` holds the right-continuous node values, ``left`` the left
    limits.  Mutated in place by the stepping functions; owned by one run.
    """

    def __init__(self, N, values, left=None, step=0):
        values = np.array(values, dtype=float)
        if values.shape != (N + 1,):
            raise InputError(f"history window must have N + 1 = {N + 1} nodes")
        if not np.all(np.isfinite(values)):
            raise NumericalError("non-finite history values")
        self.N = N
        self.right = values
        self.left = values.copy() if left is None else np.array(left, dtype=float)
        self.step = step

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def t_now(self):
        return self.step / self.N

    @property
    def window(self):
        return self.right.copy()

    @property
    def jumps(self):
        """(time, left limit) for every discontinuity in (t - 1, t]."""
        idx = np.nonzero(self.left[1:] != self.right[1:])[0] + 1
        t0 = self.t_now - 1.0
        return [(t0 + i * self.h, float(self.left[i])) for i in idx]

    def copy(self):
        return HistoryBuffer(self.N, self.right, self.left, self.step)

    def push(self, value):
        self.right[:-1] = self.right[1:]
        self.left[:-1] = self.left[1:]
        self.right[-1] = value
        self.left[-1] = value
        self.step += 1

    def set_current(self, value):
        """Overwrite the right value of the newest node, keeping its left limit."""
        self.right[-1] = value

    def integral(self, weights):
        """``int_{t-1}^t w(t - s) v(s) ds`` with ``weights[m] = w(m h)``."""
        w = weights[::-1]
        body = w[0] * self.right[0] + w[-1] * self.left[-1]
        body += np.dot(w[1:-1], self.left[1:-1] + self.right[1:-1])
        return 0.5 * self.h * body


def forward_transform(y_prof: StateProfile, k: TriangularKernel) -> StateProfile:
    """x(z) = y(z) - int_z^1 k(z, s) y(s) ds."""
    _match(y_prof.N, k.N)
    y = y_prof.values
    return StateProfile(y_prof.t, y - row_trapz(k.values * y[None, :], k.h))


def inverse_transform(x_prof: StateProfile, l: TriangularKernel) -> StateProfile:
    """y(z) = x(z) + int_z^1 l(z, s) x(s) ds."""
    _match(x_prof.N, l.N)
    x = x_prof.values
    return StateProfile(x_prof.t, x + row_trapz(l.values * x[None, :], l.h))


def _match(n1, n2):
    if n1 != n2:
        raise InputError(f"resolution mismatch: {n1} vs {n2}")


def history_from_initial(y0: FunctionSpec, k: TriangularKernel, N=None) -> HistoryBuffer:
    """Initial window v0(-z) = y0(z) - int_z^1 k(z, s) y0(s) ds on [-1, 0]."""
    N = k.N if N is None else N
    _match(N, k.N)
    x0 = forward_transform(StateProfile.from_function(y0, N), k)
    return HistoryBuffer(N, x0.values[::-1])


def zoh_input(gain: GainProfile, history: HistoryBuffer) -> float:
    """u_i = int_0^1 ktilde(s) v(tau_i - s) ds over the current window."""
    _match(gain.N, history.N)
    return float(history.integral(gain.ktilde))


def ide_step(gain: GainProfile, history: HistoryBuffer, u_current: float) -> float:
    """Advance v by one step, solving the trapezoid-discretised IDE for v(t + h).

    The newest node enters the quadrature with weight (h/2) ktilde(0), so
    the update is a scalar linear solve.
    """
    _match(gain.N, history.N)
    h, kt = history.h, gain.ktilde
    pivot = 1.0 + 0.5 * h * kt[0]
    if abs(pivot) < PIVOT_EPS:
        raise NumericalError("degenerate IDE pivot 1 + (h/2) ktilde(0); refine N")
    # window after the shift: old nodes 1..N plus the unknown newest node
    R, L = history.right, history.left
    w = kt[::-1]
    known = w[0] * R[1] + np.dot(w[1:-1], L[2:] + R[2:])
    v_next = (u_current - 0.5 * h * known) / pivot
    history.push(v_next)
    return float(v_next)


def _ode_rhs(kt, dkt, v_now, v_delay, integral):
    return -kt[0] * v_now + kt[-1] * v_delay - integral


def ode_form_step(gain: GainProfile, history: HistoryBuffer) -> float:
    """Heun step of the differentiated form
    ``v' = -ktilde(0) v + ktilde(1) v(t-1) - int ktilde'(s) v(t-s) ds``.

    Cross-check integrator only; valid between sampling times.
    """
    _match(gain.N, history.N)
    h, kt, dkt = history.h, gain.ktilde, gain.dktilde
    v_n = history.right[-1]
    f_n = _ode_rhs(kt, dkt, v_n, history.right[0], history.integral(dkt))
    trial = history.copy()
    trial.push(v_n + h * f_n)
    f_p = _ode_rhs(kt, dkt, trial.right[-1], trial.right[0], trial.integral(dkt))
    v_next = v_n + 0.5 * h * (f_n + f_p)
    history.push(v_next)
    return float(v_next)


# -- full runs ------------------------------------------------------------------

@dataclass(eq=False)
class IdeRun:
    """Result of a closed-loop IDE simulation.

    ``v_right``/``v_left`` cover the grid times ``-1, -1 + h, ..., horizon``
    (index ``n + N`` holds time ``n h``); ``u`` covers ``0, h, ..., horizon``.
    """

    N: int
    v_right: np.ndarray
    v_left: np.ndarray
    u: np.ndarray
    schedule: SamplingSchedule
    gain: GainProfile
    jumps: list = field(default_factory=list)

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def n_steps(self):
        return self.u.size - 1

    @property
    def t(self):
        return np.arange(self.n_steps + 1) * self.h

    @property
    def v_trace(self) -> Trace:
        return Trace(self.t, self.v_right[self.N:], "v")

    @property
    def u_trace(self) -> Trace:
        return Trace(self.t, self.u, "u")

    @property
    def initial_sup(self):
        """sup over [-1, 0) of |v0|, including the left limit at 0."""
        return float(max(np.max(np.abs(self.v_right[: self.N])), abs(self.v_left[self.N])))

    def value_at(self, t):
        return float(self.v_right[self.N + _grid_index(t, self.N)])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "v", "u"])
            for row in zip(self.t, self.v_right[self.N:], self.u):
                w.writerow([_fmt(x) for x in row])

    def jumps_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_jump", "left_limit", "right_value"])
            for row in self.jumps:
                w.writerow([_fmt(x) for x in row])


def _grid_index(t, N):
    n = int(round(t * N))
    if abs(t * N - n) > 1e-6:
        raise InputError(f"time {t} is not on the grid of step 1/{N}")
    return n


def _run(gain, schedule, history0, horizon, step):
    N = history0.N
    _match(gain.N, N)
    if schedule.N != N:
        raise InputError(f"schedule grid 1/{schedule.N} differs from the run grid 1/{N}")
    if history0.step != 0:
        raise InputError("initial history must end at t = 0")
    n_end = _grid_index(horizon, N)
    samples = schedule.indices
    if samples[-1] + int(round(schedule.sup_gap * N)) < n_end:
        raise InputError("schedule does not cover the horizon")
    is_sample = np.zeros(n_end + 1, dtype=bool)
    is_sample[samples[samples <= n_end]] = True

    hist = history0.copy()
    v_right = np.empty(N + n_end + 1)
    v_left = np.empty(N + n_end + 1)
    v_right[: N + 1] = hist.right
    v_left[: N + 1] = hist.left
    u = np.empty(n_end + 1)
    jumps = []
    u_cur = 0.0
    for n in range(n_end + 1):
        if n > 0:
            step(hist, u_cur)
        if is_sample[n]:
            u_cur = zoh_input(gain, hist)
            before = hist.left[-1]
            after = step.at_sample(hist, u_cur)
            hist.set_current(after)
            if after != before:
                jumps.append((n / N, float(before), float(after)))
        if not np.isfinite(hist.right[-1]):
            raise NumericalError(f"IDE solution blew up at t={n / N}")
        v_right[N + n] = hist.right[-1]
        v_left[N + n] = hist.left[-1]
        u[n] = u_cur
    return IdeRun(N, v_right, v_left, u, schedule, gain, jumps)


class _IdeStepper:
    def __init__(self, gain):
        self.gain = gain

    def __call__(self, hist, u):
        ide_step(self.gain, hist, u)

    def at_sample(self, hist, u):
        # the IDE evaluated at tau_i with the same split quadrature as u_i
        return u - hist.integral(self.gain.ktilde)


class _OdeStepper(_IdeStepper):
    def __call__(self, hist, u):
        ode_form_step(self.gain, hist)

    def at_sample(self, hist, u):
        return 0.0


def solve_ide(gain: GainProfile, schedule: SamplingSchedule, history0: HistoryBuffer,
              horizon: float) -> IdeRun:
    """Sampled-data IDE solution on [0, horizon] from the window on [-1, 0]."""
    return _run(gain, schedule, history0, horizon, _IdeStepper(gain))


def solve_ode_form(gain: GainProfile, schedule: SamplingSchedule, history0: HistoryBuffer,
                   horizon: float) -> IdeRun:
    """Same run integrated with :func:`ode_form_step`, restarting from v = 0 at samples."""
    return _run(gain, schedule, history0, horizon, _OdeStepper(gain))


def reconstruct_y(run: IdeRun, l: TriangularKernel, t: float) -> StateProfile:
    """y(t, z) = v(t - z) + int_z^1 l(z, s) v(t - s) ds on the spatial grid."""
    _match(run.N, l.N)
    N = run.N
    n = _grid_index(t, N)
    if n < 0 or n > run.n_steps:
        raise InputError(f"t={t} outside the simulated horizon")
    # a[j] = v_left(t - s_j), b[j] = v_right(t - s_j)
    idx = N + n - np.arange(N + 1)
    a, b = run.v_left[idx], run.v_right[idx]
    L = l.values
    integral = 0.5 * l.h * (L @ a - L[:, -1] * a[-1] + L @ b - np.diag(L) * b)
    integral[-1] = 0.0
    return StateProfile(t, b + integral)


def transport_mild(x0: StateProfile, v_trace: Trace, t: float) -> StateProfile:
    """Mild transport solution: x(t, z) = v(t - z) for t >= z, x0(z - t) otherwise.

    ``v_trace`` must start at 0 on the spatial grid step of ``x0``.
    """
    if t < 0:
        raise InputError("t must be nonnegative")
    N = x0.N
    n = _grid_index(t, N)
    tv = np.asarray(v_trace.t)
    if abs(tv[0]) > 1e-12 or (tv.size > 1 and abs((tv[1] - tv[0]) * N - 1) > 1e-9):
        raise InputError("v_trace must start at 0 with step 1/N")
    j = np.arange(N + 1)
    out = np.empty(N + 1)
    inflow = j <= n
    if np.any(inflow) and n >= tv.size:
        raise InputError("v_trace does not reach t")
    out[inflow] = np.asarray(v_trace.values)[n - j[inflow]]
    out[~inflow] = x0.values[j[~inflow] - n]
    return StateProfile(t, out)
