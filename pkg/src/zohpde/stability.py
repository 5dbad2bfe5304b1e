"""Sampling-period / decay-rate bounds, the open-loop test of the worked example,
and empirical envelope fits of simulated traces."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from .functions import InputError
from .kernels import _fmt

UNBOUNDED = "unbounded"
INFEASIBLE = "infeasible"


class InsufficientDataError(ValueError):
    pass


def p_a(a, t):
    """int_0^t exp(-a (t - s)) ds, i.e. (1 - exp(-a t)) / a, or t when a = 0."""
    if t < 0:
        raise InputError("p_a needs t >= 0")
    if abs(a) < 1e-12:
        return float(t)
    return float(-math.expm1(-a * t) / a)


def _lhs(M, a, T, sigma):
    return M * p_a(a, T) * math.exp(sigma * (1.0 + T))


def max_sigma(M, a, T) -> Union[float, str]:
    """Equality root in sigma of ``M p_a(T) exp(sigma (1 + T)) = 1``.

    Admissible rates are sigma < max_sigma.  Returns ``"unbounded"`` for
    M = 0 and ``"infeasible"`` when no sigma >= 0 works.
    """
    if not T > 0:
        raise InputError("T must be positive")
    if M < 0:
        raise InputError("M must be nonnegative")
    c = M * p_a(a, T)
    if c == 0:
        return UNBOUNDED
    if c >= 1:
        return INFEASIBLE
    return math.log(1.0 / c) / (1.0 + T)


def max_period(M, a, sigma) -> Union[float, str]:
    """Largest sampling bound T with ``M p_a(T) exp(sigma (1 + T)) <= 1``.

    The left side increases strictly in T and vanishes as T -> 0, so the
    root exists and is unique whenever M > 0.
    """
    if not sigma > 0:
        raise InputError("sigma must be positive")
    if M < 0:
        raise InputError("M must be nonnegative")
    if M == 0:
        return UNBOUNDED

    def fn(T):
        return _lhs(M, a, T, sigma) - 1.0

    lo, hi = 1e-12, 1.0
    if fn(lo) >= 0:
        raise RuntimeError("bisection bracket failed at T -> 0")
    while fn(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise RuntimeError("bisection bracket failed: no crossing found")
    return brentq(fn, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def sigma_curve(M, a, periods):
    """Rows (T, max_sigma) for the sigma-T trade-off curve."""
    return [(float(T), max_sigma(M, a, T)) for T in periods]


def write_sigma_curve(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "sigma_max"])
        for T, s in rows:
            w.writerow([_fmt(T), s if isinstance(s, str) else _fmt(s)])


# -- worked example: open loop -------------------------------------------------

@dataclass
class OpenLoopReport:
    A: float
    r: float
    threshold: float
    stable: bool
    # None when stable
    lambda_: Optional[float] = None

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def eigen_rhs(r, lam):
    """(r + lam) e^lam / (e^(r + lam) - 1); equals A on the unstable mode."""
    return (r + lam) * math.exp(lam) / math.expm1(r + lam)


def open_loop_test(A, r) -> OpenLoopReport:
    """Stability of the uncontrolled plant with g(z) = A e^{rz}: stable iff A < r/(e^r - 1)."""
    if not (A > 0 and r > 0):
        raise InputError("A and r must be positive")
    threshold = r / math.expm1(r)
    if A < threshold:
        return OpenLoopReport(A, r, threshold, True, None)

    def fn(lam):
        return eigen_rhs(r, lam) - A

    if fn(0.0) >= 0:
        return OpenLoopReport(A, r, threshold, False, 0.0)
    hi = 1.0
    while fn(hi) < 0:
        hi *= 2.0
    lam = brentq(fn, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return OpenLoopReport(A, r, threshold, False, float(lam))


def unstable_mode(A, r, lam):
    """The open-loop mode exp(lam (t + 1 - z)) (e^{(r+lam) z} - 1) / (e^{r+lam} - 1)."""
    def x(t, z):
        return np.exp(lam * (t + 1 - z)) * np.expm1((r + lam) * z) / math.expm1(r + lam)
    return x


def verify_unstable_mode(A, r, lam, N, t_max=1.0):
    """Sup residual of ``x_t + x_z - A e^{rz} x(t, 1)`` for the mode, by centered differences.

    Also folds in the boundary residual |x(t, 0)|.
    """
    x = unstable_mode(A, r, lam)
    h = 1.0 / N
    z = np.linspace(0.0, 1.0, N + 1)[1:-1]
    t = np.arange(1, int(round(t_max * N))) * h
    T, Z = np.meshgrid(t, z, indexing="ij")
    xt = (x(T + h, Z) - x(T - h, Z)) / (2 * h)
    xz = (x(T, Z + h) - x(T, Z - h)) / (2 * h)
    res = xt + xz - A * np.exp(r * Z) * x(T, 1.0)
    bc = np.abs(x(t, 0.0))
    return float(max(np.max(np.abs(res)), np.max(bc)))


# -- envelope fits -------------------------------------------------------------

def envelope_points(values):
    """Mask of points that attain the running supremum of all later values."""
    a = np.abs(np.asarray(values, dtype=float))
    future_max = np.maximum.accumulate(a[::-1])[::-1]
    return a >= future_max


def fit_log_rate(t, values, t_start, t_end=None, envelope=True):
    """Least-squares line through (t, ln|values|); returns (intercept, slope)."""
    t = np.asarray(t, dtype=float)
    a = np.abs(np.asarray(values, dtype=float))
    t_end = t[-1] if t_end is None else t_end
    win = (t >= t_start - 1e-12) & (t <= t_end + 1e-12)
    t, a = t[win], a[win]
    if envelope:
        keep = envelope_points(a)
        t, a = t[keep], a[keep]
    keep = a > 0
    t, a = t[keep], a[keep]
    if t.size < 3:
        raise InsufficientDataError(f"only {t.size} usable points in the fit window")
    slope, intercept = np.polyfit(t, np.log(a), 1)
    return float(intercept), float(slope)


def fit_envelope(trace, t_start=1.0, t_end=None):
    """Empirical (G_fit, sigma_fit) for ``|x(t)| <= G e^{-sigma t} |x(0)|``.

    Only envelope points (values not exceeded later in the window) enter the
    fit, which tracks the peaks of oscillating traces.  sigma_fit is clipped
    at 0.
    """
    if t_start < 1.0:
        raise InputError("t_start must be >= 1 to skip the dead-time transient")
    t = np.asarray(trace.t)
    vals = np.asarray(trace.values)
    intercept, slope = fit_log_rate(t, vals, t_start, t_end)
    ref = abs(vals[0]) if vals[0] != 0 else 1.0
    sigma = max(0.0, -slope)
    if abs(sigma) < 1e-12:
        sigma = 0.0
    return float(math.exp(intercept) / ref), sigma


def envelope_holds(t, values, sigma, bound, eps=0.05):
    """True when |v(t)| e^{sigma t} <= (1 + eps) * bound for every sample."""
    t = np.asarray(t)
    scaled = np.abs(np.asarray(values)) * np.exp(sigma * t)
    return bool(np.all(scaled <= (1.0 + eps) * bound))


@dataclass
class StabilityReport:
    M: float
    a: float
    T: float
    sigma_max: Union[float, str]
    sigma_used: float
    G_fit: Optional[float] = None
    sigma_fit: Optional[float] = None
    envelope_ok: Optional[bool] = None

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text
