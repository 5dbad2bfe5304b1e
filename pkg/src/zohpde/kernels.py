"""Backstepping kernels k, l on the triangle 0 <= z <= s <= 1 and the reduced gain.

Both kernel equations are transport PDEs along the characteristics
``z - s = const`` with non-local source terms.  They are solved by
integrating each diagonal of the grid from the boundary ``s = 1`` downward
(trapezoid rule) inside an outer fixed-point loop, which also resolves the
implicit boundary condition of the k-equation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .functions import InputError, ProblemData

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


class ConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach the requested tolerance."""

    def __init__(self, message, last_change):
        super().__init__(message)
        self.last_change = last_change


def grid(N):
    return np.linspace(0.0, 1.0, N + 1)


def row_trapz(values, h):
    """Trapezoid of ``values[i, i:]`` for every row i (integral over s in [z_i, 1])."""
    n = values.shape[0]
    upper = np.triu(values)
    total = upper.sum(axis=1) - 0.5 * (np.diag(values) + values[:, -1])
    total[n - 1] = 0.0
    return h * total


def trap_product(A, B, h):
    """``int_z^s A(z, w) B(w, s) dw`` by trapezoid for upper-triangular A, B."""
    out = h * (A @ B) - 0.5 * h * (np.diag(A)[:, None] * B + A * np.diag(B)[None, :])
    return np.triu(out)


def _integrate_diagonals(rhs, boundary, h):
    """Integrate ``dK/dz + dK/ds = rhs`` back from ``K(z, 1) = boundary(z)``."""
    n = rhs.shape[0] - 1
    K = np.zeros_like(rhs)
    for d in range(n + 1):
        idx = np.arange(n - d + 1)
        r = rhs[idx, idx + d]
        seg = 0.5 * h * (r[:-1] + r[1:])
        tail = np.zeros(n - d + 1)
        tail[:-1] = np.cumsum(seg[::-1])[::-1]
        K[idx, idx + d] = boundary[n - d] - tail
    return K


@dataclass(frozen=True, eq=False)
class TriangularKernel:
    """Kernel samples ``values[i, j] = K(i/N, j/N)`` for i <= j; zero below the diagonal."""

    N: int
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.N + 1, self.N + 1):
            raise InputError(f"kernel values must have shape {(self.N + 1,) * 2}")
        v = np.triu(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, func, N):
        z = grid(N)
        Z, S = np.meshgrid(z, z, indexing="ij")
        return cls(N, np.triu(func(Z, S)))

    @classmethod
    def zeros(cls, N):
        return cls(N, np.zeros((N + 1, N + 1)))

    @property
    def h(self):
        return 1.0 / self.N

    def __call__(self, z, s):
        """Piecewise-linear interpolation that never reads below the diagonal.

        Off-diagonal cells use bilinear interpolation; cells cut by the
        diagonal use the linear interpolant on their upper triangle.
        """
        z, s = np.broadcast_arrays(np.asarray(z, float), np.asarray(s, float))
        if np.any(z > s + 1e-12) or np.any(z < -1e-12) or np.any(s > 1 + 1e-12):
            raise InputError("kernel queried outside the triangle 0 <= z <= s <= 1")
        N, v = self.N, self.values
        x = np.clip(z * N, 0, N)
        y = np.clip(s * N, 0, N)
        i = np.minimum(np.floor(x).astype(int), N - 1)
        j = np.minimum(np.floor(y).astype(int), N - 1)
        wx, wy = x - i, y - j
        ip, jp = np.minimum(i + 1, N), np.minimum(j + 1, N)
        bil = ((1 - wx) * (1 - wy) * v[i, j] + wx * (1 - wy) * v[ip, j]
               + (1 - wx) * wy * v[i, jp] + wx * wy * v[ip, jp])
        # diagonal cell (i == j): vertices (i,i), (i,i+1), (i+1,i+1), wx <= wy
        tri = v[i, j] + wy * (v[i, jp] - v[i, j]) + wx * (v[ip, jp] - v[i, jp])
        return np.where(i == j, tri, bil)

    def to_csv(self, path):
        z = grid(self.N)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "s", "value"])
            for i in range(self.N + 1):
                for j in range(i, self.N + 1):
                    w.writerow([_fmt(z[i]), _fmt(z[j]), _fmt(self.values[i, j])])


def _fmt(x):
    return format(float(x), ".17g")


def _check_resolution(N, tol):
    if int(N) != N or N < 8:
        raise InputError(f"kernel resolution N must be an integer >= 8, got {N}")
    if not tol > 0:
        raise InputError("tol must be positive")


def _f_matrix(problem, N):
    z = grid(N)
    if problem.f.is_zero:
        return np.zeros((N + 1, N + 1))
    Z, S = np.meshgrid(z, z, indexing="ij")
    return np.triu(problem.f(Z, S))


def _fixed_point(step, K0, tol, max_iter, name):
    K = K0
    change = np.inf
    for _ in range(max_iter):
        K_new = step(K)
        if not np.all(np.isfinite(K_new)):
            raise ConvergenceError(f"{name}: iteration diverged to non-finite values", change)
        change = float(np.max(np.abs(K_new - K)))
        K = K_new
        if change < tol:
            return K
    raise ConvergenceError(
        f"{name}: no convergence after {max_iter} iterations (last sup-change {change:.3e})",
        change,
    )


def solve_kernel_k(problem: ProblemData, N: int, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER) -> TriangularKernel:
    """Solve for k: ``k_z + k_s = f - int_z^s k(z,w) f(w,s) dw``,
    ``k(z,1) = -g(z) + int_z^1 k(z,s) g(s) ds``."""
    _check_resolution(N, tol)
    h = 1.0 / N
    z = grid(N)
    g = problem.g(z)
    F = _f_matrix(problem, N)
    has_f = not problem.f.is_zero

    def step(K):
        rhs = F - trap_product(K, F, h) if has_f else F
        bc = -g + row_trapz(K * g[None, :], h)
        return _integrate_diagonals(rhs, bc, h)

    K0 = np.zeros((N + 1, N + 1))
    K0[:, N] = -g
    return TriangularKernel(N, _fixed_point(step, K0, tol, max_iter, "solve_kernel_k"))


def solve_kernel_l(problem: ProblemData, N: int, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER) -> TriangularKernel:
    """Solve for l: ``l_z + l_s = f + int_z^s f(z,w) l(w,s) dw``, ``l(z,1) = -g(z)``."""
    _check_resolution(N, tol)
    h = 1.0 / N
    z = grid(N)
    g = problem.g(z)
    F = _f_matrix(problem, N)
    has_f = not problem.f.is_zero

    def step(L):
        rhs = F + trap_product(F, L, h) if has_f else F
        return _integrate_diagonals(rhs, -g, h)

    L0 = np.zeros((N + 1, N + 1))
    L0[:, N] = -g
    return TriangularKernel(N, _fixed_point(step, L0, tol, max_iter, "solve_kernel_l"))


def kernel_residuals(kernel: TriangularKernel, problem: ProblemData, which: str):
    """Sup-norm residuals (pde, boundary) of a sampled kernel against its equations.

    The PDE residual uses centered differences along each characteristic at
    nodes with a neighbour on both sides, so it is independent of the
    one-sided trapezoid marching the solver performs.
    """
    if which not in ("k", "l"):
        raise InputError("which must be 'k' or 'l'")
    N, K = kernel.N, kernel.values
    h = kernel.h
    z = grid(N)
    g = problem.g(z)
    F = _f_matrix(problem, N)
    if which == "k":
        rhs = F - trap_product(K, F, h)
        bc = K[:, N] - (-g + row_trapz(K * g[None, :], h))
    else:
        rhs = F + trap_product(F, K, h)
        bc = K[:, N] + g
    i, j = np.triu_indices(N + 1)
    inner = (i >= 1) & (j <= N - 1)
    i, j = i[inner], j[inner]
    dk = (K[i + 1, j + 1] - K[i - 1, j - 1]) / (2 * h)
    pde = float(np.max(np.abs(dk - rhs[i, j]))) if i.size else 0.0
    return pde, float(np.max(np.abs(bc)))


def check_inverse_identity(k: TriangularKernel, l: TriangularKernel) -> float:
    """Sup over nodes of ``|l - k - int_z^s l(z,w) k(w,s) dw|``."""
    if k.N != l.N:
        raise InputError(f"kernel resolutions differ: {k.N} vs {l.N}")
    res = l.values - k.values - trap_product(l.values, k.values, k.h)
    return float(np.max(np.abs(np.triu(res))))


@dataclass(frozen=True, eq=False)
class GainProfile:
    """Reduced gain ktilde on s_j = j/N with the constants of the sampling bound.

    ``M = |ktilde(1)| + int |ktilde'|`` and ``a = ktilde(0)``.
    """

    N: int
    ktilde: np.ndarray
    dktilde: np.ndarray
    M: float
    a: float

    @classmethod
    def from_samples(cls, ktilde, N=None):
        """Derivative and constants from gain samples on a uniform grid."""
        kt = np.asarray(ktilde, dtype=float)
        N = kt.size - 1 if N is None else N
        if kt.size != N + 1 or N < 2:
            raise InputError("gain samples must have N + 1 >= 3 entries")
        h = 1.0 / N
        dk = np.gradient(kt, h, edge_order=2)
        M = abs(kt[-1]) + float(np.trapezoid(np.abs(dk), dx=h))
        kt = kt.copy()
        kt.setflags(write=False)
        dk.setflags(write=False)
        return cls(N, kt, dk, float(M), float(kt[0]))

    @property
    def h(self):
        return 1.0 / self.N

    def to_csv(self, path):
        s = grid(self.N)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "ktilde", "dktilde"])
            for row in zip(s, self.ktilde, self.dktilde):
                w.writerow([_fmt(x) for x in row])


def build_gain(problem: ProblemData, k: TriangularKernel, l: TriangularKernel) -> GainProfile:
    """``ktilde(s) = P(s) + int_0^s P(w) l(w, s) dw`` with ``P = p + k(0, .)``."""
    if k.N != l.N:
        raise InputError(f"kernel resolutions differ: {k.N} vs {l.N}")
    N, h = k.N, k.h
    s = grid(N)
    P = problem.p(s) + k.values[0]
    L = l.values
    # column j: trapezoid over w in [0, s_j]
    integral = h * (P @ L) - 0.5 * h * (P[0] * L[0] + P * np.diag(L))
    integral[0] = 0.0
    return GainProfile.from_samples(P + integral, N)
