"""Problem data: the functions g, f, p of the plant and initial profiles.

A :class:`FunctionSpec` is a small tagged description that can be evaluated
on numpy arrays and round-tripped through JSON configs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

KINDS = ("zero", "exp_example", "exponential", "polynomial", "tabulated", "sum")


class InputError(ValueError):
    """Invalid problem data or mismatched inputs."""


@dataclass(frozen=True)
class FunctionSpec:
    """Tagged function on [0, 1] (one-dim) or [0, 1]^2 (two-dim).

    Variants
    --------
    zero
        Identically 0.
    exp_example
        ``A * exp(r * z)`` (one-dim only), with A > 0 and r > 0.
    exponential
        ``A * exp(r * z)`` for any real A, r (one-dim only).
    polynomial
        One-dim: ``sum_i c[i] z**i``. Two-dim: ``sum_ij c[i][j] z**i s**j``.
    tabulated
        Uniform samples on [0, 1] (or a square grid on [0, 1]^2), linearly
        (bilinearly) interpolated.
    sum
        Pointwise sum of the specs in ``terms``.
    """

    kind: str = "zero"
    dim: int = 1
    A: float = 0.0
    r: float = 0.0
    coefficients: tuple = ()
    samples: tuple = ()
    terms: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown function kind {self.kind!r}")
        if self.dim not in (1, 2):
            raise InputError(f"dim must be 1 or 2, got {self.dim}")
        if self.kind == "exp_example":
            if self.dim != 1:
                raise InputError("exp_example is one-dimensional")
            if not (self.A > 0 and self.r > 0):
                raise InputError("exp_example requires A > 0 and r > 0")
        elif self.kind == "exponential":
            if self.dim != 1:
                raise InputError("exponential is one-dimensional")
        elif self.kind == "polynomial":
            c = np.asarray(self.coefficients, dtype=float)
            if c.size == 0 or c.ndim != self.dim:
                raise InputError(f"polynomial coefficients must be a non-empty {self.dim}-d list")
        elif self.kind == "tabulated":
            a = np.asarray(self.samples, dtype=float)
            if a.ndim != self.dim or min(a.shape) < 2:
                raise InputError("tabulated requires at least 2 samples per axis")
            if self.dim == 2 and a.shape[0] != a.shape[1]:
                raise InputError("two-dim tabulated samples must be square")
            if not np.all(np.isfinite(a)):
                raise InputError("tabulated samples must be finite")
        elif self.kind == "sum":
            if not self.terms:
                raise InputError("sum requires at least one term")
            for t in self.terms:
                if not isinstance(t, FunctionSpec) or t.dim != self.dim:
                    raise InputError("sum terms must be FunctionSpecs of the same dim")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, dim: int = 1) -> "FunctionSpec":
        return cls("zero", dim)

    @classmethod
    def exp_example(cls, A: float, r: float) -> "FunctionSpec":
        return cls("exp_example", 1, A=float(A), r=float(r))

    @classmethod
    def polynomial(cls, coefficients, dim: int = 1) -> "FunctionSpec":
        c = np.asarray(coefficients, dtype=float)
        return cls("polynomial", dim, coefficients=_freeze(c))

    @classmethod
    def tabulated(cls, samples, dim: int = 1) -> "FunctionSpec":
        a = np.asarray(samples, dtype=float)
        return cls("tabulated", dim, samples=_freeze(a))

    @classmethod
    def sum_of(cls, *terms: "FunctionSpec") -> "FunctionSpec":
        dim = terms[0].dim if terms else 1
        return cls("sum", dim, terms=tuple(terms))

    # -- evaluation ---------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "sum":
            return all(t.is_zero for t in self.terms)
        return False

    def __call__(self, z, s=None) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.dim == 2:
            if s is None:
                raise InputError("two-dim function needs (z, s)")
            s = np.asarray(s, dtype=float)
            z, s = np.broadcast_arrays(z, s)
            _check_unit(z)
            _check_unit(s)
            return self._eval2(z, s)
        _check_unit(z)
        return self._eval1(z)

    def _eval1(self, z):
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind in ("exp_example", "exponential"):
            return self.A * np.exp(self.r * z)
        if self.kind == "polynomial":
            c = np.asarray(self.coefficients, dtype=float)
            return np.polynomial.polynomial.polyval(z, c)
        if self.kind == "tabulated":
            a = np.asarray(self.samples, dtype=float)
            return np.interp(z, np.linspace(0.0, 1.0, a.size), a)
        return sum(t._eval1(z) for t in self.terms)

    def _eval2(self, z, s):
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind == "polynomial":
            c = np.asarray(self.coefficients, dtype=float)
            return np.polynomial.polynomial.polyval2d(z, s, c)
        if self.kind == "tabulated":
            a = np.asarray(self.samples, dtype=float)
            n = a.shape[0] - 1
            zi = np.clip(z * n, 0, n)
            si = np.clip(s * n, 0, n)
            i0 = np.minimum(np.floor(zi).astype(int), n - 1)
            j0 = np.minimum(np.floor(si).astype(int), n - 1)
            wz = zi - i0
            ws = si - j0
            return ((1 - wz) * (1 - ws) * a[i0, j0] + wz * (1 - ws) * a[i0 + 1, j0]
                    + (1 - wz) * ws * a[i0, j0 + 1] + wz * ws * a[i0 + 1, j0 + 1])
        return sum(t._eval2(z, s) for t in self.terms)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.dim != 1:
            d["dim"] = self.dim
        if self.kind in ("exp_example", "exponential"):
            d.update(A=self.A, r=self.r)
        elif self.kind == "polynomial":
            d["coefficients"] = np.asarray(self.coefficients).tolist()
        elif self.kind == "tabulated":
            d["samples"] = np.asarray(self.samples).tolist()
        elif self.kind == "sum":
            d["terms"] = [t.to_dict() for t in self.terms]
        return d

    @classmethod
    def from_dict(cls, d: Mapping, dim: int = 1) -> "FunctionSpec":
        if not isinstance(d, Mapping):
            raise InputError(f"function spec must be an object, got {type(d).__name__}")
        allowed = {"kind", "dim", "A", "r", "coefficients", "samples", "terms"}
        extra = set(d) - allowed
        if extra:
            raise InputError(f"unknown function spec fields: {sorted(extra)}")
        kind = d.get("kind")
        dim = int(d.get("dim", dim))
        if kind == "zero":
            return cls.zero(dim)
        if kind in ("exp_example", "exponential"):
            return cls(kind, dim, A=float(d["A"]), r=float(d["r"]))
        if kind == "polynomial":
            return cls.polynomial(d["coefficients"], dim)
        if kind == "tabulated":
            return cls.tabulated(d["samples"], dim)
        if kind == "sum":
            return cls("sum", dim, terms=tuple(cls.from_dict(t, dim) for t in d["terms"]))
        raise InputError(f"unknown function kind {kind!r}")


def _freeze(a: np.ndarray):
    if a.ndim == 1:
        return tuple(float(x) for x in a)
    return tuple(tuple(float(x) for x in row) for row in a)


def _check_unit(x: np.ndarray):
    if x.size and (np.min(x) < -1e-12 or np.max(x) > 1 + 1e-12):
        raise InputError("function evaluated outside [0, 1]")


@dataclass(frozen=True)
class ProblemData:
    """Plant data: in-domain coupling g, non-local kernel f, boundary weight p."""

    g: FunctionSpec = field(default_factory=FunctionSpec.zero)
    f: FunctionSpec = field(default_factory=lambda: FunctionSpec.zero(2))
    p: FunctionSpec = field(default_factory=FunctionSpec.zero)

    def __post_init__(self):
        if self.g.dim != 1 or self.p.dim != 1:
            raise InputError("g and p must be one-dimensional")
        if self.f.dim != 2:
            raise InputError("f must be two-dimensional")

    @classmethod
    def exp_example(cls, A: float = 1.0, r: float = 1.0) -> "ProblemData":
        """g(z) = A exp(r z), f = 0, p = 0."""
        return cls(g=FunctionSpec.exp_example(A, r))

    def to_dict(self) -> dict:
        return {"g": self.g.to_dict(), "f": self.f.to_dict(), "p": self.p.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProblemData":
        extra = set(d) - {"g", "f", "p"}
        if extra:
            raise InputError(f"unknown problem fields: {sorted(extra)}")
        return cls(
            g=FunctionSpec.from_dict(d.get("g", {"kind": "zero"}), 1),
            f=FunctionSpec.from_dict(d.get("f", {"kind": "zero", "dim": 2}), 2),
            p=FunctionSpec.from_dict(d.get("p", {"kind": "zero"}), 1),
        )


def demo_initial_condition() -> FunctionSpec:
    """y0(z) = -(exp(z) - e + 1) / 2, the profile used in the worked example."""
    return FunctionSpec.sum_of(
        FunctionSpec.polynomial([0.5 * (np.e - 1.0)]),
        FunctionSpec("exponential", 1, A=-0.5, r=1.0),
    )
