"""Core value types: boxes, the composite point u = (x, y, z), and the problem interface.

Vectors are plain 1-D float64 numpy arrays. Domains are axis-aligned boxes,
which keeps every projection exact (componentwise clamp).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError

Vector = np.ndarray


def as_vector(v, dim: int | None = None) -> Vector:
    """Coerce to a 1-D float64 array, optionally checking length."""
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.ndim != 1:
        raise DimensionError(f"expected 1-D vector, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionError(f"expected length {dim}, got {a.shape[0]}")
    return a


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lower, upper], lower <= upper componentwise."""

    lower: Vector
    upper: Vector

    def __post_init__(self):
        lo = as_vector(self.lower)
        hi = as_vector(self.upper, dim=lo.shape[0])
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if np.any(lo > hi):
            raise DimensionError("box has lower > upper in some coordinate")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> Vector:
        return 0.5 * (self.lower + self.upper)

    def contains(self, v: Vector, atol: float = 0.0) -> bool:
        v = as_vector(v, dim=self.dim)
        return bool(np.all(v >= self.lower - atol) and np.all(v <= self.upper + atol))

    def sample(self, rng: np.random.Generator) -> Vector:
        return rng.uniform(self.lower, self.upper)


def interval(lo: float, hi: float, dim: int = 1) -> Box:
    return Box(np.full(dim, float(lo)), np.full(dim, float(hi)))


@dataclass(frozen=True)
class JointPoint:
    """Composite iterate u = (x, y, z) living in X x Y x Z."""

    x: Vector
    y: Vector
    z: Vector

    def __post_init__(self):
        object.__setattr__(self, "x", as_vector(self.x))
        object.__setattr__(self, "y", as_vector(self.y))
        object.__setattr__(self, "z", as_vector(self.z))

    def concat(self) -> Vector:
        return np.concatenate([self.x, self.y, self.z])

    @staticmethod
    def split(v: Vector, m: int, n: int, p: int) -> "JointPoint":
        v = as_vector(v, dim=m + n + p)
        return JointPoint(v[:m], v[m : m + n], v[m + n :])


def project_box(v: Vector, b: Box) -> Vector:
    """Componentwise clamp of v into b."""
    v = as_vector(v, dim=b.dim)
    return np.clip(v, b.lower, b.upper)


def project_nonneg(v: Vector) -> Vector:
    """Projection onto the nonnegative orthant."""
    return np.maximum(as_vector(v), 0.0)


@dataclass(frozen=True)
class QuadraticLowerData:
    """Lower level in the form G(x, y) = 0.5 y'Qy + c'y + c0, H(x, y) = Ay - b.

    Everything is already specialized to a fixed x; attached by problems whose
    lower level is quadratic with affine constraints so reference solvers can
    use exact linear algebra.
    """

    Q: np.ndarray
    c: Vector
    c0: float
    A: np.ndarray
    b: Vector


@dataclass(frozen=True)
class ProblemSpec:
    """A constrained stochastic bilevel problem instance.

    Exact gradients are callables over (x, y); ``grad_H`` returns the pair of
    Jacobians (Jx with shape (p, m), Jy with shape (p, n)). Noisy oracles take
    a ``numpy.random.Generator`` and must consume randomness independently of
    the evaluation point, so replaying the same stream at a different point
    reproduces the same sample draws.
    """

    m: int
    n: int
    p: int
    F_value: Callable[[Vector, Vector], float]
    G_value: Callable[[Vector, Vector], float]
    H_values: Callable[[Vector, Vector], Vector]
    grad_F: Callable[[Vector, Vector], tuple[Vector, Vector]]
    grad_G: Callable[[Vector, Vector], tuple[Vector, Vector]]
    grad_H: Callable[[Vector, Vector], tuple[np.ndarray, np.ndarray]]
    grad_f: Callable[[Vector, Vector, np.random.Generator], "GradPair"]
    grad_g: Callable[[Vector, Vector, np.random.Generator], "GradPair"]
    X: Box
    Y: Box
    name: str = "problem"
    mu_G: float | None = None
    M_H0: float | None = None
    M_G1: float | None = None
    sigma_f: float | None = None
    sigma_g: float | None = None
    y_star: Callable[[Vector], Vector] | None = None
    lower_quadratic: Callable[[Vector], QuadraticLowerData] | None = None
    g_value_noisy: Callable[[Vector, Vector, np.random.Generator], float] | None = None
    constant_grad_H: bool = False  # True when grad_H is point-independent (hot loops hoist it)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.dim != self.m or self.Y.dim != self.n:
            raise DimensionError("box dimensions disagree with (m, n)")
        if self.p < 0:
            raise DimensionError("p must be nonnegative")

    def check_point(self, x: Vector, y: Vector) -> tuple[Vector, Vector]:
        return as_vector(x, self.m), as_vector(y, self.n)


def constraint_violation(spec: ProblemSpec, x: Vector, y: Vector) -> float:
    """Squared hinge measure of infeasibility: 0.5 * sum_i [H_i(x, y)]_+^2."""
    x, y = spec.check_point(x, y)
    h = spec.H_values(x, y)
    return 0.5 * float(np.sum(np.maximum(h, 0.0) ** 2))
