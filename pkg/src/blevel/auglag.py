"""Augmented Lagrangian for the lower level and its Moreau-regularized saddle objective.

The penalty completion used throughout is

    A(x, y, z) = (1 / (2 g1)) * sum_i ( [g1 z_i + H_i(x, y)]_+^2 - g1^2 z_i^2 ),

whose z-gradient is [g1 z + H]_+ - g1 z = max(-g1 z, H) elementwise. The
subtracted z^2 term is what makes that identity (and the Lagrangian
sandwich inequality) hold; dropping it would change none of the argmins but
would break both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ProblemSpec, Vector, as_vector
from .errors import ConfigError
from .rng import GradPair


@dataclass(frozen=True)
class ALParams:
    """Penalty weight g1 > 0 and Moreau regularization g2 >= 0.

    g2 = 0 is legal only where the saddle subproblem degenerates on purpose
    (feasibility refinement and the plain value-function special case).
    """

    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not self.gamma1 > 0:
            raise ConfigError(f"gamma1 must be > 0, got {self.gamma1}")
        if self.gamma2 < 0:
            raise ConfigError(f"gamma2 must be >= 0, got {self.gamma2}")


def al_penalty_from_h(h: Vector, z: Vector, gamma1: float) -> float:
    if not gamma1 > 0:
        raise ConfigError(f"gamma1 must be > 0, got {gamma1}")
    h = as_vector(h)
    z = as_vector(z, dim=h.shape[0])
    shifted = np.maximum(gamma1 * z + h, 0.0)
    return float(np.sum(shifted**2 - (gamma1 * z) ** 2) / (2.0 * gamma1))


def al_penalty(spec: ProblemSpec, x: Vector, y: Vector, z: Vector, gamma1: float) -> float:
    """Quadratic penalty with multiplier shift z; total in z (no sign requirement)."""
    return al_penalty_from_h(spec.H_values(*spec.check_point(x, y)), z, gamma1)


def al_value(spec: ProblemSpec, x: Vector, y: Vector, z: Vector, gamma1: float) -> float:
    """Deterministic augmented Lagrangian G(x, y) + A(x, y, z)."""
    x, y = spec.check_point(x, y)
    return spec.G_value(x, y) + al_penalty_from_h(spec.H_values(x, y), z, gamma1)


def al_value_stoch(
    spec: ProblemSpec,
    x: Vector,
    y: Vector,
    z: Vector,
    gamma1: float,
    gen: np.random.Generator,
) -> float:
    """One unbiased sample of the augmented Lagrangian: g(x, y; xi) + A(x, y, z).

    Uses the problem's noisy value hook when present, otherwise the exact
    value (a degenerate but still unbiased sample).
    """
    x, y = spec.check_point(x, y)
    if spec.g_value_noisy is not None:
        g = spec.g_value_noisy(x, y, gen)
    else:
        g = spec.G_value(x, y)
    return float(g) + al_penalty_from_h(spec.H_values(x, y), z, gamma1)


def _penalty_weights(h: Vector, z: Vector, gamma1: float) -> Vector:
    return np.maximum(gamma1 * z + h, 0.0)


def al_grad(
    spec: ProblemSpec, x: Vector, y: Vector, z: Vector, gamma1: float
) -> tuple[Vector, Vector, Vector]:
    """Exact gradient of the augmented Lagrangian in (x, y, z)."""
    x, y = spec.check_point(x, y)
    z = as_vector(z, dim=spec.p)
    gx, gy = spec.grad_G(x, y)
    h = spec.H_values(x, y)
    t = _penalty_weights(h, z, gamma1)
    jx, jy = spec.grad_H(x, y)
    gx = gx + (t @ jx) / gamma1
    gy = gy + (t @ jy) / gamma1
    gz = np.maximum(-gamma1 * z, h)  # == [g1 z + H]_+ - g1 z, but cancellation-free
    return gx, gy, gz


def al_grad_stoch(
    spec: ProblemSpec,
    x: Vector,
    y: Vector,
    z: Vector,
    gamma1: float,
    gen: np.random.Generator,
) -> tuple[Vector, Vector, Vector]:
    """Stochastic gradient: only the G part is replaced by its noisy oracle."""
    x, y = spec.check_point(x, y)
    z = as_vector(z, dim=spec.p)
    g = spec.grad_g(x, y, gen)
    h = spec.H_values(x, y)
    t = _penalty_weights(h, z, gamma1)
    jx, jy = spec.grad_H(x, y)
    gx = g.gx + (t @ jx) / gamma1
    gy = g.gy + (t @ jy) / gamma1
    gz = np.maximum(-gamma1 * z, h)
    return gx, gy, gz


def ell_value(
    spec: ProblemSpec, x: Vector, z: Vector, w: Vector, lam: Vector, params: ALParams
) -> float:
    """Regularized saddle objective: AL at (x, w, lam) minus the proximal term."""
    z = as_vector(z, dim=spec.p)
    lam = as_vector(lam, dim=spec.p)
    reg = 0.5 * params.gamma2 * float(np.sum((lam - z) ** 2))
    return al_value(spec, x, w, lam, params.gamma1) - reg


def ell_grad_w(
    spec: ProblemSpec, x: Vector, z: Vector, w: Vector, lam: Vector, params: ALParams
) -> Vector:
    """Exact primal gradient; the proximal term does not involve w."""
    _, gy, _ = al_grad(spec, x, w, lam, params.gamma1)
    return gy


def ell_grad_w_stoch(
    spec: ProblemSpec,
    x: Vector,
    z: Vector,
    w: Vector,
    lam: Vector,
    params: ALParams,
    gen: np.random.Generator,
) -> Vector:
    _, gy, _ = al_grad_stoch(spec, x, w, lam, params.gamma1, gen)
    return gy


def ell_grad_lambda(
    spec: ProblemSpec, x: Vector, z: Vector, w: Vector, lam: Vector, params: ALParams
) -> Vector:
    """Dual gradient max(-g1 lam, H(x, w)) - g2 (lam - z); noise-free by construction."""
    x, w = spec.check_point(x, w)
    z = as_vector(z, dim=spec.p)
    lam = as_vector(lam, dim=spec.p)
    h = spec.H_values(x, w)
    return np.maximum(-params.gamma1 * lam, h) - params.gamma2 * (lam - z)


def ell_grad_x_stoch(
    spec: ProblemSpec,
    x: Vector,
    z: Vector,
    w: Vector,
    lam: Vector,
    params: ALParams,
    gen: np.random.Generator,
) -> Vector:
    """Stochastic x-gradient of the saddle objective (used by the outer oracle)."""
    gx, _, _ = al_grad_stoch(spec, x, w, lam, params.gamma1, gen)
    return gx


def ell_grad_x(
    spec: ProblemSpec, x: Vector, z: Vector, w: Vector, lam: Vector, params: ALParams
) -> Vector:
    gx, _, _ = al_grad(spec, x, w, lam, params.gamma1)
    return gx


def lagrangian_value(spec: ProblemSpec, x: Vector, y: Vector, z: Vector) -> float:
    """Plain Lagrangian G + z'H; lower-bounds the AL on feasible points with z >= 0."""
    x, y = spec.check_point(x, y)
    z = as_vector(z, dim=spec.p)
    return spec.G_value(x, y) + float(z @ spec.H_values(x, y))
