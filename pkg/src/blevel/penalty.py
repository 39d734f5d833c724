"""Penalized single-level objective and its mini-batched stochastic gradient.

Given the inner loop's saddle estimate (w_hat, lam_hat), the value-function
surrogate is Ghat = G(x, y) - ell(x, z, w_hat, lam_hat) and the penalized
objective is

    Psi = F + c1 * Ghat + (c2 / 2) * sum_i [H_i]_+^2 .

The gradient oracle is biased exactly where (w_hat, lam_hat) is inexact: in
the x-block of the ell term and in the z-block c1 * g2 * (z - lam_hat). The
constraint penalty is deterministic and noise-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .auglag import ALParams, ell_value
from .core import JointPoint, ProblemSpec, Vector, as_vector
from .errors import ConfigError
from .rng import RngStream, SampleCounter


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty weights c1 (value-function gap) and c2 (constraint violation)."""

    c1: float
    c2: float

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ConfigError("penalty weights c1, c2 must be nonnegative")


@dataclass(frozen=True)
class PsiGrad:
    gx: Vector
    gy: Vector
    gz: Vector

    def concat(self) -> Vector:
        return np.concatenate([self.gx, self.gy, self.gz])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.gx**2) + np.sum(self.gy**2) + np.sum(self.gz**2)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.concat())))


def ghat_value(
    spec: ProblemSpec,
    u: JointPoint,
    w_hat: Vector,
    lam_hat: Vector,
    params: ALParams,
) -> float:
    """Deterministic surrogate gap G(x, y) - ell(x, z, w_hat, lam_hat); diagnostic."""
    return spec.G_value(u.x, u.y) - ell_value(spec, u.x, u.z, w_hat, lam_hat, params)


def ghat_grad(
    spec: ProblemSpec,
    u: JointPoint,
    w_hat: Vector,
    lam_hat: Vector,
    params: ALParams,
    q: int,
    rng: RngStream,
    counter: SampleCounter | None = None,
) -> PsiGrad:
    """Mini-batched stochastic gradient of the surrogate gap.

    Per batch element the x-block differences two noisy lower-oracle
    evaluations (at (x, y) and at (x, w_hat)); the y-block averages the
    (x, y) evaluations; the z-block g2 * (z - lam_hat) is exact.
    """
    if q < 1:
        raise ConfigError(f"lower batch size q must be >= 1, got {q}")
    x, y, z = u.x, u.y, as_vector(u.z, spec.p)
    w_hat = as_vector(w_hat, spec.n)
    lam_hat = as_vector(lam_hat, spec.p)
    gen = rng.generator()

    h_w = spec.H_values(x, w_hat)
    t = np.maximum(params.gamma1 * lam_hat + h_w, 0.0)
    jx_w, _ = spec.grad_H(x, w_hat)
    pen_x = (t @ jx_w) / params.gamma1

    gx = np.zeros(spec.m)
    gy = np.zeros(spec.n)
    for _ in range(q):
        g_y = spec.grad_g(x, y, gen)
        g_w = spec.grad_g(x, w_hat, gen)
        gx += g_y.gx - (g_w.gx + pen_x)
        gy += g_y.gy
    if counter is not None:
        counter.add_lower(q)
    # d/dz of -ell = -(Moreau envelope gradient) = g2 (z - lam_hat).
    return PsiGrad(gx / q, gy / q, params.gamma2 * (z - lam_hat))


def psi_value(
    spec: ProblemSpec,
    u: JointPoint,
    w_hat: Vector,
    lam_hat: Vector,
    pen: PenaltyParams,
    params: ALParams,
) -> float:
    """Deterministic penalized objective at the current saddle estimate."""
    h = spec.H_values(u.x, u.y)
    cons = 0.5 * float(np.sum(np.maximum(h, 0.0) ** 2))
    return (
        spec.F_value(u.x, u.y)
        + pen.c1 * ghat_value(spec, u, w_hat, lam_hat, params)
        + pen.c2 * cons
    )


def psi_grad(
    spec: ProblemSpec,
    u: JointPoint,
    w_hat: Vector,
    lam_hat: Vector,
    pen: PenaltyParams,
    params: ALParams,
    r: int,
    q: int,
    zeta_rng: RngStream,
    xitilde_rng: RngStream,
    counter: SampleCounter | None = None,
) -> PsiGrad:
    """Stochastic gradient of Psi: r upper draws, q lower draws, exact H penalty."""
    if r < 1:
        raise ConfigError(f"upper batch size r must be >= 1, got {r}")
    x, y = u.x, u.y
    gen = zeta_rng.generator()
    fx = np.zeros(spec.m)
    fy = np.zeros(spec.n)
    for _ in range(r):
        s = spec.grad_f(x, y, gen)
        fx += s.gx
        fy += s.gy
    fx /= r
    fy /= r
    if counter is not None:
        counter.add_upper(r)

    gpart = ghat_grad(spec, u, w_hat, lam_hat, params, q, xitilde_rng, counter=counter)

    h = spec.H_values(x, y)
    hp = np.maximum(h, 0.0)
    jx, jy = spec.grad_H(x, y)
    cons_x = hp @ jx
    cons_y = hp @ jy

    return PsiGrad(
        fx + pen.c1 * gpart.gx + pen.c2 * cons_x,
        fy + pen.c1 * gpart.gy + pen.c2 * cons_y,
        pen.c1 * gpart.gz,
    )
