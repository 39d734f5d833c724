"""Inner loop: stochastic projected gradient descent-ascent on the regularized saddle.

One iteration takes a primal step on w (projected into Y) and a dual ascent
step on lam (projected onto the nonnegative orthant), both with 1/(j+1)
decaying step sizes and the same sample draw. The dual gradient carries no
noise because the constraints are deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .auglag import ALParams, ell_grad_lambda, ell_value
from .core import ProblemSpec, Vector, as_vector, project_box, project_nonneg
from .errors import ConfigError, NumericsError
from .rng import RngStream, SampleCounter

WARM_STARTS = ("zero", "previous", "custom")


@dataclass(frozen=True)
class InnerConfig:
    """Iteration count and base step sizes for the inner saddle solver.

    eta and rho are base steps; the schedule is eta/(j+1), rho/(j+1). With
    ``theory_check`` on, warns when they fall below the 1/mu_G and 1/gamma2
    levels the convergence guarantee assumes.
    """

    s: int
    eta: float
    rho: float
    warm_start: str = "previous"
    w0_custom: Vector | None = None
    theory_check: bool = False

    def __post_init__(self):
        if self.s < 0:
            raise ConfigError(f"inner iteration count must be >= 0, got {self.s}")
        if not (self.eta > 0 and self.rho > 0):
            raise ConfigError("inner step sizes eta, rho must be > 0")
        if self.warm_start not in WARM_STARTS:
            raise ConfigError(f"warm_start must be one of {WARM_STARTS}")
        if self.warm_start == "custom" and self.w0_custom is None:
            raise ConfigError("warm_start='custom' requires w0_custom")

    def validate_theory(self, spec: ProblemSpec, params: ALParams) -> None:
        if not self.theory_check:
            return
        if spec.mu_G is not None and self.eta < 1.0 / spec.mu_G:
            warnings.warn(
                f"eta={self.eta} below 1/mu_G={1.0 / spec.mu_G}; inner rate guarantee void",
                stacklevel=2,
            )
        if params.gamma2 > 0 and self.rho < 1.0 / params.gamma2:
            warnings.warn(
                f"rho={self.rho} below 1/gamma2={1.0 / params.gamma2}; dual bound guarantee void",
                stacklevel=2,
            )


@dataclass
class InnerResult:
    w: Vector
    lam: Vector
    samples_used: int
    trace: list[tuple[Vector, Vector]] = field(default_factory=list)

    def ell_along_trace(self, spec: ProblemSpec, x, z, params: ALParams) -> np.ndarray:
        return np.array([ell_value(spec, x, z, w, lam, params) for (w, lam) in self.trace])


def resolve_w0(cfg: InnerConfig, spec: ProblemSpec, w_previous: Vector | None) -> Vector:
    if cfg.warm_start == "zero":
        return project_box(np.zeros(spec.n), spec.Y)
    if cfg.warm_start == "custom":
        return project_box(as_vector(cfg.w0_custom, spec.n), spec.Y)
    if w_previous is None:
        raise ConfigError("warm_start='previous' requires a previous iterate")
    return project_box(as_vector(w_previous, spec.n), spec.Y)


def salm_run(
    spec: ProblemSpec,
    x: Vector,
    z: Vector,
    params: ALParams,
    cfg: InnerConfig,
    w0: Vector,
    rng: RngStream,
    counter: SampleCounter | None = None,
    keep_trace: bool = False,
) -> InnerResult:
    """Run s descent-ascent steps from (w0, 0) at frozen (x, z); returns (w^s, lam^s).

    Consumes exactly s lower-oracle samples. lam^0 = 0 is fixed by the
    algorithm and not configurable.
    """
    x = as_vector(x, spec.m)
    z = as_vector(z, spec.p)
    cfg.validate_theory(spec, params)
    w = project_box(as_vector(w0, spec.n), spec.Y)
    lam = np.zeros(spec.p)
    gen = rng.generator()
    gamma1, gamma2 = params.gamma1, params.gamma2
    y_lo, y_hi = spec.Y.lower, spec.Y.upper
    jy_const = spec.grad_H(x, w)[1] if spec.constant_grad_H else None

    trace: list[tuple[Vector, Vector]] = [(w.copy(), lam.copy())] if keep_trace else []

    for j in range(cfg.s):
        h = spec.H_values(x, w)
        t = np.maximum(gamma1 * lam + h, 0.0)
        g = spec.grad_g(x, w, gen)
        jy = jy_const if jy_const is not None else spec.grad_H(x, w)[1]
        grad_w = g.gy + (t @ jy) / gamma1
        grad_lam = np.maximum(-gamma1 * lam, h) - gamma2 * (lam - z)
        if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_lam))):
            raise NumericsError("non-finite inner gradient", iteration=j)
        w = np.clip(w - (cfg.eta / (j + 1)) * grad_w, y_lo, y_hi)
        lam = np.maximum(lam + (cfg.rho / (j + 1)) * grad_lam, 0.0)
        if keep_trace:
            trace.append((w.copy(), lam.copy()))

    if counter is not None:
        counter.add_lower(cfg.s)
    return InnerResult(w=w, lam=lam, samples_used=cfg.s, trace=trace)


def saddle_gap_estimate(
    spec: ProblemSpec,
    x: Vector,
    z: Vector,
    params: ALParams,
    w: Vector,
    lam: Vector,
    ref_envelope: float,
) -> float:
    """|ell(x, z, w, lam) - E(x, z)| against a reference envelope value."""
    return abs(ell_value(spec, x, z, w, lam, params) - float(ref_envelope))
