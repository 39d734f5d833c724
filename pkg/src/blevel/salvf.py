"""Outer loop: penalized stochastic projected gradient with random-index output.

Each iteration first refreshes the inner saddle estimate at the previous
anchor (x^{k-1}, z^{k-1}) -- the off-by-one is part of the method and kept
exactly; at k = 0 the anchor is the initial point. The gradient step is then
taken at the current iterate u^k, projected back into X x Y x Z. The output
index R is drawn with probability proportional to the step sizes, and an
optional extra inner run at (x^R, z = 0) with zero Moreau regularization
restores feasibility of the returned lower-level point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .auglag import ALParams
from .core import Box, JointPoint, ProblemSpec, Vector, as_vector, project_box
from .errors import ConfigError, NumericsError
from .penalty import PenaltyParams, PsiGrad, psi_grad, psi_value
from .rng import RngStream, SampleCounter
from .salm import InnerConfig, InnerResult, resolve_w0, salm_run

DIVERGENCE_GUARD = 1e8

INIT_MODES = ("center", "uniform", "custom")
ALPHA_SCHEDULES = ("constant", "poly13")


def alpha_at(schedule: str, alpha: float, k: int) -> float:
    """Step size at outer iteration k; poly13 is alpha * (k+1)^(-1/3)."""
    if schedule == "constant":
        return alpha
    return alpha * (k + 1) ** (-1.0 / 3.0)


@dataclass(frozen=True)
class OuterConfig:
    """Everything the outer loop needs; sample sizes are constant across k."""

    K: int
    alpha: float
    s: int
    r: int
    q: int
    pen: PenaltyParams
    al: ALParams
    inner: InnerConfig
    B: float | None = None
    feasibility_refine: bool = False
    s_refine: int = 0
    init_mode: str = "center"
    u0: JointPoint | None = None
    alpha_schedule: str = "constant"
    L_psi_estimate: float | None = None
    track_psi: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"outer iteration count K must be >= 1, got {self.K}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.r < 1 or self.q < 1 or self.s < 0:
            raise ConfigError("sample sizes must satisfy r >= 1, q >= 1, s >= 0")
        if self.B is not None and not self.B > 0:
            raise ConfigError(f"B must be > 0, got {self.B}")
        if self.s_refine < 0:
            raise ConfigError("s_refine must be >= 0")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(f"init_mode must be one of {INIT_MODES}")
        if self.init_mode == "custom" and self.u0 is None:
            raise ConfigError("init_mode='custom' requires u0")
        if self.alpha_schedule not in ALPHA_SCHEDULES:
            raise ConfigError(f"alpha_schedule must be one of {ALPHA_SCHEDULES}")
        if self.L_psi_estimate is not None and self.alpha >= 1.0 / (2.0 * self.L_psi_estimate):
            warnings.warn(
                f"alpha={self.alpha} >= 1/(2 L_Psi)={1.0 / (2.0 * self.L_psi_estimate)}; "
                "outer convergence guarantee void",
                stacklevel=2,
            )

    def z_box(self, p: int) -> Box:
        b = self.B if self.B is not None else 10.0 * max(p, 1)
        height = b / np.sqrt(p) if p > 0 else 0.0
        return Box(np.zeros(p), np.full(p, height))


@dataclass
class IterationRecord:
    k: int
    u: JointPoint
    alpha: float
    step_norm2: float
    cviol: float
    psi_est: float
    upper_samples: int
    lower_samples: int
    saddle_gap: float | None = None


@dataclass
class RunTrace:
    """Full record of one outer run; a pure function of (config, seed)."""

    records: list[IterationRecord] = field(default_factory=list)
    u_final: JointPoint | None = None
    R: int = -1
    u_R: JointPoint | None = None
    refined_y: Vector | None = None
    refined_z: Vector | None = None
    seed: int = 0
    algorithm: str = "salvf"
    beta_clamp_count: int = 0
    upper_samples_total: int = 0
    lower_samples_total: int = 0

    @property
    def K(self) -> int:
        return len(self.records)

    def alphas(self) -> np.ndarray:
        return np.array([rec.alpha for rec in self.records])

    def step_norms2(self) -> np.ndarray:
        return np.array([rec.step_norm2 for rec in self.records])

    def iterates(self) -> list[JointPoint]:
        pts = [rec.u for rec in self.records]
        if self.u_final is not None:
            pts.append(self.u_final)
        return pts


def select_index(alphas, rng: RngStream) -> int:
    """Draw index k with probability alpha_k / sum(alpha)."""
    a = np.asarray(alphas, dtype=float)
    if a.size == 0:
        raise ConfigError("select_index needs at least one step size")
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise ConfigError("select_index needs strictly positive finite step sizes")
    u = rng.generator().random()
    cdf = np.cumsum(a / a.sum())
    return int(np.searchsorted(cdf, u, side="right").clip(0, a.size - 1))


def initial_point(spec: ProblemSpec, cfg: OuterConfig, root: RngStream) -> JointPoint:
    if cfg.init_mode == "custom":
        u0 = cfg.u0
        return JointPoint(
            project_box(u0.x, spec.X),
            project_box(u0.y, spec.Y),
            project_box(u0.z, cfg.z_box(spec.p)),
        )
    if cfg.init_mode == "uniform":
        gen = root.child("init").generator()
        return JointPoint(spec.X.sample(gen), spec.Y.sample(gen), np.zeros(spec.p))
    return JointPoint(spec.X.center, spec.Y.center, np.zeros(spec.p))


def feasibility_refine(
    spec: ProblemSpec,
    x_R: Vector,
    cfg: OuterConfig,
    rng: RngStream,
    w0: Vector,
    counter: SampleCounter | None = None,
) -> tuple[Vector, Vector]:
    """Extra inner run at (x^R, 0) with gamma2 = 0; returns its (w, lam)."""
    params0 = ALParams(cfg.al.gamma1, 0.0)
    inner_cfg = replace(cfg.inner, s=cfg.s_refine, warm_start="previous", theory_check=False)
    res = salm_run(spec, x_R, np.zeros(spec.p), params0, inner_cfg, w0, rng, counter=counter)
    return res.w, res.lam


def _direction_guard(d: PsiGrad, k: int) -> None:
    if not d.is_finite():
        raise NumericsError("non-finite outer direction", iteration=k)
    if d.norm() > DIVERGENCE_GUARD:
        raise NumericsError(
            f"outer direction norm {d.norm():.3e} exceeds divergence guard {DIVERGENCE_GUARD:.0e}",
            iteration=k,
        )


def salvf_run(
    spec: ProblemSpec,
    cfg: OuterConfig,
    seed: int,
    saddle_gap_fn=None,
) -> RunTrace:
    """Run the outer loop for K iterations; deterministic given (cfg, seed).

    ``saddle_gap_fn(x, z, w, lam) -> float`` optionally scores each inner
    output against a reference envelope (diagnostics only; expensive).
    """
    root = RngStream(seed)
    counter = SampleCounter()
    zbox = cfg.z_box(spec.p)
    u = initial_point(spec, cfg, root)
    w_prev = u.y.copy()

    trace = RunTrace(seed=seed, algorithm="salvf")

    try:
        u = _salvf_loop(spec, cfg, u, w_prev, root, counter, zbox, trace, saddle_gap_fn)
    except NumericsError as err:
        err.partial_trace = trace
        raise

    trace.u_final = u
    trace.R = select_index([rec.alpha for rec in trace.records], root.child("index"))
    trace.u_R = trace.records[trace.R].u

    if cfg.feasibility_refine:
        y_prime, z_prime = feasibility_refine(
            spec, trace.u_R.x, cfg, root.child("refine"), trace.u_R.y, counter=counter
        )
        trace.refined_y = y_prime
        trace.refined_z = z_prime

    trace.upper_samples_total = counter.upper
    trace.lower_samples_total = counter.lower
    return trace


def _salvf_loop(spec, cfg, u, w_prev, root, counter, zbox, trace, saddle_gap_fn):
    anchor_x, anchor_z = u.x, u.z
    for k in range(cfg.K):
        inner = salm_run(
            spec,
            anchor_x,
            anchor_z,
            cfg.al,
            replace(cfg.inner, s=cfg.s),
            resolve_w0(cfg.inner, spec, w_prev),
            root.child("inner", k),
            counter=counter,
        )
        w_prev = inner.w

        d = psi_grad(
            spec,
            u,
            inner.w,
            inner.lam,
            cfg.pen,
            cfg.al,
            cfg.r,
            cfg.q,
            root.child("zeta", k),
            root.child("xitilde", k),
            counter=counter,
        )
        _direction_guard(d, k)

        a_k = alpha_at(cfg.alpha_schedule, cfg.alpha, k)
        u_next = JointPoint(
            project_box(u.x - a_k * d.gx, spec.X),
            project_box(u.y - a_k * d.gy, spec.Y),
            project_box(u.z - a_k * d.gz, zbox),
        )
        step2 = float(np.sum((u_next.concat() - u.concat()) ** 2))

        h = spec.H_values(u.x, u.y)
        cviol = 0.5 * float(np.sum(np.maximum(h, 0.0) ** 2))
        psi_est = (
            psi_value(spec, u, inner.w, inner.lam, cfg.pen, cfg.al) if cfg.track_psi else np.nan
        )
        gap = saddle_gap_fn(anchor_x, anchor_z, inner.w, inner.lam) if saddle_gap_fn else None
        trace.records.append(
            IterationRecord(
                k=k,
                u=u,
                alpha=a_k,
                step_norm2=step2,
                cviol=cviol,
                psi_est=psi_est,
                upper_samples=counter.upper,
                lower_samples=counter.lower,
                saddle_gap=gap,
            )
        )

        anchor_x, anchor_z = u.x, u.z
        u = u_next

    return u
