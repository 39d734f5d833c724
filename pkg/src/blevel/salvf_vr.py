"""Outer loop with a recursive-momentum direction (STORM-style batch replay).

The direction update at iteration k >= 1 is

    d^k = grad^k(u^k) + (1 - beta_k) * (d^{k-1} - grad^k(u^{k-1})),

where both gradients reuse the same sample batches and the same inner saddle
estimate; only the evaluation point differs. Replayed batches are counted
once. Step sizes decay as alpha * (k+1)^(-1/3) and beta_{k+1} = beta *
alpha_k^2, clamped into (0, 1]; beta_k = 1 collapses the recursion to the
plain stochastic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import JointPoint, ProblemSpec, Vector, project_box
from .errors import ConfigError
from .penalty import PsiGrad, psi_grad, psi_value
from .rng import RngStream, SampleCounter
from .salm import resolve_w0, salm_run
from .salvf import (
    IterationRecord,
    OuterConfig,
    RunTrace,
    _direction_guard,
    alpha_at,
    feasibility_refine,
    initial_point,
    select_index,
)


@dataclass(frozen=True)
class VRConfig(OuterConfig):
    """OuterConfig plus the momentum scale beta; the step schedule is decaying."""

    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha_schedule", "poly13")
        super().__post_init__()
        if not self.beta > 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")

    def beta_at(self, k: int) -> tuple[float, bool]:
        """Momentum coefficient used at iteration k >= 1, with clamp flag."""
        a_prev = alpha_at(self.alpha_schedule, self.alpha, k - 1)
        raw = self.beta * a_prev**2
        return (min(raw, 1.0), raw > 1.0)


def salvf_vr_run(
    spec: ProblemSpec,
    cfg: VRConfig,
    seed: int,
    saddle_gap_fn=None,
) -> RunTrace:
    """Variance-reduced outer run; stream layout matches the plain outer loop."""
    root = RngStream(seed)
    counter = SampleCounter()
    zbox = cfg.z_box(spec.p)
    u = initial_point(spec, cfg, root)
    w_prev = u.y.copy()

    trace = RunTrace(seed=seed, algorithm="salvf_vr")

    try:
        u = _vr_loop(spec, cfg, u, w_prev, root, counter, zbox, trace, saddle_gap_fn)
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


def _vr_loop(spec, cfg, u, w_prev, root, counter, zbox, trace, saddle_gap_fn):
    anchor_x, anchor_z = u.x, u.z
    u_prev: JointPoint | None = None
    d_prev: PsiGrad | None = None

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

        zeta = root.child("zeta", k)
        xitilde = root.child("xitilde", k)
        grad_now = psi_grad(
            spec, u, inner.w, inner.lam, cfg.pen, cfg.al, cfg.r, cfg.q, zeta, xitilde,
            counter=counter,
        )

        if k == 0:
            d = grad_now
        else:
            beta_k, clamped = cfg.beta_at(k)
            if clamped:
                trace.beta_clamp_count += 1
            if beta_k >= 1.0:
                d = grad_now
            else:
                # Replay the same batches at the previous iterate; not re-counted.
                grad_prev_pt = psi_grad(
                    spec, u_prev, inner.w, inner.lam, cfg.pen, cfg.al, cfg.r, cfg.q,
                    zeta, xitilde, counter=None,
                )
                carry = 1.0 - beta_k
                d = PsiGrad(
                    grad_now.gx + carry * (d_prev.gx - grad_prev_pt.gx),
                    grad_now.gy + carry * (d_prev.gy - grad_prev_pt.gy),
                    grad_now.gz + carry * (d_prev.gz - grad_prev_pt.gz),
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
        u_prev = u
        d_prev = d
        u = u_next

    return u


def direction_error_probe(
    spec: ProblemSpec,
    u_sequence: list[JointPoint],
    cfg: VRConfig,
    seed: int,
    repeats: int,
    inner_solver=None,
) -> np.ndarray:
    """Monte-Carlo estimate of E||d^k - mean gradient at u^k||^2 along a frozen sequence.

    Each repeat replays the direction recursion with fresh randomness; the
    per-k reference mean is the across-repeat average of the plain gradient
    at u^k. ``inner_solver(x, z) -> (w, lam)`` overrides the stochastic inner
    loop (pass a reference saddle for the exact-inner-solve regime).
    """
    if repeats < 2:
        raise ConfigError("direction_error_probe needs repeats >= 2")
    K = len(u_sequence)
    dim = spec.m + spec.n + spec.p
    directions = np.zeros((repeats, K, dim))
    plain = np.zeros((repeats, K, dim))

    for rep in range(repeats):
        root = RngStream(seed).child("probe", rep)
        w_prev = u_sequence[0].y.copy()
        d_prev: PsiGrad | None = None
        for k in range(K):
            anchor = u_sequence[max(k - 1, 0)]
            if inner_solver is not None:
                w_hat, lam_hat = inner_solver(anchor.x, anchor.z)
            else:
                inner = salm_run(
                    spec, anchor.x, anchor.z, cfg.al, replace(cfg.inner, s=cfg.s),
                    resolve_w0(cfg.inner, spec, w_prev), root.child("inner", k),
                )
                w_hat, lam_hat = inner.w, inner.lam
                w_prev = w_hat
            zeta = root.child("zeta", k)
            xitilde = root.child("xitilde", k)
            grad_now = psi_grad(
                spec, u_sequence[k], w_hat, lam_hat, cfg.pen, cfg.al, cfg.r, cfg.q,
                zeta, xitilde,
            )
            if k == 0:
                d = grad_now
            else:
                beta_k, _ = cfg.beta_at(k)
                if beta_k >= 1.0:
                    d = grad_now
                else:
                    grad_prev_pt = psi_grad(
                        spec, u_sequence[k - 1], w_hat, lam_hat, cfg.pen, cfg.al,
                        cfg.r, cfg.q, zeta, xitilde,
                    )
                    carry = 1.0 - beta_k
                    d = PsiGrad(
                        grad_now.gx + carry * (d_prev.gx - grad_prev_pt.gx),
                        grad_now.gy + carry * (d_prev.gy - grad_prev_pt.gy),
                        grad_now.gz + carry * (d_prev.gz - grad_prev_pt.gz),
                    )
            directions[rep, k] = d.concat()
            plain[rep, k] = grad_now.concat()
            d_prev = d

    reference = plain.mean(axis=0)
    errors = directions - reference[None, :, :]
    return np.mean(np.sum(errors**2, axis=2), axis=0)
