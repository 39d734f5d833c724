"""Stochastic bilevel optimization with nonlinear lower-level constraints.

The solver stack reformulates the bilevel problem through an augmented
Lagrangian value function: an inner projected gradient descent-ascent loop
estimates the regularized saddle of the lower level, and an outer penalized
stochastic projected-gradient loop (optionally with a recursive-momentum
direction) drives the joint iterate u = (x, y, z). Reference solvers,
benchmark problems, and diagnostics make the convergence behavior testable
at desk scale.
"""

__version__ = "0.1.0"

from .auglag import (
    ALParams,
    al_grad,
    al_grad_stoch,
    al_penalty,
    al_value,
    al_value_stoch,
    ell_grad_lambda,
    ell_grad_w,
    ell_value,
    lagrangian_value,
)
from .core import (
    Box,
    JointPoint,
    ProblemSpec,
    Vector,
    constraint_violation,
    interval,
    project_box,
    project_nonneg,
)
from .diagnostics import RateFit, fit_rate, lower_gap, stationarity_proxy
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    InfeasibleError,
    NumericsError,
)
from .penalty import PenaltyParams, PsiGrad, ghat_grad, ghat_value, psi_grad, psi_value
from .problems import make_quad, make_toy, quad_from_json, quad_to_json
from .refsolve import (
    ReferenceSolution,
    envelope_value,
    exact_ghat_grad,
    hyperobjective_grid,
    solve_lower,
    solve_saddle,
)
from .rng import GradPair, GradSample, RngStream, batch_mean_grad, gaussian_grad_oracle
from .salm import InnerConfig, InnerResult, saddle_gap_estimate, salm_run
from .salvf import OuterConfig, RunTrace, feasibility_refine, salvf_run, select_index
from .salvf_vr import VRConfig, direction_error_probe, salvf_vr_run

__all__ = [
    "__version__",
    "ALParams", "al_grad", "al_grad_stoch", "al_penalty", "al_value", "al_value_stoch",
    "ell_grad_lambda", "ell_grad_w", "ell_value", "lagrangian_value",
    "Box", "JointPoint", "ProblemSpec", "Vector", "constraint_violation", "interval",
    "project_box", "project_nonneg",
    "RateFit", "fit_rate", "lower_gap", "stationarity_proxy",
    "ConfigError", "ConvergenceError", "DimensionError", "InfeasibleError", "NumericsError",
    "PenaltyParams", "PsiGrad", "ghat_grad", "ghat_value", "psi_grad", "psi_value",
    "make_quad", "make_toy", "quad_from_json", "quad_to_json",
    "ReferenceSolution", "envelope_value", "exact_ghat_grad", "hyperobjective_grid",
    "solve_lower", "solve_saddle",
    "GradPair", "GradSample", "RngStream", "batch_mean_grad", "gaussian_grad_oracle",
    "InnerConfig", "InnerResult", "saddle_gap_estimate", "salm_run",
    "OuterConfig", "RunTrace", "feasibility_refine", "salvf_run", "select_index",
    "VRConfig", "direction_error_probe", "salvf_vr_run",
]
