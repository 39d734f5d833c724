"""Independent deterministic reference solvers used as ground truth in tests.

These deliberately take different routes than the stochastic solvers they
validate: dense grids plus golden-section for one-dimensional lower levels,
exhaustive active-set enumeration for quadratic ones, and a best-response
reduction for the regularized saddle. For built-in problems with quadratic
lower structure the saddle is polished to machine precision by solving the
linear system of its active piece.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .auglag import ALParams, ell_grad_lambda, ell_value
from .core import (
    JointPoint,
    ProblemSpec,
    QuadraticLowerData,
    Vector,
    as_vector,
    project_box,
    project_nonneg,
)
from .errors import ConfigError, ConvergenceError, InfeasibleError
from .penalty import PsiGrad

ACTIVE_SET_MAX_P = 8


@dataclass
class ReferenceSolution:
    """A certified solve: value, minimizer/saddle, honest residual-based tolerance."""

    value: float
    argmin_or_saddle: Vector
    tolerance: float
    method_tag: str
    multipliers: Vector | None = None
    extras: dict = field(default_factory=dict)


def _golden_minimize(phi, lo: float, hi: float, iters: int = 120) -> tuple[float, float]:
    """Golden-section on a unimodal (possibly +inf outside its domain) function.

    Returns the best probed point rather than the bracket midpoint, so a
    minimizer sitting exactly on a feasibility boundary is never replaced by
    an infeasible midpoint.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = phi(c), phi(d)
    best_x, best_f = (c, fc) if fc <= fd else (d, fd)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = phi(d)
        for xv, fv in ((c, fc), (d, fd)):
            if fv < best_f:
                best_x, best_f = xv, fv
        if b - a < 1e-14 * max(1.0, abs(a) + abs(b)):
            break
    return best_x, best_f


def _solve_lower_1d(spec: ProblemSpec, x: Vector, tol: float, grid: int = 4001) -> ReferenceSolution:
    lo, hi = float(spec.Y.lower[0]), float(spec.Y.upper[0])
    ys = np.linspace(lo, hi, grid)

    def phi(yv: float) -> float:
        y = np.array([yv])
        h = spec.H_values(x, y)
        if h.size and np.max(h) > 0.0:
            return np.inf
        return spec.G_value(x, y)

    vals = np.array([phi(yv) for yv in ys])
    if not np.any(np.isfinite(vals)):
        raise InfeasibleError(f"no feasible lower-level point on the grid at x={x}")
    i = int(np.argmin(vals))
    a = ys[max(i - 1, 0)]
    b = ys[min(i + 1, grid - 1)]
    ym, vm = _golden_minimize(phi, a, b)
    if not np.isfinite(vm):  # the cell center may sit outside the feasible slice
        ym, vm = ys[i], vals[i]
    return ReferenceSolution(
        value=float(vm),
        argmin_or_saddle=np.array([ym]),
        tolerance=min(max(1e-12, tol), 1e-8),
        method_tag="grid",
    )


def _solve_lower_kkt(spec: ProblemSpec, x: Vector, tol: float) -> ReferenceSolution:
    if spec.p > ACTIVE_SET_MAX_P:
        raise ConfigError(f"active-set enumeration capped at p <= {ACTIVE_SET_MAX_P}")
    data = spec.lower_quadratic(x)
    Q, c, c0, A, b = data.Q, data.c, data.c0, data.A, data.b
    n, p = Q.shape[0], A.shape[0] if A.size else 0

    best: tuple[float, Vector, Vector] | None = None
    for active in itertools.chain.from_iterable(
        itertools.combinations(range(p), k) for k in range(p + 1)
    ):
        idx = list(active)
        na = len(idx)
        kkt = np.zeros((n + na, n + na))
        kkt[:n, :n] = Q
        rhs = np.concatenate([-c, b[idx]])
        if na:
            kkt[:n, n:] = A[idx].T
            kkt[n:, :n] = A[idx]
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        y = sol[:n]
        lam_a = sol[n:]
        h = A @ y - b if p else np.zeros(0)
        if p and np.max(np.delete(h, idx) if na else h, initial=-np.inf) > 1e-9:
            continue
        if na and np.min(lam_a) < -1e-9:
            continue
        lam = np.zeros(p)
        lam[idx] = np.maximum(lam_a, 0.0)
        val = 0.5 * float(y @ Q @ y) + float(c @ y) + c0
        if best is None or val < best[0] - 1e-12:
            best = (val, y, lam)
    if best is None:
        raise InfeasibleError(f"no KKT-consistent active set found at x={x}")
    val, y, lam = best
    if not spec.Y.contains(y, atol=1e-9):
        warnings.warn(
            "active-set lower solve left the box Y; instance violates the interior assumption",
            stacklevel=2,
        )
    res = np.linalg.norm(Q @ y + c + (A.T @ lam if p else 0.0))
    return ReferenceSolution(
        value=val,
        argmin_or_saddle=y,
        tolerance=max(res, 1e-12),
        method_tag="active_set_kkt",
        multipliers=lam,
    )


def solve_lower(
    spec: ProblemSpec, x: Vector, tol: float = 1e-8, method: str = "auto"
) -> ReferenceSolution:
    """Reference (y*(x), v(x)) for the constrained lower level.

    method 'auto' prefers the grid route for one-dimensional problems (it is
    structurally independent of the solver stack) and active-set enumeration
    for quadratic ones; 'grid'/'kkt' force a route.
    """
    if tol <= 0:
        raise ConfigError("tol must be > 0")
    x = as_vector(x, spec.m)
    if method not in ("auto", "grid", "kkt"):
        raise ConfigError(f"unknown lower-solve method {method!r}")
    if method == "grid" or (method == "auto" and spec.n == 1):
        if spec.n != 1:
            raise ConfigError("grid lower solve needs n == 1")
        return _solve_lower_1d(spec, x, tol)
    if spec.lower_quadratic is not None:
        return _solve_lower_kkt(spec, x, tol)
    raise ConfigError("reference lower solve needs n == 1 or quadratic lower structure")


def _best_response_lambda(h: Vector, z: Vector, gamma1: float, gamma2: float) -> Vector:
    """Closed-form argmax over lambda >= 0 of the per-coordinate concave pieces."""
    branch_a = h >= -(gamma1 * gamma2 / (gamma1 + gamma2)) * z
    cand = np.where(branch_a, z + h / gamma2, (gamma2 / (gamma1 + gamma2)) * z)
    return np.maximum(cand, 0.0)


def _phi_and_grad(spec: ProblemSpec, x: Vector, z: Vector, params: ALParams, w: Vector):
    h = spec.H_values(x, w)
    lam = _best_response_lambda(h, z, params.gamma1, params.gamma2)
    val = ell_value(spec, x, z, w, lam, params)
    t = np.maximum(params.gamma1 * lam + h, 0.0)
    _, gy = spec.grad_G(x, w)
    _, jy = spec.grad_H(x, w)
    grad = gy + (t @ jy) / params.gamma1
    return val, grad, lam


def _saddle_residual(
    spec: ProblemSpec, x: Vector, z: Vector, params: ALParams, w: Vector, lam: Vector
) -> float:
    _, gy = spec.grad_G(x, w)
    h = spec.H_values(x, w)
    t = np.maximum(params.gamma1 * lam + h, 0.0)
    _, jy = spec.grad_H(x, w)
    gw = gy + (t @ jy) / params.gamma1
    glam = ell_grad_lambda(spec, x, z, w, lam, params)
    rw = np.linalg.norm(w - project_box(w - gw, spec.Y))
    rlam = np.linalg.norm(lam - project_nonneg(lam + glam))
    return float(max(rw, rlam))


def _saddle_piece_solve(
    spec: ProblemSpec, x: Vector, z: Vector, params: ALParams, w_guess: Vector
) -> tuple[Vector, Vector] | None:
    """Exact saddle on the active piece for quadratic lower structure.

    Returns None when the piece guessed from w_guess is inconsistent (e.g. the
    solution sits on a kink); callers then keep the numeric answer.
    """
    data = spec.lower_quadratic(x)
    Q, c, A, b = data.Q, data.c, data.A, data.b
    g1, g2 = params.gamma1, params.gamma2
    nu = 1.0 / g1 + 1.0 / g2
    n, p = Q.shape[0], A.shape[0] if A.size else 0

    h = A @ w_guess - b if p else np.zeros(0)
    in_a = h >= -(g1 * g2 / (g1 + g2)) * z
    lo_act = np.isclose(w_guess, spec.Y.lower, atol=1e-9)
    hi_act = np.isclose(w_guess, spec.Y.upper, atol=1e-9)
    free = ~(lo_act | hi_act)

    M = Q.copy()
    rhs = -c.copy()
    if p and np.any(in_a):
        Aa = A[in_a]
        za = z[in_a]
        ba = b[in_a]
        M = M + nu * Aa.T @ Aa
        rhs = rhs - Aa.T @ (za - nu * ba)

    w = np.where(lo_act, spec.Y.lower, np.where(hi_act, spec.Y.upper, 0.0))
    if np.any(free):
        f = free
        try:
            w_f = np.linalg.solve(M[np.ix_(f, f)], rhs[f] - M[np.ix_(f, ~f)] @ w[~f])
        except np.linalg.LinAlgError:
            return None
        w[f] = w_f
    if not spec.Y.contains(w, atol=1e-9):
        return None

    h_new = A @ w - b if p else np.zeros(0)
    in_a_new = h_new >= -(g1 * g2 / (g1 + g2)) * z
    if p and np.any(in_a_new != in_a):
        return None
    lam = _best_response_lambda(h_new, z, g1, g2)

    # Box-active coordinates must have the gradient pointing outward.
    t = np.maximum(g1 * lam + h_new, 0.0)
    _, gy = spec.grad_G(x, w)
    _, jy = spec.grad_H(x, w)
    gw = gy + (t @ jy) / g1
    if np.any(gw[lo_act & ~np.isclose(spec.Y.lower, spec.Y.upper)] < -1e-9):
        return None
    if np.any(gw[hi_act & ~np.isclose(spec.Y.lower, spec.Y.upper)] > 1e-9):
        return None
    return project_box(w, spec.Y), lam


def solve_saddle(
    spec: ProblemSpec, x: Vector, z: Vector, params: ALParams, tol: float = 1e-9
) -> ReferenceSolution:
    """Reference saddle (w*, lam*) and envelope value E(x, z).

    Reduces the max over lambda to its closed form and minimizes the
    resulting convex envelope over the box; needs gamma2 > 0.
    """
    if params.gamma2 <= 0:
        raise ConfigError("solve_saddle requires gamma2 > 0 (strong concavity)")
    if tol <= 0:
        raise ConfigError("tol must be > 0")
    x = as_vector(x, spec.m)
    z = as_vector(z, spec.p)

    def objective(wv: np.ndarray):
        val, grad, _ = _phi_and_grad(spec, x, z, params, wv)
        return val, grad

    starts = [spec.Y.center]
    if spec.y_star is not None:
        starts.append(project_box(spec.y_star(x), spec.Y))
    best_w, best_val = None, np.inf
    bounds = list(zip(spec.Y.lower, spec.Y.upper))
    for w0 in starts:
        res = optimize.minimize(
            objective,
            w0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": 2000, "ftol": 1e-18, "gtol": 1e-14},
        )
        if res.fun < best_val:
            best_val, best_w = res.fun, res.x
    w = project_box(best_w, spec.Y)
    method = "nested_saddle"

    if spec.lower_quadratic is not None:
        exact = _saddle_piece_solve(spec, x, z, params, w)
        if exact is not None:
            w, lam = exact
            method = "active_set_kkt"
        else:
            lam = _best_response_lambda(spec.H_values(x, w), z, params.gamma1, params.gamma2)
    else:
        lam = _best_response_lambda(spec.H_values(x, w), z, params.gamma1, params.gamma2)

    residual = _saddle_residual(spec, x, z, params, w, lam)
    if residual > tol:
        raise ConvergenceError("saddle reference solve missed its target", residual=residual)
    value = ell_value(spec, x, z, w, lam, params)
    return ReferenceSolution(
        value=float(value),
        argmin_or_saddle=w,
        tolerance=max(residual, 1e-14),
        method_tag=method,
        multipliers=lam,
    )


def envelope_value(spec: ProblemSpec, x: Vector, z: Vector, params: ALParams, tol: float = 1e-9) -> float:
    return solve_saddle(spec, x, z, params, tol).value


def exact_ghat_grad(
    spec: ProblemSpec, u: JointPoint, params: ALParams, tol: float = 1e-9
) -> PsiGrad:
    """Exact gradient of the surrogate gap, assembled from the reference saddle."""
    sad = solve_saddle(spec, u.x, u.z, params, tol)
    w_star, lam_star = sad.argmin_or_saddle, sad.multipliers
    gx_y, gy_y = spec.grad_G(u.x, u.y)
    gx_w, _ = spec.grad_G(u.x, w_star)
    h_w = spec.H_values(u.x, w_star)
    t = np.maximum(params.gamma1 * lam_star + h_w, 0.0)
    jx_w, _ = spec.grad_H(u.x, w_star)
    gx = gx_y - (gx_w + (t @ jx_w) / params.gamma1)
    gz = params.gamma2 * (u.z - lam_star)
    return PsiGrad(gx, gy_y, gz)


def hyperobjective_grid(
    spec: ProblemSpec, grid_points: int = 100_000, tol: float = 1e-5
) -> ReferenceSolution:
    """Grid-plus-refinement argmin of F(x, y*(x)) over a one-dimensional X."""
    if spec.m != 1:
        raise ConfigError("hyperobjective grid search supports m == 1 only")
    lo, hi = float(spec.X.lower[0]), float(spec.X.upper[0])

    if spec.y_star is not None:
        ystar = spec.y_star
    else:
        method = "kkt" if spec.lower_quadratic is not None else "auto"
        ystar = lambda xv: solve_lower(spec, xv, method=method).argmin_or_saddle  # noqa: E731

    def hyper(xv: float) -> float:
        x = np.array([xv])
        return spec.F_value(x, ystar(x))

    xs = np.linspace(lo, hi, grid_points)
    vals = np.array([hyper(xv) for xv in xs])
    i = int(np.argmin(vals))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, grid_points - 1)]
    xm, vm = _golden_minimize(hyper, a, b)
    if vals[i] <= vm:  # ties break to the grid point (lowest index first)
        xm, vm = xs[i], vals[i]
    return ReferenceSolution(
        value=float(vm),
        argmin_or_saddle=np.array([xm]),
        tolerance=tol,
        method_tag="grid",
        extras={"grid_points": grid_points},
    )


def make_saddle_gap_fn(spec: ProblemSpec, params: ALParams, tol: float = 1e-9):
    """Adapter giving outer runs a per-iteration inner-accuracy diagnostic."""

    def gap(x, z, w, lam) -> float:
        ref = solve_saddle(spec, x, z, params, tol)
        return abs(ell_value(spec, x, z, w, lam, params) - ref.value)

    return gap
