import numpy as np
import pytest

import blevel as bl
from blevel.errors import ConfigError, ConvergenceError
from conftest import central_diff, rel_err


def test_toy_lower_solution(toy_noiseless):
    ref = bl.solve_lower(toy_noiseless, np.array([1.0]))
    assert ref.argmin_or_saddle[0] == pytest.approx(1.0, abs=1e-7)
    assert ref.value == pytest.approx(1.0, abs=1e-7)
    assert ref.method_tag == "grid"


def test_toy_lower_solution_various_x(toy_noiseless):
    for xv in (0.2, 0.9862248274990302, 2.5):
        ref = bl.solve_lower(toy_noiseless, np.array([xv]))
        assert ref.argmin_or_saddle[0] == pytest.approx(xv, abs=1e-6)
        assert ref.value == pytest.approx(xv**2, abs=1e-6)


def test_quad_unconstrained_when_p_zero():
    spec = bl.make_quad(m=2, n=2, p=0, seed=3, sigma=0.0)
    d = spec.extra["instance"]
    for t in (-0.5, 0.0, 0.7):
        x = np.full(2, t)
        ref = bl.solve_lower(spec, x)
        y_u = -np.linalg.solve(d.Q, d.P @ x + d.c_g)
        assert np.allclose(ref.argmin_or_saddle, y_u, atol=1e-9)
        assert np.allclose(ref.multipliers, 0.0)


def test_quad_lower_matches_dense_grid(quad_noiseless):
    # Independent cross-check: two-stage dense grid over the (feasible) box.
    spec = quad_noiseless
    x = spec.X.center
    ref = bl.solve_lower(spec, x)
    assert ref.multipliers is not None and np.any(ref.multipliers > 1e-8)

    def grid_min(lo, hi, n):
        g0 = np.linspace(lo[0], hi[0], n)
        g1 = np.linspace(lo[1], hi[1], n)
        yy0, yy1 = np.meshgrid(g0, g1, indexing="ij")
        pts = np.stack([yy0.ravel(), yy1.ravel()], axis=1)
        d = spec.extra["instance"]
        vals = 0.5 * np.einsum("ij,jk,ik->i", pts, d.Q, pts) + pts @ (d.P @ x + d.c_g)
        h = pts @ d.A_y.T + (d.A_x @ x - d.b)
        vals = np.where(np.all(h <= 1e-9, axis=1), vals, np.inf)
        i = int(np.argmin(vals))
        return pts[i], vals[i]

    best, _ = grid_min(spec.Y.lower, spec.Y.upper, 1000)
    cell = (spec.Y.upper - spec.Y.lower) / 999
    best2, val2 = grid_min(best - 2 * cell, best + 2 * cell, 1000)
    assert abs(val2 - ref.value) <= 1e-6 * max(1.0, abs(ref.value))


def test_solve_lower_validation(toy_noiseless):
    with pytest.raises(ConfigError):
        bl.solve_lower(toy_noiseless, np.array([1.0]), tol=0.0)


def test_saddle_requires_positive_gamma2(toy_noiseless):
    with pytest.raises(ConfigError):
        bl.solve_saddle(toy_noiseless, np.array([1.0]), np.array([0.0]), bl.ALParams(1.0, 0.0))


def test_saddle_closed_form_toy(toy_noiseless):
    # At x=1, z=0, g1=1, g2=0.5 the active piece gives w*=1.4, lam*=0.8, E=0.6.
    ref = bl.solve_saddle(toy_noiseless, np.array([1.0]), np.array([0.0]), bl.ALParams(1.0, 0.5))
    assert ref.argmin_or_saddle[0] == pytest.approx(1.4, abs=1e-12)
    assert ref.multipliers[0] == pytest.approx(0.8, abs=1e-12)
    assert ref.value == pytest.approx(0.6, abs=1e-12)


def test_saddle_certificate_residual(quad_noiseless, al_params):
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = quad_noiseless.X.sample(rng)
        z = rng.uniform(0, 2, 2)
        ref = bl.solve_saddle(quad_noiseless, x, z, al_params, tol=1e-9)
        assert ref.tolerance <= 1e-9


def test_saddle_regularizer_domination(toy_noiseless, quad_noiseless):
    # gamma2 large: ||lam* - z|| <= sqrt(p) M_H0 / gamma2.
    for spec in (toy_noiseless, quad_noiseless):
        z = np.full(spec.p, 0.7)
        x = spec.X.center
        for g2 in (10.0, 100.0):
            ref = bl.solve_saddle(spec, x, z, bl.ALParams(1.0, g2))
            bound = np.sqrt(spec.p) * spec.M_H0 / g2
            assert np.linalg.norm(ref.multipliers - z) <= bound + 1e-9


def test_envelope_dominance_small_grid(toy_noiseless, quad_noiseless, al_params):
    for spec in (toy_noiseless, quad_noiseless):
        for t in np.linspace(0.1, 0.9, 5):
            x = spec.X.lower + t * (spec.X.upper - spec.X.lower)
            v = bl.solve_lower(spec, x).value
            for zval in np.linspace(0.0, 2.0, 5):
                e = bl.envelope_value(spec, x, np.full(spec.p, zval), al_params)
                assert e <= v + 1e-8


def test_exact_ghat_grad_matches_finite_differences(toy_noiseless, quad_noiseless, al_params):
    rng = np.random.default_rng(5)
    for spec in (toy_noiseless, quad_noiseless):
        for _ in range(3):
            u = bl.JointPoint(
                spec.X.sample(rng), spec.Y.sample(rng), rng.uniform(0.1, 1.5, spec.p)
            )
            g = bl.exact_ghat_grad(spec, u, al_params)

            def gap(xv, yv, zv):
                return spec.G_value(xv, yv) - bl.envelope_value(spec, xv, zv, al_params, 1e-11)

            fx = central_diff(lambda v: gap(v, u.y, u.z), u.x)
            fy = central_diff(lambda v: gap(u.x, v, u.z), u.y)
            fz = central_diff(lambda v: gap(u.x, u.y, v), u.z)
            assert rel_err(g.concat(), np.concatenate([fx, fy, fz])) <= 1e-5


def test_exact_ghat_grad_gy_is_lower_gradient(toy_noiseless, al_params):
    u = bl.JointPoint(np.array([1.2]), np.array([0.4]), np.array([0.6]))
    g = bl.exact_ghat_grad(toy_noiseless, u, al_params)
    assert np.array_equal(g.gy, toy_noiseless.grad_G(u.x, u.y)[1])


def test_exact_ghat_grad_gz_zero_at_matching_multiplier(toy_noiseless, al_params):
    x = np.array([1.0])
    ref = bl.solve_saddle(toy_noiseless, x, np.array([0.5]), al_params)
    # Setting z = lam*(x, z) is a fixed point of the best response only when
    # z equals the prox point; instead check gz = g2 (z - lam*) directly.
    u = bl.JointPoint(x, np.array([1.0]), np.array([0.5]))
    g = bl.exact_ghat_grad(toy_noiseless, u, al_params)
    expected = al_params.gamma2 * (u.z - ref.multipliers)
    assert np.allclose(g.gz, expected, atol=1e-10)


def test_hyperobjective_grid_toy(toy_noiseless):
    ref = bl.hyperobjective_grid(toy_noiseless, grid_points=100_000)
    assert ref.argmin_or_saddle[0] == pytest.approx(0.98622, abs=2e-4)
    assert ref.value == pytest.approx(1.7218788, abs=1e-6)


def test_hyperobjective_grid_constant_objective(toy_noiseless):
    from dataclasses import replace

    flat = replace(toy_noiseless, F_value=lambda x, y: 7.0)
    ref = bl.hyperobjective_grid(flat, grid_points=101)
    assert ref.argmin_or_saddle[0] == pytest.approx(0.0)  # tie-break: first point
    assert ref.value == 7.0


def test_hyperobjective_grid_quad_algebraic():
    # m = n = 1, p = 0: y*(x) = -(P x + c)/Q and F(x, y*(x)) is an explicit
    # quadratic whose box-clamped argmin is algebraic.
    spec = bl.make_quad(m=1, n=1, p=0, seed=11, sigma=0.0)
    d = spec.extra["instance"]
    grid = bl.hyperobjective_grid(spec, grid_points=4001)
    xs = np.linspace(spec.X.lower[0], spec.X.upper[0], 200001)
    ys = -(d.P[0, 0] * xs + d.c_g[0]) / d.Q[0, 0]
    vals = (
        0.5 * (xs - d.x_t[0]) ** 2
        + 0.5 * (ys - d.y_t[0]) ** 2
        + 0.1 * d.C[0, 0] * xs * ys
    )
    x_dense = xs[np.argmin(vals)]
    cell = (spec.X.upper[0] - spec.X.lower[0]) / 4000
    assert abs(grid.argmin_or_saddle[0] - x_dense) <= cell


def test_quadratic_growth(quad_noiseless):
    # G(x, y) - v(x) >= (mu/2)||y - y*||^2 - sqrt(2) * Bhat * eps for near-feasible y.
    spec = quad_noiseless
    rng = np.random.default_rng(8)
    xs = [spec.X.sample(rng) for _ in range(5)]
    lam_norms = []
    refs = []
    for x in xs:
        ref = bl.solve_lower(spec, x)
        refs.append(ref)
        lam_norms.append(np.linalg.norm(ref.multipliers))
    b_hat = np.sqrt(spec.p) * max(lam_norms)
    for x, ref in zip(xs, refs):
        for _ in range(40):
            y = spec.Y.sample(rng)
            cv = bl.constraint_violation(spec, x, y)
            eps = np.sqrt(cv)
            lhs = spec.G_value(x, y) - ref.value
            rhs = 0.5 * spec.mu_G * np.sum((y - ref.argmin_or_saddle) ** 2) - np.sqrt(2) * b_hat * eps
            assert lhs >= rhs - 1e-9


def test_saddle_unreachable_tolerance_raises(toy_noiseless, al_params):
    from dataclasses import replace

    # Strip the quadratic structure so only the numeric path is available and
    # demand an impossible residual.
    plain = replace(toy_noiseless, lower_quadratic=None)
    with pytest.raises(ConvergenceError):
        bl.solve_saddle(plain, np.array([1.0]), np.array([0.3]), al_params, tol=1e-16)
