import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import blevel as bl
from blevel.auglag import al_penalty_from_h
from blevel.errors import ConfigError
from conftest import central_diff, rel_err, sample_kink_free


def test_penalty_inactive_branch():
    assert al_penalty_from_h(np.array([-1.0]), np.array([0.0]), 1.0) == 0.0


def test_penalty_plug_in():
    assert al_penalty_from_h(np.array([1.0]), np.array([1.0]), 2.0) == pytest.approx(1.25)


def test_penalty_clipped_branch():
    assert al_penalty_from_h(np.array([-5.0]), np.array([1.0]), 1.0) == pytest.approx(-0.5)


def test_penalty_requires_positive_gamma1():
    with pytest.raises(ConfigError):
        al_penalty_from_h(np.array([1.0]), np.array([1.0]), 0.0)


def test_al_params_validation():
    with pytest.raises(ConfigError):
        bl.ALParams(0.0, 0.5)
    with pytest.raises(ConfigError):
        bl.ALParams(1.0, -0.1)
    assert bl.ALParams(1.0, 0.0).gamma2 == 0.0


def test_al_value_toy_plug_in(toy):
    x, y, z = np.array([1.0]), np.array([1.0]), np.array([0.0])
    assert bl.al_value(toy, x, y, z, 1.0) == pytest.approx(1.0)


def test_al_value_zero_shift_collapse(toy):
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, y = toy.X.sample(rng), toy.Y.sample(rng)
        z = np.zeros(1)
        h = toy.H_values(x, y)
        expected = toy.G_value(x, y) + 0.5 * np.sum(np.maximum(h, 0.0) ** 2)
        assert bl.al_value(toy, x, y, z, 1.0) == pytest.approx(expected)


def test_al_value_stoch_unbiased(toy):
    x, y, z = np.array([1.2]), np.array([0.7]), np.array([0.3])
    gen = bl.RngStream(3).child("alv").generator()
    draws = np.array([bl.al_value_stoch(toy, x, y, z, 1.0, gen) for _ in range(20_000)])
    exact = bl.al_value(toy, x, y, z, 1.0)
    assert abs(draws.mean() - exact) <= 4.0 * 0.1 / np.sqrt(draws.size)


def test_sandwich_property(toy, quad):
    # Lagrangian <= augmented Lagrangian <= G on feasible points with z >= 0.
    rng = np.random.default_rng(2)
    for spec in (toy, quad):
        checked = 0
        while checked < 300:
            x, y = spec.X.sample(rng), spec.Y.sample(rng)
            if np.any(spec.H_values(x, y) > 0.0):
                continue
            z = rng.uniform(0.0, 3.0, spec.p)
            lag = bl.lagrangian_value(spec, x, y, z)
            alv = bl.al_value(spec, x, y, z, 1.5)
            g = spec.G_value(x, y)
            assert lag <= alv + 1e-12
            assert alv <= g + 1e-12
            checked += 1


def test_lagrangian_values(toy):
    x, y = np.array([1.0]), np.array([0.5])
    assert bl.lagrangian_value(toy, x, y, np.zeros(1)) == pytest.approx(
        toy.G_value(x, y)
    )


@given(
    st.lists(st.integers(-320, 320), min_size=3, max_size=3),
    st.lists(st.integers(0, 320), min_size=3, max_size=3),
    st.sampled_from([0.5, 1.0, 2.0, 4.0]),
)
@settings(max_examples=100, deadline=None)
def test_gz_identity_exact_on_dyadics(h_units, z_units, gamma1):
    # On dyadic rationals every intermediate is exactly representable, so the
    # identity [g1 z + H]_+ - g1 z == max(-g1 z, H) holds bitwise.
    h = np.array(h_units) / 64.0
    z = np.array(z_units) / 64.0
    lhs = np.maximum(gamma1 * z + h, 0.0) - gamma1 * z
    rhs = np.maximum(-gamma1 * z, h)
    assert np.array_equal(lhs, rhs)


@given(
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3),
    st.lists(st.floats(0, 5, allow_nan=False), min_size=3, max_size=3),
    st.floats(0.1, 5, allow_nan=False),
)
@settings(max_examples=100, deadline=None)
def test_gz_identity_general_floats(h_vals, z_vals, gamma1):
    # For arbitrary floats the two forms agree up to one rounding of g1*z + H.
    h, z = np.array(h_vals), np.array(z_vals)
    lhs = np.maximum(gamma1 * z + h, 0.0) - gamma1 * z
    rhs = np.maximum(-gamma1 * z, h)
    tol = 4 * np.finfo(float).eps * np.maximum(1.0, gamma1 * z + np.abs(h))
    assert np.all(np.abs(lhs - rhs) <= tol)


def test_al_grad_gz_example(toy):
    # gamma1=2, z=1, H=-5 => gz = max(-2, -5) = -2.  Build H=-5 via y - x = -5?
    # The toy box caps |H| at 3, so check the formula on raw arrays instead.
    z, h, g1 = np.array([1.0]), np.array([-5.0]), 2.0
    gz = np.maximum(g1 * z + h, 0.0) - g1 * z
    assert gz[0] == pytest.approx(-2.0)


def test_al_grad_inactive_penalty(toy):
    # z = 0 and H < 0: the hinge is inactive, so the x/y parts reduce to the
    # plain lower gradient and gz = max(-g1*0, H) = 0 (the penalty is locally
    # -g1 z^2/2 + const, whose z-derivative vanishes at z = 0).
    x, y, z = np.array([2.0]), np.array([1.0]), np.zeros(1)  # H = -1 < 0
    gx, gy, gz = bl.al_grad(toy, x, y, z, 1.0)
    egx, egy = toy.grad_G(x, y)
    assert np.array_equal(gx, egx)
    assert np.array_equal(gy, egy)
    assert np.array_equal(gz, np.zeros(1))


@pytest.mark.parametrize("which", ["toy", "quad"])
def test_al_grad_matches_finite_differences(which, toy_noiseless, quad_noiseless, al_params):
    spec = toy_noiseless if which == "toy" else quad_noiseless
    rng = np.random.default_rng(10)
    g1 = al_params.gamma1
    for _ in range(20):
        x, y, z, _, _ = sample_kink_free(spec, al_params, rng)
        gx, gy, gz = bl.al_grad(spec, x, y, z, g1)
        fgx = central_diff(lambda v: bl.al_value(spec, v, y, z, g1), x)
        fgy = central_diff(lambda v: bl.al_value(spec, x, v, z, g1), y)
        fgz = central_diff(lambda v: bl.al_value(spec, x, y, v, g1), z)
        assert rel_err(gx, fgx) <= 1e-6
        assert rel_err(gy, fgy) <= 1e-6
        assert rel_err(gz, fgz) <= 1e-6


@pytest.mark.parametrize("which", ["toy", "quad"])
def test_ell_grads_match_finite_differences(which, toy_noiseless, quad_noiseless, al_params):
    spec = toy_noiseless if which == "toy" else quad_noiseless
    rng = np.random.default_rng(11)
    for _ in range(20):
        x, _, z, w, lam = sample_kink_free(spec, al_params, rng)
        gw = bl.ell_grad_w(spec, x, z, w, lam, al_params)
        gl = bl.ell_grad_lambda(spec, x, z, w, lam, al_params)
        fgw = central_diff(lambda v: bl.ell_value(spec, x, z, v, lam, al_params), w)
        fgl = central_diff(lambda v: bl.ell_value(spec, x, z, w, v, al_params), lam)
        assert rel_err(gw, fgw) <= 1e-6
        assert rel_err(gl, fgl) <= 1e-6


def test_ell_gamma2_zero_collapse(toy, al_params):
    x, z, w, lam = np.array([1.0]), np.array([0.4]), np.array([2.0]), np.array([0.3])
    p0 = bl.ALParams(al_params.gamma1, 0.0)
    assert bl.ell_value(toy, x, z, w, lam, p0) == pytest.approx(
        bl.al_value(toy, x, w, lam, al_params.gamma1)
    )


def test_ell_regularizer_vanishes_at_z(toy, al_params):
    x, w = np.array([1.0]), np.array([2.0])
    lam = np.array([0.7])
    same = bl.ell_value(toy, x, lam, w, lam, al_params)
    assert same == pytest.approx(bl.al_value(toy, x, w, lam, al_params.gamma1))


def test_ell_strong_convexity_concavity(quad_noiseless, al_params):
    # <grad_w(w1) - grad_w(w2), w1 - w2> >= mu_G ||w1 - w2||^2 and the mirrored
    # inequality in lambda with modulus gamma2.
    spec = quad_noiseless
    rng = np.random.default_rng(12)
    mu = spec.mu_G
    for _ in range(50):
        x = spec.X.sample(rng)
        z = rng.uniform(0, 2, spec.p)
        w1, w2 = spec.Y.sample(rng), spec.Y.sample(rng)
        lam = rng.uniform(0, 2, spec.p)
        g1 = bl.ell_grad_w(spec, x, z, w1, lam, al_params)
        g2 = bl.ell_grad_w(spec, x, z, w2, lam, al_params)
        lhs = float((g1 - g2) @ (w1 - w2))
        assert lhs >= mu * np.sum((w1 - w2) ** 2) - 1e-9

        w = spec.Y.sample(rng)
        l1, l2 = rng.uniform(0, 2, spec.p), rng.uniform(0, 2, spec.p)
        gl1 = bl.ell_grad_lambda(spec, x, z, w, l1, al_params)
        gl2 = bl.ell_grad_lambda(spec, x, z, w, l2, al_params)
        lhs = float((gl1 - gl2) @ (l1 - l2))
        assert lhs <= -al_params.gamma2 * np.sum((l1 - l2) ** 2) + 1e-9


def test_stochastic_al_grad_unbiased(toy, al_params):
    x, y, z = np.array([1.3]), np.array([0.6]), np.array([0.5])
    exact = np.concatenate(bl.al_grad(toy, x, y, z, al_params.gamma1))
    gen = bl.RngStream(9).child("mc").generator()
    n = 40_000
    acc = np.zeros(3)
    for _ in range(n):
        gx, gy, gz = bl.al_grad_stoch(toy, x, y, z, al_params.gamma1, gen)
        acc += np.concatenate([gx, gy, gz])
    bound = 4.0 * 0.1 / np.sqrt(n)
    assert np.all(np.abs(acc / n - exact) <= bound)
