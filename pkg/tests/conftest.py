import numpy as np
import pytest

import blevel as bl


@pytest.fixture(scope="session")
def toy():
    return bl.make_toy(sigma=0.1)


@pytest.fixture(scope="session")
def toy_noiseless():
    return bl.make_toy(sigma=0.0)


@pytest.fixture(scope="session")
def quad():
    return bl.make_quad(m=2, n=2, p=2, seed=1, sigma=0.1)


@pytest.fixture(scope="session")
def quad_noiseless():
    return bl.make_quad(m=2, n=2, p=2, seed=1, sigma=0.0)


@pytest.fixture(scope="session")
def al_params():
    return bl.ALParams(1.0, 0.5)


def central_diff(f, v, h=1e-5):
    """Central finite differences of a scalar function of one vector block."""
    v = np.asarray(v, dtype=float)
    g = np.zeros_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        g[i] = (f(v + e) - f(v - e)) / (2.0 * h)
    return g


def rel_err(approx, exact):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = max(1.0, float(np.max(np.abs(exact))))
    return float(np.max(np.abs(approx - exact))) / scale


def sample_kink_free(spec, params, rng, min_gap=1e-3, max_tries=500):
    """Random (x, y, z, w, lam) with the AL hinge arguments bounded away from zero."""
    for _ in range(max_tries):
        x = spec.X.sample(rng)
        y = spec.Y.sample(rng)
        w = spec.Y.sample(rng)
        z = rng.uniform(0.0, 2.0, spec.p)
        lam = rng.uniform(0.0, 2.0, spec.p)
        h_y = spec.H_values(x, y)
        h_w = spec.H_values(x, w)
        if spec.p and (
            np.any(np.abs(params.gamma1 * z + h_y) < min_gap)
            or np.any(np.abs(params.gamma1 * lam + h_w) < min_gap)
        ):
            continue
        return x, y, z, w, lam
    raise RuntimeError("could not sample a kink-free point")
