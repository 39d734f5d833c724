"""Built-in benchmark problems with known structure.

``make_toy`` is the one-dimensional oscillatory instance with lower level
(y - 2x)^2 constrained by y <= x on [0, 3]^2; its lower-level solution is
y*(x) = x with multiplier 2x, sitting on the constraint boundary for every
x > 0. ``make_quad`` generates random quadratic bilevel instances with affine
constraints, a certified Slater margin, and exactly computable ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import Box, ProblemSpec, QuadraticLowerData, Vector, interval
from .errors import ConfigError
from .rng import GradPair, gaussian_grad_oracle


def _toy_f_parts(x: Vector, y: Vector) -> tuple[float, float, float]:
    denom = 2.0 + np.cos(6.0 * x[0])
    expy = np.exp(-y[0] + 2.0)
    lin = 4.0 * x[0] - 2.0
    return denom, expy, lin


def make_toy(sigma: float = 0.1) -> ProblemSpec:
    """One-dimensional toy instance; Gaussian gradient noise of scale sigma."""
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")

    def F_value(x, y):
        denom, expy, lin = _toy_f_parts(x, y)
        return float(expy / denom + 0.5 * np.log(lin**2 + 1.0))

    def G_value(x, y):
        return float((y[0] - 2.0 * x[0]) ** 2)

    def H_values(x, y):
        return np.array([y[0] - x[0]])

    def grad_F(x, y):
        denom, expy, lin = _toy_f_parts(x, y)
        gx = 6.0 * expy * np.sin(6.0 * x[0]) / denom**2 + 4.0 * lin / (lin**2 + 1.0)
        gy = -expy / denom
        return np.array([gx]), np.array([gy])

    def grad_G(x, y):
        d = y[0] - 2.0 * x[0]
        return np.array([-4.0 * d]), np.array([2.0 * d])

    def grad_H(x, y):
        return np.array([[-1.0]]), np.array([[1.0]])

    def grad_f(x, y, gen):
        return gaussian_grad_oracle(GradPair(*grad_F(x, y)), sigma, gen)

    def grad_g(x, y, gen):
        return gaussian_grad_oracle(GradPair(*grad_G(x, y)), sigma, gen)

    def g_value_noisy(x, y, gen):
        return G_value(x, y) + sigma * gen.standard_normal()

    def lower_quadratic(x):
        return QuadraticLowerData(
            Q=np.array([[2.0]]),
            c=np.array([-4.0 * x[0]]),
            c0=4.0 * x[0] ** 2,
            A=np.array([[1.0]]),
            b=np.array([x[0]]),
        )

    return ProblemSpec(
        m=1,
        n=1,
        p=1,
        F_value=F_value,
        G_value=G_value,
        H_values=H_values,
        grad_F=grad_F,
        grad_G=grad_G,
        grad_H=grad_H,
        grad_f=grad_f,
        grad_g=grad_g,
        X=interval(0.0, 3.0),
        Y=interval(0.0, 3.0),
        name="toy",
        mu_G=2.0,
        M_H0=3.0,
        M_G1=float(np.linalg.norm([12.0, 6.0])),
        sigma_f=sigma,
        sigma_g=sigma,
        y_star=lambda x: np.array([x[0]]),
        lower_quadratic=lower_quadratic,
        g_value_noisy=g_value_noisy,
        constant_grad_H=True,
        extra={"sigma": sigma},
    )


@dataclass(frozen=True)
class QuadInstanceData:
    """Matrices defining one generated quadratic bilevel instance."""

    Q: np.ndarray        # lower-level quadratic term, SPD
    P: np.ndarray        # lower-level x-coupling, shape (n, m)
    c_g: Vector          # lower-level linear term
    A_x: np.ndarray      # constraint x-block, shape (p, m)
    A_y: np.ndarray      # constraint y-block, shape (p, n)
    b: Vector
    C: np.ndarray        # upper-level cross term, shape (m, n)
    x_t: Vector
    y_t: Vector
    x_box: tuple[float, float]
    y_box: tuple[float, float]
    sigma: float
    seed: int
    slater_y: Vector
    slater_margin: float


def _quad_spec_from_data(d: QuadInstanceData) -> ProblemSpec:
    m, n, p = d.x_t.shape[0], d.y_t.shape[0], d.b.shape[0]

    def F_value(x, y):
        return float(
            0.5 * np.sum((x - d.x_t) ** 2)
            + 0.5 * np.sum((y - d.y_t) ** 2)
            + 0.1 * x @ d.C @ y
        )

    def G_value(x, y):
        return float(0.5 * y @ d.Q @ y + (d.P @ x + d.c_g) @ y)

    def H_values(x, y):
        return d.A_x @ x + d.A_y @ y - d.b

    def grad_F(x, y):
        return (x - d.x_t) + 0.1 * d.C @ y, (y - d.y_t) + 0.1 * d.C.T @ x

    def grad_G(x, y):
        return d.P.T @ y, d.Q @ y + d.P @ x + d.c_g

    def grad_H(x, y):
        return d.A_x, d.A_y

    def grad_f(x, y, gen):
        return gaussian_grad_oracle(GradPair(*grad_F(x, y)), d.sigma, gen)

    def grad_g(x, y, gen):
        return gaussian_grad_oracle(GradPair(*grad_G(x, y)), d.sigma, gen)

    def g_value_noisy(x, y, gen):
        return G_value(x, y) + d.sigma * gen.standard_normal()

    def lower_quadratic(x):
        return QuadraticLowerData(
            Q=d.Q, c=d.P @ x + d.c_g, c0=0.0, A=d.A_y, b=d.b - d.A_x @ x
        )

    mu = float(np.min(np.linalg.eigvalsh(d.Q)))
    x_box = interval(*d.x_box, dim=m)
    y_box = interval(*d.y_box, dim=n)
    # Exact sup-norms of the affine constraints over the boxes.
    h_center = d.A_x @ x_box.center + d.A_y @ y_box.center - d.b
    h_span = np.abs(d.A_x) @ (0.5 * (x_box.upper - x_box.lower)) + np.abs(d.A_y) @ (
        0.5 * (y_box.upper - y_box.lower)
    )
    m_h0 = float(np.max(np.abs(h_center) + h_span)) if p else 0.0

    return ProblemSpec(
        m=m,
        n=n,
        p=p,
        F_value=F_value,
        G_value=G_value,
        H_values=H_values,
        grad_F=grad_F,
        grad_G=grad_G,
        grad_H=grad_H,
        grad_f=grad_f,
        grad_g=grad_g,
        X=x_box,
        Y=y_box,
        name=f"quad-seed{d.seed}",
        mu_G=mu,
        M_H0=m_h0,
        M_G1=None,
        sigma_f=d.sigma,
        sigma_g=d.sigma,
        lower_quadratic=lower_quadratic,
        g_value_noisy=g_value_noisy,
        constant_grad_H=True,
        extra={"instance": d},
    )


def make_quad(
    m: int = 2,
    n: int = 2,
    p: int = 2,
    seed: int = 0,
    sigma: float = 0.1,
    require_active: bool = True,
) -> ProblemSpec:
    """Random quadratic bilevel instance with a certified Slater point.

    The constraint offsets are chosen so a designated anchor satisfies
    H < -0.15 for every x in X, while (by rejection) at least one constraint
    is active at the lower solution for the central x. Boxes are wide enough
    that lower solutions stay interior, keeping the active-set ground truth
    exact.
    """
    if p > 8:
        raise ConfigError("quadratic instances are capped at p <= 8")
    if min(m, n) < 1 or p < 0:
        raise ConfigError("dimensions must satisfy m, n >= 1 and p >= 0")

    x_box, y_box = (-1.0, 1.0), (-6.0, 6.0)
    for attempt in range(64):
        gen = np.random.default_rng(np.random.SeedSequence([seed, attempt, 0xB11E7E1]))
        basis, _ = np.linalg.qr(gen.normal(size=(n, n)))
        eigs = gen.uniform(0.5, 2.0, size=n)
        Q = basis @ np.diag(eigs) @ basis.T
        Q = 0.5 * (Q + Q.T)
        P = 0.5 * gen.normal(size=(n, m))
        c_g = 0.8 * gen.normal(size=n)
        C = gen.normal(size=(m, n)) / np.sqrt(m * n)
        x_t = gen.uniform(-0.5, 0.5, size=m)
        y_t = gen.uniform(-0.5, 0.5, size=n)

        if p:
            A_x = gen.normal(size=(p, m)) / np.sqrt(m)
            A_y = gen.normal(size=(p, n)) / np.sqrt(n)
            worst = np.abs(A_x) @ np.ones(m)  # sup of A_x x over X = [-1, 1]^m
            x_c = np.zeros(m)
            y_u = -np.linalg.solve(Q, P @ x_c + c_g)
            a0 = A_y[0]
            if np.linalg.norm(a0) < 0.2:
                continue
            if require_active:
                # Tighten constraint 0 so the unconstrained minimizer violates it,
                # and put the Slater anchor on its strictly feasible side.
                tighten = gen.uniform(0.2, 0.6)
                kappa = tighten + worst[0] + 0.2
                anchor = y_u - kappa * a0 / float(a0 @ a0)
            else:
                tighten = None
                anchor = gen.uniform(-1.0, 1.0, size=n)
            if not np.all(np.abs(anchor) < y_box[1] - 0.5):
                continue
            margin = gen.uniform(0.15, 0.5, size=p)
            b = worst + A_y @ anchor + margin
            if require_active:
                b[0] = float(a0 @ y_u) - tighten
        else:
            A_x = np.zeros((0, m))
            A_y = np.zeros((0, n))
            anchor = np.zeros(n)
            margin = np.zeros(0)
            b = np.zeros(0)

        slater_margin = float(np.min(b - (np.abs(A_x) @ np.ones(m) + A_y @ anchor))) if p else np.inf
        data = QuadInstanceData(
            Q=Q, P=P, c_g=c_g, A_x=A_x, A_y=A_y, b=b, C=C, x_t=x_t, y_t=y_t,
            x_box=x_box, y_box=y_box, sigma=sigma, seed=seed,
            slater_y=anchor, slater_margin=slater_margin,
        )
        spec = _quad_spec_from_data(data)

        if p == 0:
            return spec
        if slater_margin < 0.1:
            continue
        # Certify: lower solve at the central x stays strictly inside the box
        # and (when requested) has at least one active constraint.
        from .refsolve import solve_lower

        try:
            ref = solve_lower(spec, spec.X.center)
        except Exception:
            continue
        y_sol = ref.argmin_or_saddle
        interior = np.all(np.abs(y_sol) < y_box[1] - 0.5)
        active = ref.multipliers is not None and np.any(ref.multipliers > 1e-8)
        if interior and (active or not require_active):
            return spec
    raise ConfigError(f"could not generate an acceptable quadratic instance for seed {seed}")


def quad_to_json(spec: ProblemSpec) -> str:
    """Serialize a generated quadratic instance (matrices, boxes, seed)."""
    d: QuadInstanceData = spec.extra["instance"]
    payload = {
        "kind": "quad",
        "seed": d.seed,
        "sigma": d.sigma,
        "Q": d.Q.tolist(),
        "P": d.P.tolist(),
        "c_g": d.c_g.tolist(),
        "A_x": d.A_x.tolist(),
        "A_y": d.A_y.tolist(),
        "b": d.b.tolist(),
        "C": d.C.tolist(),
        "x_t": d.x_t.tolist(),
        "y_t": d.y_t.tolist(),
        "x_box": list(d.x_box),
        "y_box": list(d.y_box),
        "slater_y": d.slater_y.tolist(),
        "slater_margin": d.slater_margin,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def quad_from_json(text: str) -> ProblemSpec:
    obj = json.loads(text)
    if obj.get("kind") != "quad":
        raise ConfigError("not a serialized quadratic instance")
    arr = lambda k: np.asarray(obj[k], dtype=float)  # noqa: E731
    data = QuadInstanceData(
        Q=arr("Q"), P=arr("P"), c_g=arr("c_g"), A_x=arr("A_x"), A_y=arr("A_y"),
        b=arr("b"), C=arr("C"), x_t=arr("x_t"), y_t=arr("y_t"),
        x_box=tuple(obj["x_box"]), y_box=tuple(obj["y_box"]),
        sigma=float(obj["sigma"]), seed=int(obj["seed"]),
        slater_y=arr("slater_y"), slater_margin=float(obj["slater_margin"]),
    )
    return _quad_spec_from_data(data)


def get_problem(name: str, **kwargs) -> ProblemSpec:
    """Problem factory used by the CLI: 'toy' or 'quad'."""
    if name == "toy":
        return make_toy(sigma=float(kwargs.get("sigma", 0.1)))
    if name == "quad":
        return make_quad(
            m=int(kwargs.get("m", 2)),
            n=int(kwargs.get("n", 2)),
            p=int(kwargs.get("p", 2)),
            seed=int(kwargs.get("seed", 0)),
            sigma=float(kwargs.get("sigma", 0.1)),
        )
    raise ConfigError(f"unknown problem '{name}' (expected 'toy' or 'quad')")
