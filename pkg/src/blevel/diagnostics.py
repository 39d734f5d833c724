"""Convergence measures, rate fitting, and paired statistical comparisons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import ProblemSpec, Vector
from .errors import ConfigError
from .refsolve import ReferenceSolution
from .salvf import RunTrace


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[float, float], ...]


def fit_rate(xs, ys) -> RateFit:
    """Least-squares slope of log(ys) against log(xs)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size != ys.size or xs.size < 3:
        raise ConfigError("fit_rate needs >= 3 paired points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ConfigError("fit_rate needs strictly positive data")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    if not np.isfinite(slope):
        raise ConfigError("rate fit produced a non-finite slope")
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        points=tuple(zip(lx.tolist(), ly.tolist())),
    )


def stationarity_proxy(trace: RunTrace) -> float:
    """Step-size-weighted mean of squared update norms, per the run's algorithm.

    Plain outer runs average (1/alpha_k) ||u^{k+1} - u^k||^2 over K; the
    variance-reduced runs normalize by the sum of the step sizes instead.
    """
    if trace.K < 1:
        raise ConfigError("stationarity proxy needs at least one recorded step")
    a = trace.alphas()
    s2 = trace.step_norms2()
    weighted = np.sum(s2 / a)
    if trace.algorithm == "salvf_vr":
        return float(weighted / np.sum(a))
    return float(weighted / trace.K)


def lower_gap(spec: ProblemSpec, x: Vector, y: Vector, ref: ReferenceSolution | float) -> float:
    """G(x, y) - v(x) against a reference lower-level value."""
    v = ref.value if isinstance(ref, ReferenceSolution) else float(ref)
    return spec.G_value(np.atleast_1d(x), np.atleast_1d(y)) - v


def sign_test_pvalue(diffs, alternative: str = "greater") -> float:
    """One-sided sign test on paired differences (ties dropped).

    'greater' tests whether positive differences dominate.
    """
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0]
    if d.size == 0:
        return 1.0
    wins = int(np.sum(d > 0))
    return float(stats.binomtest(wins, d.size, 0.5, alternative=alternative).pvalue)


def iqr(values) -> float:
    v = np.asarray(values, dtype=float)
    q1, q3 = np.percentile(v, [25, 75])
    return float(q3 - q1)


def paired_spread_report(errors_a, errors_b) -> dict:
    """Spread and paired-dominance comparison of two matched-seed error samples.

    ``errors_*`` are per-seed absolute deviations from a reference point; the
    sign test asks whether run B beats run A seed by seed.
    """
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.shape != b.shape:
        raise ConfigError("paired comparison needs equal-length samples")
    return {
        "n": int(a.size),
        "median_a": float(np.median(a)),
        "median_b": float(np.median(b)),
        "iqr_a": iqr(a),
        "iqr_b": iqr(b),
        "iqr_ratio_b_over_a": float(iqr(b) / iqr(a)) if iqr(a) > 0 else float("inf"),
        "sign_test_p_b_beats_a": sign_test_pvalue(a - b, alternative="greater"),
    }
