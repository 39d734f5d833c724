"""Command-line harness: single runs, seed sweeps, algorithm comparisons, oracles.

Configs are flat JSON documents with dotted keys ("solver.K": 500); unknown
keys are rejected. Output files are written atomically; JSON documents embed
the fully resolved config and the library version. CSV floats carry 17
significant digits so re-reading reproduces them bit for bit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .auglag import ALParams
from .core import ProblemSpec, constraint_violation
from .diagnostics import iqr, paired_spread_report, stationarity_proxy
from .errors import ConfigError, ConvergenceError, InfeasibleError, NumericsError
from .penalty import PenaltyParams
from .problems import get_problem
from .refsolve import hyperobjective_grid, solve_lower, solve_saddle
from .salm import InnerConfig
from .salvf import OuterConfig, RunTrace, salvf_run
from .salvf_vr import VRConfig, salvf_vr_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# key -> (caster, default); None default means "no default, optional".
_SCHEMA: dict = {
    "problem.name": (str, "toy"),
    "problem.sigma": (float, 0.1),
    "problem.m": (int, 2),
    "problem.n": (int, 2),
    "problem.p": (int, 2),
    "problem.seed": (int, 0),
    "algorithm": (str, "salvf"),
    # Defaults reproduce the one-dimensional benchmark sweep: 2500 upper draws
    # per run (K*r), tuned penalty weights, and a refinement pass.
    "solver.K": (int, 2500),
    "solver.r": (int, 1),
    "solver.q": (int, 2),
    "solver.s": (int, 20),
    "solver.alpha": (float, 0.07),
    "solver.beta": (float, 100.0),
    "solver.c1": (float, 1.0),
    "solver.c2": (float, 8.0),
    "solver.gamma1": (float, 1.0),
    "solver.gamma2": (float, 0.5),
    "solver.eta": (float, 0.5),
    "solver.rho": (float, 2.0),
    "solver.B": (float, 10.0),
    "solver.refine": (bool, True),
    "solver.s_refine": (int, 10000),
    "solver.warm_start": (str, "previous"),
    "init.mode": (str, "center"),
    "seed": (int, 0),
    "seeds": (list, None),
    "report.lower_gap": (bool, False),
    "oracle.x_grid": (int, 100000),
    "oracle.saddle_grid": (int, 20),
    "oracle.z_max": (float, 3.0),
    "toy_pilot.median_abs_x_err_tol": (float, 0.15),
    "trace.verbosity": (int, 1),
}


def resolve_config(raw: dict) -> dict:
    """Apply defaults, cast values, and reject unknown keys."""
    unknown = sorted(set(raw) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    out = {}
    for key, (caster, default) in _SCHEMA.items():
        if key in raw:
            try:
                val = raw[key] if caster is list else caster(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from exc
        else:
            val = default
        out[key] = val
    if out["algorithm"] not in ("salvf", "salvf_vr"):
        raise ConfigError(f"algorithm must be 'salvf' or 'salvf_vr', got {out['algorithm']}")
    return out


def load_config(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return resolve_config(raw)


def build_problem(cfg: dict) -> ProblemSpec:
    name = cfg["problem.name"]
    if name == "toy":
        return get_problem("toy", sigma=cfg["problem.sigma"])
    return get_problem(
        "quad",
        m=cfg["problem.m"],
        n=cfg["problem.n"],
        p=cfg["problem.p"],
        seed=cfg["problem.seed"],
        sigma=cfg["problem.sigma"],
    )


def build_outer_config(cfg: dict) -> OuterConfig | VRConfig:
    inner = InnerConfig(
        s=cfg["solver.s"],
        eta=cfg["solver.eta"],
        rho=cfg["solver.rho"],
        warm_start=cfg["solver.warm_start"],
    )
    common = dict(
        K=cfg["solver.K"],
        alpha=cfg["solver.alpha"],
        s=cfg["solver.s"],
        r=cfg["solver.r"],
        q=cfg["solver.q"],
        pen=PenaltyParams(cfg["solver.c1"], cfg["solver.c2"]),
        al=ALParams(cfg["solver.gamma1"], cfg["solver.gamma2"]),
        inner=inner,
        B=cfg["solver.B"],
        feasibility_refine=cfg["solver.refine"],
        s_refine=cfg["solver.s_refine"],
        init_mode=cfg["init.mode"],
    )
    if cfg["algorithm"] == "salvf_vr":
        return VRConfig(beta=cfg["solver.beta"], **common)
    return OuterConfig(**common)


def execute_run(cfg: dict, seed: int) -> RunTrace:
    spec = build_problem(cfg)
    outer = build_outer_config(cfg)
    if cfg["algorithm"] == "salvf_vr":
        return salvf_vr_run(spec, outer, seed)
    return salvf_run(spec, outer, seed)


# ---------------------------------------------------------------------------
# output plumbing


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json(path: Path, payload: dict) -> None:
    atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def trace_csv_text(spec: ProblemSpec, trace: RunTrace) -> str:
    header = (
        ["k"]
        + [f"x{i}" for i in range(spec.m)]
        + [f"y{i}" for i in range(spec.n)]
        + [f"z{i}" for i in range(spec.p)]
        + ["step_norm2", "cviol", "psi_est", "upper_samples", "lower_samples"]
    )
    lines = [",".join(header)]
    for rec in trace.records:
        row = (
            [str(rec.k)]
            + [_fmt(v) for v in rec.u.x]
            + [_fmt(v) for v in rec.u.y]
            + [_fmt(v) for v in rec.u.z]
            + [_fmt(rec.step_norm2), _fmt(rec.cviol), _fmt(rec.psi_est)]
            + [str(rec.upper_samples), str(rec.lower_samples)]
        )
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def run_summary(spec: ProblemSpec, cfg: dict, trace: RunTrace, wall: float) -> dict:
    u = trace.u_R
    out = {
        "version": __version__,
        "config": cfg,
        "seed": trace.seed,
        "algorithm": trace.algorithm,
        "R": trace.R,
        "u_R": {"x": u.x.tolist(), "y": u.y.tolist(), "z": u.z.tolist()},
        "refined": None,
        "stationarity_proxy": stationarity_proxy(trace),
        "cviol_at_R": constraint_violation(spec, u.x, u.y),
        "upper_samples": trace.upper_samples_total,
        "lower_samples": trace.lower_samples_total,
        "beta_clamp_count": trace.beta_clamp_count,
        "wall_time_sec": wall,
    }
    if trace.refined_y is not None:
        out["refined"] = {"y": trace.refined_y.tolist(), "z": trace.refined_z.tolist()}
        out["cviol_refined"] = constraint_violation(spec, u.x, trace.refined_y)
    if cfg["report.lower_gap"]:
        y_eval = trace.refined_y if trace.refined_y is not None else u.y
        ref = solve_lower(spec, u.x)
        out["lower_gap"] = spec.G_value(u.x, y_eval) - ref.value
    return out


# ---------------------------------------------------------------------------
# subcommands


def _sweep_worker(args: tuple[dict, int]) -> dict:
    cfg, seed = args
    spec = build_problem(cfg)
    t0 = time.perf_counter()
    trace = execute_run(cfg, seed)
    return run_summary(spec, cfg, trace, time.perf_counter() - t0)


def _run_seeds(cfg: dict, seeds: list[int], workers: int) -> list[dict]:
    jobs = [(cfg, s) for s in seeds]
    if workers <= 1 or len(seeds) == 1:
        return [_sweep_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_worker, jobs))


def cmd_run(config_path: str, out_dir: Path, verbose: bool) -> int:
    cfg = load_config(config_path)
    spec = build_problem(cfg)
    t0 = time.perf_counter()
    try:
        trace = execute_run(cfg, cfg["seed"])
    except NumericsError as err:
        partial = getattr(err, "partial_trace", None)
        if partial is not None:
            atomic_write(out_dir / "trace.csv", trace_csv_text(spec, partial))
        print(f"numeric abort: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    wall = time.perf_counter() - t0
    atomic_write(out_dir / "trace.csv", trace_csv_text(spec, trace))
    write_json(out_dir / "summary.json", run_summary(spec, cfg, trace, wall))
    if verbose:
        print(f"run seed={cfg['seed']} R={trace.R} wall={wall:.2f}s -> {out_dir}")
    return EXIT_OK


def _aggregate(cfg: dict, spec: ProblemSpec, summaries: list[dict]) -> dict:
    xs = np.array([s["u_R"]["x"] for s in summaries])
    ys = np.array([s["u_R"]["y"] for s in summaries])
    cv = np.array([s["cviol_at_R"] for s in summaries])
    agg = {
        "version": __version__,
        "config": cfg,
        "n_runs": len(summaries),
        "x_R": {
            "median": np.median(xs, axis=0).tolist(),
            "iqr": [iqr(xs[:, i]) for i in range(xs.shape[1])],
        },
        "y_R": {
            "median": np.median(ys, axis=0).tolist(),
            "iqr": [iqr(ys[:, i]) for i in range(ys.shape[1])],
        },
        "cviol_at_R": {"median": float(np.median(cv)), "max": float(np.max(cv))},
        "entries": [
            {
                "seed": s["seed"],
                "R": s["R"],
                "x_R": s["u_R"]["x"],
                "y_R": s["u_R"]["y"],
                "cviol_at_R": s["cviol_at_R"],
                **({"cviol_refined": s["cviol_refined"]} if "cviol_refined" in s else {}),
                **({"lower_gap": s["lower_gap"]} if "lower_gap" in s else {}),
            }
            for s in summaries
        ],
    }
    if any("cviol_refined" in s for s in summaries):
        cvr = np.array([s["cviol_refined"] for s in summaries if "cviol_refined" in s])
        agg["cviol_refined"] = {
            "median": float(np.median(cvr)),
            "frac_below_1e-3": float(np.mean(cvr <= 1e-3)),
        }
    if any("lower_gap" in s for s in summaries):
        lg = np.array([s["lower_gap"] for s in summaries if "lower_gap" in s])
        agg["lower_gap"] = {"median": float(np.median(lg)), "max": float(np.max(lg))}
    return agg


def cmd_sweep(config_path: str, seeds: list[int] | None, out_dir: Path, verbose: bool, workers: int) -> int:
    cfg = load_config(config_path)
    if seeds is None:
        seeds = cfg["seeds"]
    if not seeds:
        raise ConfigError("sweep needs a nonempty seed list (--seeds or config 'seeds')")
    seeds = sorted(int(s) for s in seeds)
    spec = build_problem(cfg)
    summaries = _run_seeds(cfg, seeds, workers)
    for s in summaries:
        write_json(out_dir / "runs" / f"seed{s['seed']}.json", s)
    header = (
        ["seed"]
        + [f"x{i}" for i in range(spec.m)]
        + [f"y{i}" for i in range(spec.n)]
    )
    lines = [",".join(header)]
    for s in summaries:
        lines.append(
            ",".join(
                [str(s["seed"])]
                + [_fmt(v) for v in s["u_R"]["x"]]
                + [_fmt(v) for v in s["u_R"]["y"]]
            )
        )
    atomic_write(out_dir / "outputs.csv", "\n".join(lines) + "\n")
    write_json(out_dir / "aggregate.json", _aggregate(cfg, spec, summaries))
    if verbose:
        print(f"sweep: {len(seeds)} seeds -> {out_dir}")
    return EXIT_OK


def cmd_compare(config_a: str, config_b: str, seeds: list[int] | None, out_dir: Path, verbose: bool, workers: int) -> int:
    cfg_a = load_config(config_a)
    cfg_b = load_config(config_b)
    if seeds is None:
        seeds = cfg_a["seeds"] or cfg_b["seeds"]
    if not seeds:
        raise ConfigError("compare needs a nonempty seed list")
    seeds = sorted(int(s) for s in seeds)
    budget_a = cfg_a["solver.K"] * cfg_a["solver.r"]
    budget_b = cfg_b["solver.K"] * cfg_b["solver.r"]
    if budget_a != budget_b:
        raise ConfigError(
            f"upper-sample budgets differ: K*r = {budget_a} vs {budget_b}; compare needs a match"
        )
    sums_a = _run_seeds(cfg_a, seeds, workers)
    sums_b = _run_seeds(cfg_b, seeds, workers)
    xa = np.array([s["u_R"]["x"] for s in sums_a])
    xb = np.array([s["u_R"]["x"] for s in sums_b])
    center = np.median(np.vstack([xa, xb]), axis=0)
    err_a = np.linalg.norm(xa - center, axis=1)
    err_b = np.linalg.norm(xb - center, axis=1)
    report = {
        "version": __version__,
        "config_a": cfg_a,
        "config_b": cfg_b,
        "seeds": seeds,
        "budget_upper": budget_a,
        "pooled_center_x": center.tolist(),
        "x_R_iqr_a": [iqr(xa[:, i]) for i in range(xa.shape[1])],
        "x_R_iqr_b": [iqr(xb[:, i]) for i in range(xb.shape[1])],
        **paired_spread_report(err_a, err_b),
    }
    write_json(out_dir / "compare.json", report)
    if verbose:
        print(
            f"compare: IQR ratio (b/a) = {report['iqr_ratio_b_over_a']:.3f}, "
            f"sign-test p = {report['sign_test_p_b_beats_a']:.4f}"
        )
    return EXIT_OK


def cmd_oracle(config_path: str, out_dir: Path, verbose: bool) -> int:
    cfg = load_config(config_path)
    spec = build_problem(cfg)
    al = ALParams(cfg["solver.gamma1"], cfg["solver.gamma2"])
    payload: dict = {"version": __version__, "config": cfg, "problem": spec.name}

    if spec.m == 1:
        hyper = hyperobjective_grid(spec, grid_points=cfg["oracle.x_grid"])
        payload["x_star"] = float(hyper.argmin_or_saddle[0])
        payload["f_star"] = hyper.value
        payload["x_star_tolerance"] = hyper.tolerance
        payload["toy_pilot"] = {
            "median_abs_x_err_tol": cfg["toy_pilot.median_abs_x_err_tol"],
        }

    n_grid = cfg["oracle.saddle_grid"]
    xs = [
        spec.X.lower + t * (spec.X.upper - spec.X.lower)
        for t in np.linspace(0.02, 0.98, min(n_grid, 10))
    ]
    samples = []
    for x in xs:
        ref = solve_lower(spec, x)
        samples.append(
            {
                "x": x.tolist(),
                "y_star": ref.argmin_or_saddle.tolist(),
                "v": ref.value,
                "method": ref.method_tag,
                "multipliers": None if ref.multipliers is None else ref.multipliers.tolist(),
            }
        )
    payload["lower_solutions"] = samples

    ts = np.linspace(0.02, 0.98, n_grid)
    zs = np.linspace(0.0, cfg["oracle.z_max"], n_grid)
    v_grid, e_grid, saddles = [], [], []
    for t in ts:
        x = spec.X.lower + t * (spec.X.upper - spec.X.lower)
        v = solve_lower(spec, x).value
        v_grid.append({"x": x.tolist(), "v": v})
        row = []
        for zval in zs:
            z = np.full(spec.p, zval)
            sad = solve_saddle(spec, x, z, al)
            row.append(sad.value)
            if len(saddles) < 5:
                saddles.append(
                    {
                        "x": x.tolist(),
                        "z": z.tolist(),
                        "w": sad.argmin_or_saddle.tolist(),
                        "lam": sad.multipliers.tolist(),
                        "E": sad.value,
                        "method": sad.method_tag,
                    }
                )
        e_grid.append(row)
    payload["v_grid"] = v_grid
    payload["E_grid"] = {"t": ts.tolist(), "z": zs.tolist(), "E": e_grid}
    payload["saddles"] = saddles

    write_json(out_dir / "oracle.json", payload)
    if verbose:
        msg = f"oracle -> {out_dir / 'oracle.json'}"
        if "x_star" in payload:
            msg += f" (x* = {payload['x_star']:.6f})"
        print(msg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def parse_seed_spec(text: str) -> list[int]:
    """'0..9' (inclusive range) or comma-separated integers."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blevel", description=__doc__)
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--workers", type=int, default=1)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single seeded run; writes trace.csv + summary.json")
    p_run.add_argument("config")

    p_sweep = sub.add_parser("sweep", help="many seeds; writes outputs.csv + aggregate.json")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--seeds", type=parse_seed_spec, default=None)

    p_cmp = sub.add_parser("compare", help="paired-seed comparison of two configs")
    p_cmp.add_argument("config_a")
    p_cmp.add_argument("config_b")
    p_cmp.add_argument("--seeds", type=parse_seed_spec, default=None)

    p_orc = sub.add_parser("oracle", help="precompute reference ground truth; writes oracle.json")
    p_orc.add_argument("config")
    return parser


def resolve_out_dir(flag_value: str | None) -> Path:
    if flag_value:
        return Path(flag_value)
    env = os.environ.get("BLEVEL_OUT")
    if env:
        return Path(env)
    return Path("blevel_out")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = resolve_out_dir(args.out)
    try:
        if args.command == "run":
            return cmd_run(args.config, out_dir, args.verbose)
        if args.command == "sweep":
            return cmd_sweep(args.config, args.seeds, out_dir, args.verbose, args.workers)
        if args.command == "compare":
            return cmd_compare(
                args.config_a, args.config_b, args.seeds, out_dir, args.verbose, args.workers
            )
        if args.command == "oracle":
            return cmd_oracle(args.config, out_dir, args.verbose)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericsError, ConvergenceError, InfeasibleError) as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
