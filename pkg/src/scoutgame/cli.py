"""Command-line front end.

Subcommands: solve (full two-stage optimization), stage2 (equilibria at a
fixed allocation), sweep (lattice sweep to CSV), policy-map, perturb (the
preference-perturbation study), gradcheck (analytic vs finite-difference
gradient). Configuration comes from a JSON file with sections game, solver,
stage1 and sweep; every field has the default experiment's value, and a few
flags override the file. Outputs are deterministic for a fixed seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, ScoutGameError
from .game import stage1_cost, stage1_terms
from .optimizer import OptimizerConfig, solve_two_stage
from .sensitivity import sensitivity_report
from .solver import SolverConfig, Stage2Solver, nash_verify, stationarity_residual
from .sweep import gradcheck, perturbation_study, policy_map, sweep
from .towerdefense import (
    DEFAULT_PREFERENCES,
    DEFAULT_SHARPNESS,
    TowerDefenseParams,
    build_game,
)

FLOAT_FMT = "%.17g"

DEFAULT_CONFIG = {
    "game": {
        "B": [list(row) for row in DEFAULT_PREFERENCES],
        "k": DEFAULT_SHARPNESS,
        "theta": 0.0,
        "prior": None,
    },
    "solver": {
        "residual_tol": 1e-10,
        "max_iters": 200,
        "restarts": 8,
        "seed": 7041,
        "pg_iters": 150,
        "pg_step": 0.25,
    },
    "stage1": {
        "alpha": 0.05,
        "max_iters": 500,
        "tol_step": 1e-6,
        "tol_grad": 1e-6,
        "interior_clamp": 1e-7,
        "seed": 0,
        "backtracking": False,
        "r0": None,
    },
    "sweep": {"resolution": 20},
}


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


def _write_csv(path: Path, header: list, rows: list) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def load_config(path) -> dict:
    """Defaults deep-merged with the user file; unknown keys are errors."""
    config = {sec: dict(vals) for sec, vals in DEFAULT_CONFIG.items()}
    if path is None:
        return config
    try:
        user = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be an object")
    for sec, vals in user.items():
        if sec not in config:
            raise ConfigError(f"unknown config section {sec!r}")
        if not isinstance(vals, dict):
            raise ConfigError(f"config section {sec!r} must be an object")
        for key, val in vals.items():
            if key not in config[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            config[sec][key] = val
    return config


def build_from_config(config: dict):
    """(GameSpec, TowerDefenseParams, SolverConfig, OptimizerConfig)."""
    game = config["game"]
    try:
        params = TowerDefenseParams(
            B=np.asarray(game["B"], dtype=float),
            sharpness=float(game["k"]),
            prior=None if game["prior"] is None else np.asarray(game["prior"], dtype=float),
            theta=float(game["theta"]),
        )
        spec = build_game(params)
        sv = config["solver"]
        solver_config = SolverConfig(
            residual_tol=float(sv["residual_tol"]),
            max_iters=int(sv["max_iters"]),
            restarts=int(sv["restarts"]),
            seed=int(sv["seed"]),
            pg_iters=int(sv["pg_iters"]),
            pg_step=float(sv["pg_step"]),
        )
        s1 = config["stage1"]
        opt_config = OptimizerConfig(
            step_size=float(s1["alpha"]),
            max_iters=int(s1["max_iters"]),
            tol_step=float(s1["tol_step"]),
            tol_grad=float(s1["tol_grad"]),
            interior_clamp=float(s1["interior_clamp"]),
            seed=int(s1["seed"]),
            backtracking=bool(s1["backtracking"]),
        )
    except (ValueError, TypeError, KeyError, ScoutGameError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return spec, params, solver_config, opt_config


def _parse_r(text: str, m: int) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse allocation {text!r}") from exc
    if len(vals) != m:
        raise ConfigError(f"allocation needs {m} components, got {len(vals)}")
    r = np.array(vals)
    if np.any(r < 0.0) or abs(r.sum() - 1.0) > 1e-9:
        raise ConfigError(
            f"allocation must be nonnegative and sum to 1, got {text!r}"
        )
    # absorb decimal-text rounding so downstream simplex validation passes
    return r / r.sum()


def _solution_dict(spec, solution, r) -> dict:
    out = {
        "r": np.asarray(r, dtype=float).tolist(),
        "stage1_cost": stage1_cost(solution, r, spec),
        "x1": {str(s): v.tolist() for s, v in sorted(solution.x1.items())},
        "x2": {
            f"{s},{w}": v.tolist() for (s, w), v in sorted(solution.x2.items())
        },
        "residuals": {
            str(s): sub.residual_norm for s, sub in sorted(solution.subgames.items())
        },
        "complementarity": {
            str(s): sub.complementarity for s, sub in sorted(solution.subgames.items())
        },
        "posterior": {
            "support": list(solution.posterior.support),
            "weights": solution.posterior.weights.tolist(),
        }
        if solution.posterior is not None
        else None,
    }
    detect, miss = stage1_terms(solution, r, spec)
    out["detect_terms"] = detect.tolist()
    out["miss_terms"] = miss.tolist()
    return out


def _grid_header(m: int) -> list:
    header = [f"i{a + 1}" for a in range(m)]
    header += [f"r{a + 1}" for a in range(m)]
    header += ["K", "K_normalized"]
    header += [f"detect{a + 1}" for a in range(m)]
    header += [f"miss{a + 1}" for a in range(m)]
    for sigma in range(m + 1):
        header += [f"x1_s{sigma}_{a + 1}" for a in range(m)]
    for w in range(m):
        header += [f"x2_s0_w{w + 1}_{a + 1}" for a in range(m)]
    for sigma in range(1, m + 1):
        header += [f"x2_s{sigma}_w{sigma}_{a + 1}" for a in range(m)]
    header += ["residual", "complementarity", "deviation_ok", "error"]
    return header


def _grid_rows(grid) -> list:
    m = grid.m
    rows = []
    nan = float("nan")
    for pt in grid.points:
        row = list(pt.index) + pt.r.tolist()
        row += [pt.cost, pt.normalized_cost]
        row += pt.detect_terms.tolist() if pt.detect_terms is not None else [nan] * m
        row += pt.miss_terms.tolist() if pt.miss_terms is not None else [nan] * m
        for sigma in range(m + 1):
            vec = pt.x1.get(sigma)
            row += vec.tolist() if vec is not None else [nan] * m
        for w in range(m):
            vec = pt.x2.get((0, w))
            row += vec.tolist() if vec is not None else [nan] * m
        for sigma in range(1, m + 1):
            vec = pt.x2.get((sigma, sigma - 1))
            row += vec.tolist() if vec is not None else [nan] * m
        row += [pt.residual, pt.complementarity, int(pt.deviation_ok), pt.error]
        rows.append(row)
    return rows


def _svg_heatmap(grid, path: Path) -> None:
    """Minimal ternary heatmap: normalized cost as grayscale dots."""
    size = 420.0
    pad = 30.0
    h = np.sqrt(3.0) / 2.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(size + 2 * pad)}" '
        f'height="{int(size * h + 2 * pad)}" viewBox="0 0 {int(size + 2 * pad)} '
        f'{int(size * h + 2 * pad)}">'
    ]
    vals = [p.normalized_cost for p in grid.points if p.ok]
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    span = (hi - lo) or 1.0
    radius = max(2.0, size / (3.0 * (grid.resolution + 1)))
    for pt in grid.points:
        r1, r2, r3 = pt.r[:3]
        x = pad + size * (r2 + 0.5 * r3)
        y = pad + size * h * (1.0 - r3)
        if pt.ok:
            shade = int(round(255 * (1.0 - (pt.normalized_cost - lo) / span)))
            color = f"rgb({shade},{shade},{shade})"
        else:
            color = "rgb(255,0,0)"
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius:.2f}" fill="{color}"/>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override solver seed")
    p.add_argument("--theta", type=float, default=None, help="override game theta")
    p.add_argument("--threads", type=int, default=1, help="sweep worker threads")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scoutgame",
        description="Two-stage scouting/defense game solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="projected-gradient optimization of the allocation")
    _add_common(p)
    p.add_argument("--r0", default=None, help="comma-separated starting allocation")

    p = sub.add_parser("stage2", help="solve the second stage at a fixed allocation")
    _add_common(p)
    p.add_argument("--r", default=None, help="comma-separated allocation")

    p = sub.add_parser("sweep", help="solve on a barycentric lattice, write CSV")
    _add_common(p)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--svg", action="store_true", help="also write a ternary heatmap")

    p = sub.add_parser("policy-map", help="per-signal policy table over a sweep")
    _add_common(p)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--player", type=int, required=True, choices=(1, 2))
    p.add_argument("--sigma", type=int, required=True)
    p.add_argument("--world", type=int, default=None, help="1-based world (player 2)")

    p = sub.add_parser("perturb", help="preference-perturbation study")
    _add_common(p)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--thetas", default="0,1,2,4", help="comma-separated theta list")

    p = sub.add_parser("gradcheck", help="finite-difference check of dK/dr")
    _add_common(p)
    p.add_argument("--r", default=None, help="comma-separated allocation")
    p.add_argument("--step", type=float, default=1e-4)
    return parser


def run(args) -> int:
    config = load_config(args.config)
    if args.theta is not None:
        config["game"]["theta"] = args.theta
    if args.seed is not None:
        config["solver"]["seed"] = args.seed
    resolution = getattr(args, "resolution", None)
    if resolution is not None:
        config["sweep"]["resolution"] = resolution
    spec, params, solver_config, opt_config = build_from_config(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.command == "solve":
        r0 = _parse_r(args.r0, spec.m) if args.r0 else config["stage1"]["r0"]
        if r0 is not None:
            r0 = np.asarray(r0, dtype=float)
        r_star, solution, trace = solve_two_stage(
            spec, opt_config, r0=r0, solver_config=solver_config
        )
        header = ["iteration"] + [f"r{a + 1}" for a in range(spec.m)] + [
            "K",
            "grad_norm",
            "step_norm",
        ]
        _write_csv(out_dir / "trace.csv", header, trace.rows())
        result = _solution_dict(spec, solution, r_star)
        result["termination"] = trace.termination
        result["iterations"] = len(trace.records)
        (out_dir / "solution.json").write_text(json.dumps(result, indent=2) + "\n")
        print(
            f"r* = {np.round(r_star, 6).tolist()}  K = {result['stage1_cost']:.12g}  "
            f"({trace.termination}, {len(trace.records)} iterations)"
        )
        return 0

    if args.command == "stage2":
        r = (
            _parse_r(args.r, spec.m)
            if args.r
            else np.full(spec.m, 1.0 / spec.m)
        )
        solver = Stage2Solver(spec, solver_config)
        solution = solver.solve(r)
        result = _solution_dict(spec, solution, r)
        result["nash_verify"] = {
            str(k): v for k, v in nash_verify(spec, solution).items()
        }
        result["stationarity"] = {
            str(k): v for k, v in stationarity_residual(spec, solution).items()
        }
        (out_dir / "stage2.json").write_text(json.dumps(result, indent=2) + "\n")
        print(f"K = {result['stage1_cost']:.12g}; report in {out_dir / 'stage2.json'}")
        return 0

    if args.command == "sweep":
        grid = sweep(
            spec,
            resolution=config["sweep"]["resolution"],
            config=solver_config,
            threads=args.threads,
        )
        _write_csv(out_dir / "grid.csv", _grid_header(spec.m), _grid_rows(grid))
        if args.svg:
            _svg_heatmap(grid, out_dir / "heatmap.svg")
        failures = sum(1 for p in grid.points if not p.ok)
        print(
            f"{len(grid.points)} points ({failures} failures) -> "
            f"{out_dir / 'grid.csv'}"
        )
        return 2 if failures else 0

    if args.command == "policy-map":
        grid = sweep(
            spec,
            resolution=config["sweep"]["resolution"],
            config=solver_config,
            threads=args.threads,
        )
        world = None if args.world is None else args.world - 1
        rows = policy_map(grid, args.player, args.sigma, world)
        header = [f"r{a + 1}" for a in range(spec.m)] + [
            f"x{a + 1}" for a in range(spec.m)
        ]
        name = f"policy_p{args.player}_s{args.sigma}"
        if args.player == 2:
            name += f"_w{args.world}"
        _write_csv(out_dir / f"{name}.csv", header, rows)
        print(f"{len(rows)} rows -> {out_dir / (name + '.csv')}")
        return 0

    if args.command == "perturb":
        thetas = [float(t) for t in args.thetas.split(",")]
        study = perturbation_study(
            thetas,
            params,
            resolution=config["sweep"]["resolution"],
            config=solver_config,
            threads=args.threads,
        )
        for theta, grid in study["grids"].items():
            rows = policy_map(grid, 1, 0)
            header = [f"r{a + 1}" for a in range(spec.m)] + [
                f"x{a + 1}" for a in range(spec.m)
            ]
            tag = _fmt(theta).replace(".", "p").replace("-", "m")
            _write_csv(out_dir / f"perturb_defender_theta_{tag}.csv", header, rows)
        summary = {
            "thetas": study["thetas"],
            "red_fractions": study["red_fractions"],
            "nondecreasing": study["nondecreasing"],
            "pi_policy_max_drift": study["pi_policy_max_drift"],
        }
        (out_dir / "perturb.json").write_text(json.dumps(summary, indent=2) + "\n")
        fr = ", ".join(f"{t:g}: {f:.4f}" for t, f in zip(summary["thetas"], summary["red_fractions"]))
        print(f"red fractions {{{fr}}} nondecreasing={summary['nondecreasing']}")
        return 0

    if args.command == "gradcheck":
        r = (
            _parse_r(args.r, spec.m)
            if args.r
            else np.full(spec.m, 1.0 / spec.m)
        )
        report = gradcheck(spec, r, step=args.step, config=solver_config)
        (out_dir / "gradcheck.json").write_text(json.dumps(report, indent=2) + "\n")
        print(f"dK/dr = {report['dK_dr']}")
        for row in report["directional"]:
            print(
                f"  t={np.round(row['direction'], 4).tolist()} analytic={row['analytic']:.10g} "
                f"fd={row['fd']:.10g} rel={row['rel_error']:.3e}"
            )
        print(f"max relative error {report['max_rel_error']:.3e}")
        return 0

    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except ScoutGameError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
