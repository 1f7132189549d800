"""Simplex sweeps, policy maps, the perturbation study, and gradient checks.

A sweep solves the second stage at every barycentric lattice point of the
allocation simplex, reusing the signal-independent subgames, and tabulates
the stage-1 cost, its per-world decomposition terms, and all equilibrium
policies. Policy maps slice a sweep into per-signal decision tables whose
rows can be read directly as RGB colors.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import RelativeInteriorRequired, ScoutGameError, UnsupportedPair
from .game import GameSpec, as_signal, stage1_terms
from .sensitivity import (
    check_conditions,
    assemble_jacobian,
    fd_directional_k,
    sensitivity_report,
    tangent_directions,
)
from .simplex import barycentric_lattice
from .solver import SolverConfig, Stage2Solver
from .towerdefense import TowerDefenseParams, build_game


@dataclass
class SweepPoint:
    index: tuple
    r: np.ndarray
    cost: float = np.nan
    normalized_cost: float = np.nan
    detect_terms: Optional[np.ndarray] = None
    miss_terms: Optional[np.ndarray] = None
    x1: dict = field(default_factory=dict)
    x2: dict = field(default_factory=dict)
    residual: float = np.nan
    complementarity: str = ""
    deviation_ok: bool = False
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.error == ""


@dataclass
class SweepGrid:
    resolution: int
    m: int
    points: list
    max_abs_cost: float = np.nan

    def point_at(self, index: tuple) -> SweepPoint:
        for p in self.points:
            if p.index == tuple(index):
                return p
        raise KeyError(index)


def _lattice_indices(resolution: int, dims: int) -> list:
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(tuple(prefix + [remaining]))
            return
        for i in range(remaining + 1):
            rec(prefix + [i], remaining - i, slots - 1)

    rec([], resolution, dims)
    return out


def sweep(
    spec: GameSpec,
    resolution: int = 20,
    config: Optional[SolverConfig] = None,
    threads: int = 1,
) -> SweepGrid:
    """Stage-2 solve + stage-1 decomposition at every lattice allocation.

    Per-point solver failures are recorded on the point and the sweep
    continues. Points are returned sorted by lattice index regardless of
    worker completion order, so output is deterministic.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    solver = Stage2Solver(spec, config)
    indices = _lattice_indices(resolution, spec.m)
    points = [
        SweepPoint(index=idx, r=np.array(idx, dtype=float) / resolution)
        for idx in indices
    ]

    # the perfect-information subgames are shared by every point; if one of
    # them fails there is nothing to sweep, so stamp the error everywhere
    try:
        for world in range(spec.m):
            solver.perfect(world)
    except ScoutGameError as exc:
        for pt in points:
            pt.error = f"{type(exc).__name__}: {exc}"
        return SweepGrid(resolution=resolution, m=spec.m, points=points, max_abs_cost=np.nan)

    def work(pt: SweepPoint) -> SweepPoint:
        try:
            sol = solver.solve(pt.r)
            detect, miss = stage1_terms(sol, pt.r, spec)
            pt.cost = float(detect.sum() + miss.sum())
            pt.detect_terms = detect
            pt.miss_terms = miss
            pt.x1 = dict(sol.x1)
            pt.x2 = dict(sol.x2)
            sub = sol.subgames[0]
            pt.residual = max(s.residual_norm for s in sol.subgames.values())
            pt.complementarity = sub.complementarity
            pt.deviation_ok = all(s.deviation_ok for s in sol.subgames.values())
        except ScoutGameError as exc:
            pt.error = f"{type(exc).__name__}: {exc}"
        return pt

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(work, points))
    else:
        points = [work(p) for p in points]

    points.sort(key=lambda p: p.index)
    finite = [abs(p.cost) for p in points if p.ok]
    max_abs = max(finite) if finite else np.nan
    for p in points:
        if p.ok and max_abs > 0:
            p.normalized_cost = p.cost / max_abs
    return SweepGrid(resolution=resolution, m=spec.m, points=points, max_abs_cost=max_abs)


def policy_map(grid: SweepGrid, player: int, sigma: int, world: Optional[int] = None) -> list:
    """Rows (r..., x...) of one policy across the grid.

    Player 1's policy depends on the signal alone; player 2's on (signal,
    world). Structurally impossible pairs raise UnsupportedPair; points
    where the pair is unsupported (world dropped from the no-detection
    posterior) emit NaN components. Components are clamped to [0, 1] so a
    row reads directly as a color.
    """
    m = grid.m
    if sigma < 0 or sigma > m:
        raise UnsupportedPair(f"signal {sigma} out of range")
    if player == 2:
        if world is None:
            raise UnsupportedPair("player 2 policy needs a world")
        if sigma > 0 and world != sigma - 1:
            raise UnsupportedPair(
                f"signal {sigma} certifies world {sigma - 1}, not {world}"
            )
    elif player == 1:
        if world is not None:
            raise UnsupportedPair("player 1 policy does not take a world")
    else:
        raise UnsupportedPair(f"unknown player {player}")

    rows = []
    for pt in grid.points:
        vec = np.full(m, np.nan)
        if pt.ok:
            if player == 1:
                if sigma in pt.x1:
                    vec = np.clip(pt.x1[sigma], 0.0, 1.0)
            else:
                if (sigma, world) in pt.x2:
                    vec = np.clip(pt.x2[(sigma, world)], 0.0, 1.0)
        rows.append([*pt.r.tolist(), *np.asarray(vec, dtype=float).tolist()])
    return rows


def perturbation_study(
    theta_list,
    base_params: TowerDefenseParams,
    resolution: int = 20,
    config: Optional[SolverConfig] = None,
    threads: int = 1,
) -> dict:
    """Red-region growth study for the perturbed preference family.

    For each theta, sweeps the perturbed game and measures the fraction of
    grid points whose pooled defender policy puts at least half its mass on
    direction 1. Also verifies the detected-world policies do not move with
    theta and reports their largest drift.
    """
    thetas = [float(t) for t in theta_list]
    fractions = []
    grids = {}
    pi_policies = {}
    for theta in thetas:
        params = replace(base_params, theta=theta)
        spec = build_game(params)
        grid = sweep(spec, resolution=resolution, config=config, threads=threads)
        grids[theta] = grid
        ok_pts = [p for p in grid.points if p.ok]
        red = sum(1 for p in ok_pts if p.x1[0][0] >= 0.5)
        fractions.append(red / len(ok_pts) if ok_pts else np.nan)
        solver = Stage2Solver(spec, config)
        pi_policies[theta] = {
            sigma: (solver.perfect(sigma - 1).x1, solver.perfect(sigma - 1).x2[sigma - 1])
            for sigma in range(1, spec.m + 1)
        }

    base = pi_policies[thetas[0]]
    pi_drift = 0.0
    for theta in thetas[1:]:
        for sigma, (x1, x2) in pi_policies[theta].items():
            pi_drift = max(pi_drift, float(np.max(np.abs(x1 - base[sigma][0]))))
            pi_drift = max(pi_drift, float(np.max(np.abs(x2 - base[sigma][1]))))

    nondecreasing = all(
        fractions[i + 1] >= fractions[i] - 1e-12 for i in range(len(fractions) - 1)
    )
    return {
        "thetas": thetas,
        "red_fractions": fractions,
        "nondecreasing": nondecreasing,
        "pi_policy_max_drift": pi_drift,
        "grids": grids,
    }


def gradcheck(
    spec: GameSpec,
    r,
    step: float = 1e-4,
    config: Optional[SolverConfig] = None,
) -> dict:
    """Analytic-vs-finite-difference report for the stage-1 gradient at r."""
    rvec = as_signal(r).r
    if rvec.min() <= 1e-9:
        raise RelativeInteriorRequired(
            f"gradient check needs an interior allocation (min r = {rvec.min():.2e})"
        )
    solver = Stage2Solver(spec, config)
    solution = solver.solve(rvec)
    report = sensitivity_report(spec, rvec, solution=solution, solver=solver)
    parts = assemble_jacobian(spec, solution.posterior, solution, rvec)
    rows = []
    worst = 0.0
    for t in tangent_directions(spec.m):
        analytic = float(report.dK_dr @ t)
        fd = fd_directional_k(spec, rvec, t, step=step, solver=solver)
        rel = abs(analytic - fd) / max(1.0, abs(analytic))
        worst = max(worst, rel)
        rows.append(
            {
                "direction": t.tolist(),
                "analytic": analytic,
                "fd": fd,
                "rel_error": rel,
            }
        )
    return {
        "r": rvec.tolist(),
        "dK_dr": report.dK_dr.tolist(),
        "directional": rows,
        "max_rel_error": worst,
        "conditions": check_conditions(parts, rvec),
    }
