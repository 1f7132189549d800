"""Projected gradient descent over the scouting-allocation simplex.

The outer loop treats the stage-1 cost K(r) as a black box whose gradient
comes from the equilibrium sensitivity system: at each iterate the second
stage is re-solved, dK/dr is formed, and the allocation takes a projected
gradient step. Iterates may converge to the simplex boundary; gradients
there are evaluated at a slightly clamped interior point to keep the
sensitivity system well-posed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GradientUnavailable
from .game import GameSpec, stage1_cost
from .sensitivity import sensitivity_report
from .simplex import interior_clamp, project_simplex
from .solver import SolverConfig, Stage2Solver

BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float = 0.05
    max_iters: int = 500
    tol_step: float = 1e-6
    tol_grad: float = 1e-6
    interior_clamp: float = 1e-7
    seed: int = 0
    backtracking: bool = False

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.interior_clamp <= 0:
            raise ValueError("interior_clamp must be positive")


@dataclass
class TraceRecord:
    iteration: int
    r: np.ndarray
    cost: float
    grad_norm: float
    step_norm: float
    residuals: dict


@dataclass
class OptimizerTrace:
    records: list = field(default_factory=list)
    termination: str = "max_iters"

    def append(self, rec: TraceRecord):
        self.records.append(rec)

    def rows(self) -> list:
        """Flat rows (iteration, r..., cost, grad_norm, step_norm) for CSV."""
        out = []
        for rec in self.records:
            out.append(
                [rec.iteration, *rec.r.tolist(), rec.cost, rec.grad_norm, rec.step_norm]
            )
        return out


def solve_two_stage(
    spec: GameSpec,
    config: Optional[OptimizerConfig] = None,
    r0=None,
    solver_config: Optional[SolverConfig] = None,
):
    """Run the outer projected-gradient loop; returns (r*, solution, trace).

    Terminates when the projected step or the simplex-tangent gradient falls
    below tolerance, or after max_iters (the trace records which). The
    second stage is re-solved at the final allocation so the returned
    solution is exactly consistent with r*.
    """
    config = config or OptimizerConfig()
    m = spec.m
    if r0 is None:
        r0 = np.full(m, 1.0 / m)
    r = project_simplex(np.asarray(r0, dtype=float))
    solver = Stage2Solver(spec, solver_config)
    trace = OptimizerTrace()

    eps = config.interior_clamp
    if eps >= 1.0 / (2 * m):
        raise ValueError("interior_clamp too large for this simplex")

    best_r = r.copy()
    best_cost = np.inf
    for it in range(config.max_iters):
        r_eval = r if r.min() > BOUNDARY_TOL else interior_clamp(r, eps)
        solution = solver.solve(r_eval)
        cost = stage1_cost(solution, r, spec)
        try:
            report = sensitivity_report(spec, r_eval, solution=solution, solver=solver)
        except Exception as exc:
            trace.append(
                TraceRecord(it, r.copy(), cost, np.nan, np.nan, _residuals(solution))
            )
            trace.termination = f"gradient failure: {exc}"
            raise GradientUnavailable(
                f"sensitivity failed at iteration {it} (r={r})"
            ) from exc
        grad = report.dK_dr
        tangent = grad - grad.mean()
        grad_norm = float(np.max(np.abs(tangent)))

        step = config.step_size
        r_new = project_simplex(r - step * grad)
        if config.backtracking and cost < np.inf:
            for _ in range(20):
                trial_sol = solver.solve(
                    r_new if r_new.min() > BOUNDARY_TOL else interior_clamp(r_new, eps)
                )
                if stage1_cost(trial_sol, r_new, spec) <= cost + 1e-8:
                    break
                step *= 0.5
                r_new = project_simplex(r - step * grad)
        step_norm = float(np.max(np.abs(r_new - r)))

        trace.append(
            TraceRecord(it, r.copy(), cost, grad_norm, step_norm, _residuals(solution))
        )
        if cost < best_cost:
            best_cost = cost
            best_r = r.copy()

        if step_norm < config.tol_step:
            trace.termination = "step"
            break
        if grad_norm < config.tol_grad:
            trace.termination = "gradient"
            break
        r = r_new
    else:
        trace.termination = "max_iters"
        r = best_r

    final = solver.solve(r if r.min() > BOUNDARY_TOL else interior_clamp(r, eps))
    return r, final, trace


def _residuals(solution) -> dict:
    return {sigma: sub.residual_norm for sigma, sub in solution.subgames.items()}
