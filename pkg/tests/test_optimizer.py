"""Outer projected-gradient loop over the scouting allocation."""

import numpy as np
import pytest

from scoutgame.errors import GradientUnavailable
from scoutgame.game import FEASIBLE_UNCONSTRAINED, GameSpec, QuadraticCost
from scoutgame.optimizer import OptimizerConfig, solve_two_stage
from scoutgame.simplex import barycentric_lattice
from scoutgame.solver import SolverConfig

SOLVER = SolverConfig(pg_iters=0, restarts=2)


def _targets_spec():
    """Player 1 chases a world-dependent target; player 2 is inert.

    J1(x1; w) = s_w/2 |x1 - b_w|^2, J2(x2) = 1/2 |x2|^2. The pooled
    equilibrium is the s-and-posterior weighted mean of the targets, so
    the stage-1 cost has the closed form used by `k_oracle`.
    """
    m, n = 3, 2
    s = np.array([1.0, 2.0, 6.0])
    b = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    S = np.stack([s[w] * np.eye(n) for w in range(m)])
    d = np.stack([-s[w] * b[w] for w in range(m)])
    Zm = np.zeros((m, n, n))
    zv = np.zeros((m, n))
    cost1 = QuadraticCost(S, Zm, Zm, d, zv)
    cost2 = QuadraticCost(Zm, Zm, np.stack([np.eye(n)] * m), zv, zv)
    prior = np.array([0.25, 0.35, 0.40])
    spec = GameSpec(m, n, prior, cost1, cost2,
                    feasible1=FEASIBLE_UNCONSTRAINED, feasible2=FEASIBLE_UNCONSTRAINED)

    def k_oracle(r):
        # the quadratic has no constant term, so J1 = s/2 |x-b|^2 - s/2 |b|^2;
        # the offsets sum to a constant because detect and miss shares add to p
        q = (1.0 - np.asarray(r)) * prior
        xbar = (q * s) @ b / (q * s).sum()
        mismatch = sum(q[w] * 0.5 * s[w] * np.sum((xbar - b[w]) ** 2) for w in range(m))
        offset = sum(prior[w] * 0.5 * s[w] * np.sum(b[w] ** 2) for w in range(m))
        return float(mismatch - offset)

    return spec, k_oracle


def test_stage1_cost_matches_closed_form():
    spec, k_oracle = _targets_spec()
    from scoutgame.game import stage1_cost
    from scoutgame.solver import solve_stage2

    for r in ([0.2, 0.3, 0.5], [0.6, 0.2, 0.2], [1 / 3.0] * 3):
        sol = solve_stage2(spec, np.array(r), config=SOLVER)
        assert stage1_cost(sol, np.array(r), spec) == pytest.approx(k_oracle(r), abs=1e-10)


def test_optimizer_descends_to_local_grid_minimum():
    spec, k_oracle = _targets_spec()
    lattice = barycentric_lattice(100, dims=3)
    vals = np.array([k_oracle(row) for row in lattice])

    cfg = OptimizerConfig(step_size=0.2, max_iters=300, seed=1)
    r_star, final, trace = solve_two_stage(spec, cfg, r0=np.full(3, 1.0 / 3.0), solver_config=SOLVER)
    assert trace.termination in ("step", "gradient")
    # strictly descending trace
    costs = [rec.cost for rec in trace.records]
    assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))
    # no lattice point near the terminus does better
    near = np.max(np.abs(lattice - r_star), axis=1) <= 0.1
    assert k_oracle(r_star) <= vals[near].min() + 1e-6
    # the returned stage-2 solution is solved at the terminal allocation
    assert final.subgames[0].residual_norm < 1e-8


def test_optimizer_finds_global_argmin_from_its_basin():
    spec, k_oracle = _targets_spec()
    lattice = barycentric_lattice(100, dims=3)
    vals = np.array([k_oracle(row) for row in lattice])
    grid_best = lattice[vals.argmin()]

    cfg = OptimizerConfig(step_size=0.2, max_iters=300)
    r0 = 0.85 * grid_best + 0.15 / 3.0
    r_star, _, _ = solve_two_stage(spec, cfg, r0=r0, solver_config=SOLVER)
    assert np.max(np.abs(r_star - grid_best)) <= 0.05
    assert k_oracle(r_star) <= vals.min() + 1e-6


def test_world_independent_game_terminates_immediately():
    # identical costs in every world: scouting buys nothing, dK/dr = 0
    m, n = 3, 2
    b = np.array([0.3, 0.4])
    S = np.stack([np.eye(n)] * m)
    d = np.stack([-b] * m)
    Zm = np.zeros((m, n, n))
    zv = np.zeros((m, n))
    cost1 = QuadraticCost(S, Zm, Zm, d, zv)
    cost2 = QuadraticCost(Zm, Zm, np.stack([np.eye(n)] * m), zv, zv)
    spec = GameSpec(m, n, np.full(m, 1.0 / m), cost1, cost2,
                    feasible1=FEASIBLE_UNCONSTRAINED, feasible2=FEASIBLE_UNCONSTRAINED)
    r0 = np.array([0.5, 0.25, 0.25])
    r_star, _, trace = solve_two_stage(spec, OptimizerConfig(), r0=r0, solver_config=SOLVER)
    np.testing.assert_allclose(r_star, r0, atol=1e-12)
    assert trace.termination in ("step", "gradient")
    assert len(trace.records) == 1
    assert trace.records[0].grad_norm <= 1e-10
    assert trace.records[0].cost == pytest.approx(-0.5 * float(b @ b), abs=1e-12)


def test_backtracking_agrees_on_smooth_descent():
    spec, k_oracle = _targets_spec()
    r0 = np.array([0.5, 0.3, 0.2])
    plain = solve_two_stage(spec, OptimizerConfig(step_size=0.1, seed=0), r0=r0, solver_config=SOLVER)
    armijo = solve_two_stage(
        spec, OptimizerConfig(step_size=0.1, seed=0, backtracking=True), r0=r0, solver_config=SOLVER
    )
    assert k_oracle(plain[0]) == pytest.approx(k_oracle(armijo[0]), abs=1e-6)


def test_max_iters_returns_best_iterate():
    spec, k_oracle = _targets_spec()
    cfg = OptimizerConfig(step_size=0.05, max_iters=3, tol_step=0.0, tol_grad=0.0)
    r_star, _, trace = solve_two_stage(spec, cfg, r0=np.full(3, 1.0 / 3.0), solver_config=SOLVER)
    assert trace.termination == "max_iters"
    best = min(trace.records, key=lambda rec: rec.cost)
    np.testing.assert_allclose(r_star, best.r, atol=1e-12)


def test_trace_rows_are_flat_and_ordered():
    spec, _ = _targets_spec()
    cfg = OptimizerConfig(step_size=0.1, max_iters=5, tol_step=0.0, tol_grad=0.0)
    _, _, trace = solve_two_stage(spec, cfg, r0=np.array([0.2, 0.5, 0.3]), solver_config=SOLVER)
    rows = trace.rows()
    assert [row[0] for row in rows] == list(range(len(rows)))
    assert all(len(row) == 1 + 3 + 3 for row in rows)
    assert all(np.isfinite(row[4]) for row in rows)


def test_gradient_failure_is_reported():
    # player 2's cost is identically zero: its own Hessian block is singular
    # and the sensitivity system cannot be inverted
    m, n = 2, 1
    Zm = np.zeros((m, n, n))
    zv = np.zeros((m, n))
    cost1 = QuadraticCost(np.stack([np.eye(n)] * m), Zm, Zm, np.array([[1.0], [-1.0]]), zv)
    cost2 = QuadraticCost(Zm, Zm, Zm, zv, zv)
    spec = GameSpec(m, n, np.array([0.5, 0.5]), cost1, cost2,
                    feasible1=FEASIBLE_UNCONSTRAINED, feasible2=FEASIBLE_UNCONSTRAINED)
    with pytest.raises(GradientUnavailable):
        solve_two_stage(spec, OptimizerConfig(), r0=np.array([0.5, 0.5]), solver_config=SOLVER)


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(step_size=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(interior_clamp=0.0)
    with pytest.raises(ValueError):
        solve_two_stage(_targets_spec()[0], OptimizerConfig(interior_clamp=0.4))
