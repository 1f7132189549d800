"""Equilibrium sensitivity: block assembly, Schur solve, total gradient."""

import dataclasses

import numpy as np
import pytest

from scoutgame.errors import GradientUnavailable
from scoutgame.game import (
    FEASIBLE_UNCONSTRAINED,
    GameSpec,
    PosteriorZero,
    QuadraticCost,
    posterior_given_zero,
)
from scoutgame.sensitivity import (
    assemble_jacobian,
    check_conditions,
    fd_directional_k,
    fd_jacobian,
    posterior_weight_jacobian,
    sensitivity_report,
    solve_sensitivity,
    tangent_directions,
    total_gradient,
)
from scoutgame.solver import SolverConfig, Stage2Solver, solve_stage2
from scoutgame.towerdefense import build_game, default_params


def _synthetic_spec(rng, m, n, coupling=0.4):
    def spd(k):
        a = rng.standard_normal((k, k))
        return a @ a.T + 2.0 * np.eye(k)

    S = np.stack([spd(n) for _ in range(m)])
    P = np.stack([spd(n) for _ in range(m)])
    T = np.stack([coupling * rng.standard_normal((n, n)) for _ in range(m)])
    d = rng.standard_normal((m, n))
    c = rng.standard_normal((m, n))
    cost1 = QuadraticCost(S, T, np.zeros_like(P), d, np.zeros_like(c))
    cost2 = QuadraticCost(np.zeros_like(S), T, P, np.zeros_like(d), c)
    prior = rng.dirichlet(np.ones(m) * 5.0)
    return GameSpec(m, n, prior, cost1, cost2,
                    feasible1=FEASIBLE_UNCONSTRAINED, feasible2=FEASIBLE_UNCONSTRAINED), S, P, T


def test_posterior_weight_jacobian_matches_finite_differences():
    # ambient partials, checked against the Bayes formula written out directly
    rng = np.random.default_rng(51)
    h = 1e-7
    for _ in range(20):
        m = int(rng.integers(2, 5))
        r = 0.8 * rng.dirichlet(np.ones(m)) + 0.2 / m
        prior = rng.dirichlet(np.ones(m) * 3.0)

        def w_of(rv):
            q = (1.0 - rv) * prior
            return q / q.sum()

        jac = posterior_weight_jacobian(r, prior, tuple(range(m)))
        assert jac.shape == (m, m)
        for k in range(m):
            e = np.zeros(m)
            e[k] = h
            np.testing.assert_allclose(jac[:, k], (w_of(r + e) - w_of(r - e)) / (2 * h), atol=1e-6)
        # weights sum to one, so every column of the jacobian sums to zero
        np.testing.assert_allclose(jac.sum(axis=0), 0.0, atol=1e-12)
        # tangent consistency with the validated posterior map
        t = np.zeros(m)
        t[0], t[1] = h, -h
        fd = (posterior_given_zero(r + t, prior).weights
              - posterior_given_zero(r - t, prior).weights) / 2
        np.testing.assert_allclose(jac @ t, fd, atol=1e-12)


def test_posterior_weight_jacobian_one_world_is_constant():
    out = posterior_weight_jacobian(np.array([1.0]), np.array([1.0]), (0,))
    np.testing.assert_array_equal(out, np.zeros((1, 1)))


def test_unconstrained_blocks_are_the_raw_hessians():
    rng = np.random.default_rng(52)
    spec, S, P, T = _synthetic_spec(rng, 3, 2)
    r = np.array([0.3, 0.45, 0.25])
    sol = solve_stage2(spec, r, config=SolverConfig(pg_iters=0, restarts=2))
    w = sol.posterior.weights
    parts = assemble_jacobian(spec, sol.posterior, sol, r)
    np.testing.assert_allclose(parts.A, sum(w[k] * S[i] for k, i in enumerate(sol.posterior.support)), atol=1e-12)
    for k, i in enumerate(sol.posterior.support):
        np.testing.assert_allclose(parts.B_blocks[k], w[k] * T[i], atol=1e-12)
        np.testing.assert_allclose(parts.C_blocks[k], T[i].T, atol=1e-12)
        np.testing.assert_allclose(parts.D_blocks[k], P[i], atol=1e-12)


def test_full_jacobian_matches_finite_differences():
    rng = np.random.default_rng(53)
    spec, *_ = _synthetic_spec(rng, 2, 3)
    r = np.array([0.4, 0.6])
    sol = solve_stage2(spec, r, config=SolverConfig(pg_iters=0, restarts=2))
    parts = assemble_jacobian(spec, sol.posterior, sol, r)
    fd = fd_jacobian(spec, parts, sol)
    np.testing.assert_allclose(parts.full_jacobian(), fd, atol=1e-5)


def test_schur_determinant_identity_and_dense_solve():
    rng = np.random.default_rng(54)
    for _ in range(20):
        m = int(rng.integers(2, 4))
        n = int(rng.integers(1, 4))
        spec, *_ = _synthetic_spec(rng, m, n)
        r = 0.8 * rng.dirichlet(np.ones(m)) + 0.2 / m
        sol = solve_stage2(spec, r, config=SolverConfig(pg_iters=0, restarts=2))
        parts = assemble_jacobian(spec, sol.posterior, sol, r)
        F = parts.full_jacobian()
        det_d = np.prod([np.linalg.det(dk) for dk in parts.D_blocks])
        E = parts.A - sum(
            bk @ np.linalg.solve(dk, ck)
            for bk, dk, ck in zip(parts.B_blocks, parts.D_blocks, parts.C_blocks)
        )
        det_f = np.linalg.det(F)
        assert det_f == pytest.approx(det_d * np.linalg.det(E), rel=1e-8)
        dz = solve_sensitivity(parts)
        dense = np.linalg.solve(F, -parts.dF_dr)
        np.testing.assert_allclose(dz, dense, atol=1e-10)


def test_world_independent_costs_give_flat_equilibrium():
    # if neither cost depends on the world, reweighting the posterior cannot
    # move the equilibrium: dz/dr = 0
    rng = np.random.default_rng(55)
    spec0, S, P, T = _synthetic_spec(rng, 1, 3)
    m = 3
    rep = lambda a: np.repeat(a, m, axis=0)
    cost1 = QuadraticCost(rep(S), rep(T), np.zeros((m, 3, 3)), rep(spec0.cost1.d), np.zeros((m, 3)))
    cost2 = QuadraticCost(np.zeros((m, 3, 3)), rep(T), rep(P), np.zeros((m, 3)), rep(spec0.cost2.c))
    spec = GameSpec(m, 3, np.full(m, 1.0 / m), cost1, cost2,
                    feasible1=FEASIBLE_UNCONSTRAINED, feasible2=FEASIBLE_UNCONSTRAINED)
    r = np.array([0.2, 0.3, 0.5])
    sol = solve_stage2(spec, r, config=SolverConfig(pg_iters=0, restarts=2))
    parts = assemble_jacobian(spec, sol.posterior, sol, r)
    dz = solve_sensitivity(parts)
    np.testing.assert_allclose(dz, 0.0, atol=1e-10)


def test_dz_dr_predicts_resolved_equilibrium():
    spec = build_game(default_params())
    solver = Stage2Solver(spec)
    r = np.array([0.3, 0.45, 0.25])
    sol = solver.solve(r)
    report = sensitivity_report(spec, r, solution=sol, solver=solver)
    h = 1e-5
    for t in tangent_directions(3):
        plus = solver.solve(r + h * t).subgames[0]
        minus = solver.solve(r - h * t).subgames[0]
        fd = np.concatenate(
            [plus.x1 - minus.x1] + [plus.x2[w] - minus.x2[w] for w in plus.support]
        ) / (2 * h)
        got = report.dz_dr @ t
        np.testing.assert_allclose(got, fd, atol=1e-4)


def test_total_gradient_matches_directional_fd():
    spec = build_game(default_params())
    solver = Stage2Solver(spec)
    for r in (np.array([0.3, 0.45, 0.25]), np.array([0.5, 0.2, 0.3])):
        report = sensitivity_report(spec, r, solver=solver)
        for t in tangent_directions(3):
            fd = fd_directional_k(spec, r, t, solver=solver)
            analytic = float(report.dK_dr @ t)
            denom = max(1e-3, abs(fd))
            assert abs(analytic - fd) / denom < 1e-3


def test_total_gradient_requires_full_support():
    spec = build_game(default_params())
    sol = solve_stage2(spec, np.array([1.0, 0.0, 0.0]))
    dz = np.zeros((12, 3))
    with pytest.raises(GradientUnavailable):
        total_gradient(spec, np.array([1.0, 0.0, 0.0]), sol, dz)


def test_tangent_directions_span_the_tangent_space():
    ts = tangent_directions(3)
    assert len(ts) == 3
    for t in ts:
        assert abs(t.sum()) < 1e-12
        assert np.linalg.norm(t) == pytest.approx(1.0, abs=1e-12)
    stacked = np.stack(ts)
    assert np.linalg.matrix_rank(stacked) == 2


def test_check_conditions_healthy_point():
    spec = build_game(default_params())
    r = np.array([0.3, 0.4, 0.3])
    sol = solve_stage2(spec, r)
    parts = assemble_jacobian(spec, sol.posterior, sol, r)
    report = check_conditions(parts, r)
    assert report["hessians_invertible"]
    assert report["E_invertible"]
    assert report["strict_complementarity"]
    assert report["relative_interior"]
    assert report["min_r"] == pytest.approx(0.3)
    assert len(report["D_conds"]) == 3


def test_check_conditions_flags_boundary_r():
    spec = build_game(default_params())
    r = np.array([0.0, 0.5, 0.5])
    sol = solve_stage2(spec, r)
    parts = assemble_jacobian(spec, sol.posterior, sol, r)
    report = check_conditions(parts, r)
    assert not report["relative_interior"]


def test_weak_multiplier_reassigns_coordinate_and_sets_flag():
    spec = build_game(default_params())
    r = np.full(3, 1.0 / 3.0)
    sol = solve_stage2(spec, r)
    sub = sol.subgames[0]
    parts = assemble_jacobian(spec, sol.posterior, sol, r)
    assert not parts.weak
    # degrade one attacker multiplier to the weak range
    w = sub.support[0]
    idx, _ = sub.active2[w][0]
    doctored_active2 = dict(sub.active2)
    doctored_active2[w] = [(idx, 5e-9)] + sub.active2[w][1:]
    fake_sub = dataclasses.replace(sub, active2=doctored_active2)
    fake = dataclasses.replace(sol, subgames={**sol.subgames, 0: fake_sub})
    parts2 = assemble_jacobian(spec, fake.posterior, fake, r)
    assert parts2.weak
    # the weakly-active coordinate is treated as free: one more column in Z2
    k = parts2.support.index(w)
    assert parts2.Z2[k].shape[1] == parts.Z2[k].shape[1] + 1


def test_sensitivity_report_serializes():
    spec = build_game(default_params())
    report = sensitivity_report(spec, np.array([0.25, 0.5, 0.25]))
    payload = report.to_dict()
    assert set(payload) >= {"dK_dr", "dz_dr", "conditions"}
    assert np.all(np.isfinite(np.asarray(payload["dK_dr"])))
