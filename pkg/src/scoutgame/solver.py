"""Equilibrium solver for the stage-2 subgames.

Each subgame couples the uninformed player's single decision vector with one
decision vector per supported world for the informed player. Equilibria are
computed as roots of the stacked KKT-reduced first-order system: a projected
pseudo-gradient warm-up locates the active face, then a damped active-set
Newton method polishes to tight residuals. Multi-start with deterministic
seeding guards against non-equilibrium stationary points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NoConvergence
from .game import (
    FEASIBLE_SIMPLEX,
    GameSpec,
    PosteriorZero,
    as_signal,
    posterior_given_zero,
)
from .simplex import embed_basis, project_simplex, random_simplex

ACTIVE_TOL = 1e-8
MULTIPLIER_TOL = 1e-8
CURVATURE_TOL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    residual_tol: float = 1e-10
    max_iters: int = 200
    restarts: int = 8
    seed: int = 7041
    pg_iters: int = 150
    pg_step: float = 0.25

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 0 or self.pg_iters < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.residual_tol < 0 or self.pg_step <= 0:
            raise ValueError("residual_tol must be >= 0 and pg_step > 0")


@dataclass(frozen=True, eq=False)
class SubgameResult:
    """Solution of one subgame (perfect-information or pooled)."""

    support: tuple
    weights: np.ndarray
    x1: np.ndarray
    x2: dict
    residual_norm: float
    converged: bool
    iterations: int
    active1: list
    active2: dict
    complementarity: str
    player1_value: float
    second_order_ok: bool
    deviation_ok: bool


@dataclass(frozen=True, eq=False)
class Stage2Solution:
    """Equilibrium policies for every signal realization.

    ``x1`` maps signal -> uninformed-player vector; ``x2`` maps
    (signal, world) -> informed-player vector. ``subgames`` keeps the full
    per-subgame diagnostics keyed by signal.
    """

    x1: dict
    x2: dict
    subgames: dict
    posterior: Optional[PosteriorZero]

    def subgame(self, sigma: int) -> SubgameResult:
        return self.subgames[sigma]


class _PlayerState:
    """One decision vector with its feasibility handling."""

    __slots__ = ("x", "feasible", "active")

    def __init__(self, x: np.ndarray, feasible: str):
        self.x = np.asarray(x, dtype=float).copy()
        self.feasible = feasible
        self.active = np.zeros(self.x.size, dtype=bool)
        self.refresh_active()

    def clone(self) -> "_PlayerState":
        other = object.__new__(_PlayerState)
        other.x = self.x.copy()
        other.feasible = self.feasible
        other.active = self.active.copy()
        return other

    def refresh_active(self):
        if self.feasible == FEASIBLE_SIMPLEX:
            self.active = self.x <= ACTIVE_TOL
            if self.active.all():
                # keep the largest coordinate free so the face is nonempty
                self.active[int(np.argmax(self.x))] = False
            self.x[self.active] = 0.0
            s = self.x.sum()
            if s > 0:
                self.x /= s
        else:
            self.active = np.zeros(self.x.size, dtype=bool)

    def basis(self) -> np.ndarray:
        if self.feasible == FEASIBLE_SIMPLEX:
            return embed_basis(~self.active)
        return np.eye(self.x.size)

    def residual_parts(self, g: np.ndarray):
        """(tangent residual, dual-violation residual, multipliers on active)."""
        if self.feasible == FEASIBLE_SIMPLEX:
            free = ~self.active
            lam = g[free].mean()
            res_free = g[free] - lam
            mu = g[self.active] - lam
            res_dual = np.minimum(mu, 0.0)
            return res_free, res_dual, mu
        return g, np.zeros(0), np.zeros(0)

    def release(self, idx_local: int):
        """Free the active coordinate with the given position in the active list."""
        idx = np.nonzero(self.active)[0][idx_local]
        self.active[idx] = False

    def step(self, dx: np.ndarray):
        """Take the longest feasible fraction of dx; returns the fraction."""
        if self.feasible != FEASIBLE_SIMPLEX:
            self.x = self.x + dx
            return 1.0
        t = 1.0
        free = ~self.active
        neg = free & (dx < 0)
        if neg.any():
            ratios = self.x[neg] / -dx[neg]
            t = min(1.0, float(ratios.min()))
        self.x = self.x + t * dx
        self.x[self.x < 1e-15] = 0.0
        return t

    def project_gradient_step(self, g: np.ndarray, eta: float):
        if self.feasible == FEASIBLE_SIMPLEX:
            self.x = project_simplex(self.x - eta * g)
        else:
            self.x = self.x - eta * g


class _Subgame:
    """Stationarity system for one subgame of the second stage.

    ``support`` lists the worlds the informed player may inhabit and
    ``weights`` their posterior probabilities. A perfect-information subgame
    is the special case of a single world with weight one.
    """

    def __init__(self, spec: GameSpec, support, weights):
        self.spec = spec
        self.support = tuple(int(w) for w in support)
        self.weights = np.asarray(weights, dtype=float)
        self.n = spec.n

    def blocks(self, x1, x2_list):
        out = []
        for w, x2 in zip(self.support, x2_list):
            out.append(self.spec.stationarity_blocks(x1, x2, w))
        return out

    def gradients(self, x1, x2_list):
        blocks = self.blocks(x1, x2_list)
        g1 = np.zeros(self.n)
        g2 = []
        for wgt, blk in zip(self.weights, blocks):
            g1 += wgt * blk[0]
            g2.append(blk[3])
        return g1, g2, blocks

    def player1_value(self, x1, x2_list) -> float:
        val = 0.0
        for wgt, w, x2 in zip(self.weights, self.support, x2_list):
            val += wgt * self.spec.cost1.value(x1, x2, w)
        return float(val)

    def solve_from(self, p1: _PlayerState, p2s, config: SolverConfig):
        """Polish one start with projected gradients then active-set Newton."""
        tol = config.residual_tol
        for t in range(config.pg_iters):
            g1, g2, _ = self.gradients(p1.x, [p.x for p in p2s])
            eta = config.pg_step / (1.0 + t / 25.0)
            p1.project_gradient_step(g1, eta)
            for g, p in zip(g2, p2s):
                p.project_gradient_step(g, eta)
        p1.refresh_active()
        for p in p2s:
            p.refresh_active()

        iterations = 0
        res_norm = np.inf
        stall = 0
        for it in range(config.max_iters):
            iterations = it + 1
            g1, g2, blocks = self.gradients(p1.x, [p.x for p in p2s])
            free_res, dual_res, parts = self._residual(p1, p2s, g1, g2)
            free_norm = float(np.max(np.abs(free_res))) if free_res.size else 0.0
            dual_norm = float(np.max(np.abs(dual_res))) if dual_res.size else 0.0
            res_norm = max(free_norm, dual_norm)
            if free_norm < tol:
                if dual_norm < tol:
                    break
                # stationary on the face but a bound wants to release
                self._release_worst(p1, p2s, parts)
                continue

            step_players, clipped, direction_norm = self._newton_step(
                p1, p2s, g1, g2, blocks
            )
            if step_players is None:
                break
            new_norm = self._trial_residual(step_players)
            if clipped or new_norm < res_norm * (1.0 - 1e-4):
                self._commit(p1, p2s, step_players)
                stall = 0
                continue
            # damped backtracking on the residual norm
            accepted = False
            scale = 0.5
            for _ in range(30):
                trial_players = self._apply_direction(p1, p2s, scale)
                trial_clipped = self._last_clipped
                new_norm = self._trial_residual(trial_players)
                if trial_clipped or new_norm < res_norm * (1.0 - 1e-4 * scale):
                    self._commit(p1, p2s, trial_players)
                    accepted = True
                    stall = 0
                    break
                scale *= 0.5
            if not accepted:
                stall += 1
                if stall >= 2:
                    break
                # brief projected-gradient burst to escape the stall
                for t in range(25):
                    g1, g2, _ = self.gradients(p1.x, [p.x for p in p2s])
                    eta = 0.05 / (1.0 + t / 10.0)
                    p1.project_gradient_step(g1, eta)
                    for g, p in zip(g2, p2s):
                        p.project_gradient_step(g, eta)
                p1.refresh_active()
                for p in p2s:
                    p.refresh_active()
        return res_norm, iterations

    # -- Newton machinery -------------------------------------------------

    _pending_direction = None
    _last_clipped = False

    def _residual(self, p1, p2s, g1, g2):
        f1, d1, mu1 = p1.residual_parts(g1)
        free = [f1]
        dual = [d1]
        parts = [("p1", None, mu1)]
        for k, (g, p) in enumerate(zip(g2, p2s)):
            f, d, mu = p.residual_parts(g)
            free.append(f)
            dual.append(d)
            parts.append(("p2", k, mu))
        return np.concatenate(free), np.concatenate(dual), parts

    def _release_worst(self, p1, p2s, parts):
        worst = None
        for tag, k, mu in parts:
            if mu.size == 0:
                continue
            j = int(np.argmin(mu))
            if mu[j] < -MULTIPLIER_TOL and (worst is None or mu[j] < worst[0]):
                worst = (mu[j], tag, k, j)
        if worst is None:
            return
        _, tag, k, j = worst
        if tag == "p1":
            p1.release(j)
        else:
            p2s[k].release(j)

    def _newton_step(self, p1, p2s, g1, g2, blocks):
        z1 = p1.basis()
        z2 = [p.basis() for p in p2s]
        k1 = z1.shape[1]
        k2 = [z.shape[1] for z in z2]
        dim = k1 + sum(k2)
        if dim == 0:
            return None, False, 0.0

        h11 = np.zeros((self.n, self.n))
        for wgt, blk in zip(self.weights, blocks):
            h11 += wgt * blk[1]
        mat = np.zeros((dim, dim))
        rhs = np.zeros(dim)
        mat[:k1, :k1] = z1.T @ h11 @ z1
        rhs[:k1] = z1.T @ g1
        off = k1
        for wgt, blk, zb, kk, g in zip(self.weights, blocks, z2, k2, g2):
            _, _, h12, _, h22, h21 = blk
            mat[:k1, off : off + kk] = wgt * (z1.T @ h12 @ zb)
            mat[off : off + kk, :k1] = zb.T @ h21 @ z1
            mat[off : off + kk, off : off + kk] = zb.T @ h22 @ zb
            rhs[off : off + kk] = zb.T @ g
            off += kk

        try:
            du = np.linalg.solve(mat, -rhs)
        except np.linalg.LinAlgError:
            du, *_ = np.linalg.lstsq(mat, -rhs, rcond=None)
        if not np.all(np.isfinite(du)):
            return None, False, 0.0
        norm = float(np.max(np.abs(du))) if du.size else 0.0
        if norm > 1e8:
            du *= 1e8 / norm

        dx1 = z1 @ du[:k1]
        dx2 = []
        off = k1
        for zb, kk in zip(z2, k2):
            dx2.append(zb @ du[off : off + kk])
            off += kk
        self._pending_direction = (dx1, dx2)
        trials = self._apply_direction(p1, p2s, 1.0)
        return trials, self._last_clipped, norm

    def _apply_direction(self, p1, p2s, scale):
        dx1, dx2 = self._pending_direction
        trial1 = p1.clone()
        t1 = trial1.step(scale * dx1)
        clipped = t1 < 1.0
        trials = [trial1]
        for p, dx in zip(p2s, dx2):
            tp = p.clone()
            t = tp.step(scale * dx)
            clipped = clipped or t < 1.0
            trials.append(tp)
        for tp in trials:
            tp.refresh_active()
        self._last_clipped = clipped
        return trials

    def _trial_residual(self, trial_players):
        p1 = trial_players[0]
        p2s = trial_players[1:]
        g1, g2, _ = self.gradients(p1.x, [p.x for p in p2s])
        free_res, dual_res, _ = self._residual(p1, p2s, g1, g2)
        fn = float(np.max(np.abs(free_res))) if free_res.size else 0.0
        dn = float(np.max(np.abs(dual_res))) if dual_res.size else 0.0
        return max(fn, dn)

    def _commit(self, p1, p2s, trial_players):
        p1.x = trial_players[0].x
        p1.active = trial_players[0].active
        for p, tp in zip(p2s, trial_players[1:]):
            p.x = tp.x
            p.active = tp.active

    # -- candidate assessment ---------------------------------------------

    def second_order_ok(self, p1, p2s) -> bool:
        """Own-block reduced Hessians must be PSD for a local equilibrium."""
        blocks = self.blocks(p1.x, [p.x for p in p2s])
        z1 = p1.basis()
        h11 = np.zeros((self.n, self.n))
        for wgt, blk in zip(self.weights, blocks):
            h11 += wgt * blk[1]
        red = z1.T @ h11 @ z1
        if red.size and np.linalg.eigvalsh(red).min() < -CURVATURE_TOL:
            return False
        for p, blk in zip(p2s, blocks):
            zb = p.basis()
            red2 = zb.T @ blk[4] @ zb
            if red2.size and np.linalg.eigvalsh(red2).min() < -CURVATURE_TOL:
                return False
        return True

    def deviation_ok(self, p1, p2s) -> bool:
        """Reject stationary points with a profitable coarse deviation.

        Candidate deviations are the feasible-set vertices plus the center.
        The informed player's problem is own-convex in the experiments, so a
        vertex sweep is decisive there; for other players it is a cheap
        screen against coordinated non-equilibrium rest points.
        """
        x2_list = [p.x for p in p2s]
        base1 = self.player1_value(p1.x, x2_list)
        tol = 1e-9 * max(1.0, abs(base1))
        for trial in self._coarse_points(self.spec.feasible1):
            if self.player1_value(trial, x2_list) < base1 - tol:
                return False
        for w, p in zip(self.support, p2s):
            base2 = self.spec.cost2.value(p1.x, p.x, w)
            tol2 = 1e-9 * max(1.0, abs(base2))
            for trial in self._coarse_points(self.spec.feasible2):
                if self.spec.cost2.value(p1.x, trial, w) < base2 - tol2:
                    return False
        return True

    def _coarse_points(self, feasible):
        if feasible == FEASIBLE_SIMPLEX:
            pts = list(np.eye(self.n))
            pts.append(np.full(self.n, 1.0 / self.n))
            return pts
        return []

    def multipliers(self, p1, p2s):
        g1, g2, _ = self.gradients(p1.x, [p.x for p in p2s])
        _, _, parts = self._residual(p1, p2s, g1, g2)
        act1 = [
            (int(i), float(mu))
            for i, mu in zip(np.nonzero(p1.active)[0], parts[0][2])
        ]
        act2 = {}
        for (tag, k, mu), p in zip(parts[1:], p2s):
            act2[self.support[k]] = [
                (int(i), float(m)) for i, m in zip(np.nonzero(p.active)[0], mu)
            ]
        return act1, act2

    # -- driver -------------------------------------------------------------

    def solve(self, config: SolverConfig, seed_salt) -> SubgameResult:
        rng = np.random.default_rng([config.seed, *seed_salt])
        candidates = []
        best_fail = None
        for start in range(config.restarts):
            p1 = _PlayerState(self._start_point(rng, self.spec.feasible1), self.spec.feasible1)
            p2s = [
                _PlayerState(self._start_point(rng, self.spec.feasible2), self.spec.feasible2)
                for _ in self.support
            ]
            res_norm, iters = self.solve_from(p1, p2s, config)
            if res_norm < config.residual_tol:
                so_ok = self.second_order_ok(p1, p2s)
                dev_ok = self.deviation_ok(p1, p2s)
                value = self.player1_value(p1.x, [p.x for p in p2s])
                key = np.round(
                    np.concatenate([p1.x] + [p.x for p in p2s]), 12
                ).tobytes()
                candidates.append(
                    (not dev_ok, not so_ok, value, key, res_norm, iters, p1, p2s)
                )
            else:
                if best_fail is None or res_norm < best_fail[0]:
                    best_fail = (res_norm, p1, p2s)
        if not candidates:
            raise NoConvergence(
                "no equilibrium candidate converged after "
                f"{config.restarts} restarts",
                best=(best_fail[1].x, [p.x for p in best_fail[2]]) if best_fail else None,
                residual=best_fail[0] if best_fail else None,
            )
        candidates.sort(key=lambda c: (c[0], c[1], c[2], c[3]))
        not_dev, not_so, value, _, res_norm, iters, p1, p2s = candidates[0]
        act1, act2 = self.multipliers(p1, p2s)
        weak = any(abs(mu) <= MULTIPLIER_TOL for _, mu in act1) or any(
            abs(mu) <= MULTIPLIER_TOL for lst in act2.values() for _, mu in lst
        )
        return SubgameResult(
            support=self.support,
            weights=self.weights.copy(),
            x1=p1.x.copy(),
            x2={w: p.x.copy() for w, p in zip(self.support, p2s)},
            residual_norm=res_norm,
            converged=True,
            iterations=iters,
            active1=act1,
            active2=act2,
            complementarity="weak" if weak else "strict",
            player1_value=value,
            second_order_ok=not not_so,
            deviation_ok=not not_dev,
        )

    def _start_point(self, rng, feasible):
        if feasible == FEASIBLE_SIMPLEX:
            return random_simplex(rng, self.n)
        return rng.standard_normal(self.n)


# -- public API -------------------------------------------------------------


def solve_perfect_info(spec: GameSpec, world: int, config: Optional[SolverConfig] = None) -> SubgameResult:
    """Equilibrium of the subgame where the world is common knowledge."""
    config = config or SolverConfig()
    sub = _Subgame(spec, (world,), (1.0,))
    return sub.solve(config, seed_salt=(1, world))


def solve_imperfect_info(
    spec: GameSpec, posterior: PosteriorZero, config: Optional[SolverConfig] = None
) -> SubgameResult:
    """Equilibrium of the pooled subgame under the null-signal posterior."""
    config = config or SolverConfig()
    sub = _Subgame(spec, posterior.support, posterior.weights)
    return sub.solve(config, seed_salt=(2,))


class Stage2Solver:
    """Solves the full second stage, caching the signal-independent subgames.

    Perfect-information subgames do not depend on the scouting allocation, so
    they are solved once per game and reused across every allocation query.
    """

    def __init__(self, spec: GameSpec, config: Optional[SolverConfig] = None):
        self.spec = spec
        self.config = config or SolverConfig()
        self._perfect: dict = {}

    def perfect(self, world: int) -> SubgameResult:
        if world not in self._perfect:
            self._perfect[world] = solve_perfect_info(self.spec, world, self.config)
        return self._perfect[world]

    def solve(self, r, pool_full_prior: bool = False) -> Stage2Solution:
        """Solve every reachable subgame for the allocation ``r``.

        ``pool_full_prior`` forces the null-signal posterior to equal the
        prior (as if no direction were ever detected); used to check the
        degenerate-signal reduction against a direct Bayesian solve.
        """
        sig = as_signal(r)
        spec = self.spec
        if pool_full_prior:
            posterior = PosteriorZero(
                support=tuple(range(spec.m)), weights=spec.prior.copy()
            )
            pooled = solve_imperfect_info(spec, posterior, self.config)
            x1 = {0: pooled.x1}
            x2 = {(0, w): pooled.x2[w] for w in pooled.support}
            return Stage2Solution(x1=x1, x2=x2, subgames={0: pooled}, posterior=posterior)

        posterior = posterior_given_zero(sig, spec.prior)
        pooled = solve_imperfect_info(spec, posterior, self.config)
        x1 = {0: pooled.x1}
        x2 = {(0, w): pooled.x2[w] for w in pooled.support}
        subgames = {0: pooled}
        for world in range(spec.m):
            res = self.perfect(world)
            sigma = world + 1
            x1[sigma] = res.x1
            x2[(sigma, world)] = res.x2[world]
            subgames[sigma] = res
        return Stage2Solution(x1=x1, x2=x2, subgames=subgames, posterior=posterior)


def solve_stage2(
    spec: GameSpec,
    r,
    config: Optional[SolverConfig] = None,
    solver: Optional[Stage2Solver] = None,
    pool_full_prior: bool = False,
) -> Stage2Solution:
    """One-shot second-stage solve; pass a ``Stage2Solver`` to reuse caches."""
    if solver is None:
        solver = Stage2Solver(spec, config)
    return solver.solve(r, pool_full_prior=pool_full_prior)


def stationarity_residual(spec: GameSpec, solution: Stage2Solution) -> dict:
    """Recompute the KKT-reduced residual max-norm of each subgame."""
    out = {}
    for sigma, res in solution.subgames.items():
        sub = _Subgame(spec, res.support, res.weights)
        p1 = _PlayerState(res.x1, spec.feasible1)
        p2s = [_PlayerState(res.x2[w], spec.feasible2) for w in res.support]
        g1, g2, _ = sub.gradients(p1.x, [p.x for p in p2s])
        free_res, dual_res, _ = sub._residual(p1, p2s, g1, g2)
        fn = float(np.max(np.abs(free_res))) if free_res.size else 0.0
        dn = float(np.max(np.abs(dual_res))) if dual_res.size else 0.0
        out[sigma] = max(fn, dn)
    return out


def nash_verify(
    spec: GameSpec,
    solution: Stage2Solution,
    samples: int = 1000,
    radius: float = 1e-2,
    seed: int = 0,
) -> dict:
    """Best cost improvement found by random feasible unilateral deviations.

    For every subgame, perturbs one player at a time inside a ball of the
    given radius (projected back to the feasible set) and records the largest
    cost decrease observed. Values <= 0 mean no profitable deviation was
    found. Returns {(sigma, player[, world]): improvement} plus "max".
    """
    rng = np.random.default_rng(seed)
    report = {}
    worst = -np.inf
    for sigma, res in solution.subgames.items():
        x1 = res.x1
        base1 = 0.0
        for wgt, w in zip(res.weights, res.support):
            base1 += wgt * spec.cost1.value(x1, res.x2[w], w)
        best = -np.inf
        for _ in range(samples):
            trial = _perturb(rng, x1, radius, spec.feasible1)
            val = 0.0
            for wgt, w in zip(res.weights, res.support):
                val += wgt * spec.cost1.value(trial, res.x2[w], w)
            best = max(best, base1 - val)
        report[(sigma, 1)] = float(best)
        worst = max(worst, best)
        for w in res.support:
            x2 = res.x2[w]
            base2 = spec.cost2.value(x1, x2, w)
            best = -np.inf
            for _ in range(samples):
                trial = _perturb(rng, x2, radius, spec.feasible2)
                best = max(best, base2 - spec.cost2.value(x1, trial, w))
            report[(sigma, 2, w)] = float(best)
            worst = max(worst, best)
    report["max"] = float(worst)
    return report


def _perturb(rng, x, radius, feasible):
    u = rng.standard_normal(x.size)
    norm = np.linalg.norm(u)
    if norm == 0:
        return x.copy()
    u *= radius * rng.uniform() ** (1.0 / x.size) / norm
    if feasible == FEASIBLE_SIMPLEX:
        return project_simplex(x + u)
    return x + u
