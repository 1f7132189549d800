"""Game description, signal/world probability model, and the stage-1 objective.

Worlds are indexed 0..m-1. Signals are integers 0..m where signal s >= 1
certifies world s-1 (there are no false positives) and signal 0 means "no
detection". The detection-rate vector r lives on the (m-1)-simplex and fully
determines the signal structure: p(s=i+1 | world i) = r[i].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateSignal, MissingPolicy

PROB_TOL = 1e-12
FEASIBLE_UNCONSTRAINED = "unconstrained"
FEASIBLE_SIMPLEX = "simplex"

#: signal s >= 1 certifies this world
def world_of_signal(sigma: int) -> int:
    return sigma - 1


class CostFunction:
    """Twice-differentiable cost J(x1, x2; world) with derivative access.

    Subclasses implement `value`, `grad` and `hess`. `arg` selects the
    differentiation variable (1 or 2); Hessian blocks are indexed by the
    (row, column) variable pair, e.g. hess(..., 1, 2) has shape (n, n) with
    rows indexed by x1 and columns by x2.
    """

    def value(self, x1: np.ndarray, x2: np.ndarray, world: int) -> float:
        raise NotImplementedError

    def grad(self, x1: np.ndarray, x2: np.ndarray, world: int, arg: int) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x1: np.ndarray, x2: np.ndarray, world: int, a: int, b: int) -> np.ndarray:
        raise NotImplementedError

    def value_many(self, x1_stack: np.ndarray, x2_stack: np.ndarray, world: int) -> np.ndarray:
        """Values for N paired points; subclasses may vectorize."""
        return np.array(
            [self.value(x1_stack[i], x2_stack[i], world) for i in range(x1_stack.shape[0])]
        )


class QuadraticCost(CostFunction):
    """World-indexed quadratic cost, mainly for synthetic test games.

    J(x1, x2; w) = 1/2 x1' S[w] x1 + x1' T[w] x2 + 1/2 x2' P[w] x2
                   + d[w]' x1 + c[w]' x2
    """

    def __init__(self, S, T, P, d, c):
        self.S = np.asarray(S, dtype=float)
        self.T = np.asarray(T, dtype=float)
        self.P = np.asarray(P, dtype=float)
        self.d = np.asarray(d, dtype=float)
        self.c = np.asarray(c, dtype=float)

    def value(self, x1, x2, world):
        S, T, P = self.S[world], self.T[world], self.P[world]
        return float(
            0.5 * x1 @ S @ x1
            + x1 @ T @ x2
            + 0.5 * x2 @ P @ x2
            + self.d[world] @ x1
            + self.c[world] @ x2
        )

    def grad(self, x1, x2, world, arg):
        S, T, P = self.S[world], self.T[world], self.P[world]
        if arg == 1:
            return S @ x1 + T @ x2 + self.d[world]
        return T.T @ x1 + P @ x2 + self.c[world]

    def hess(self, x1, x2, world, a, b):
        if (a, b) == (1, 1):
            return self.S[world].copy()
        if (a, b) == (1, 2):
            return self.T[world].copy()
        if (a, b) == (2, 1):
            return self.T[world].T.copy()
        return self.P[world].copy()


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


def _check_probability_vector(p: np.ndarray, name: str) -> None:
    if p.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if np.any(p < -PROB_TOL):
        raise ValueError(f"{name} has negative entries: {p}")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{name} must sum to 1 (got {p.sum()!r})")


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Two-player parameterized game with world-dependent costs.

    Player 1 does not observe the world; player 2 does. `feasible1` and
    `feasible2` are either "unconstrained" or "simplex" (the unit simplex of
    dimension n).
    """

    m: int
    n: int
    prior: np.ndarray
    cost1: CostFunction
    cost2: CostFunction
    feasible1: str = FEASIBLE_SIMPLEX
    feasible2: str = FEASIBLE_SIMPLEX
    # optional fused evaluator returning (g1, h11, h12, g2, h22, h21) for the
    # stationarity system in one call; used by fast cost families
    fused_blocks: Optional[Callable] = None

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive")
        object.__setattr__(self, "prior", _frozen(self.prior))
        if self.prior.shape != (self.m,):
            raise ValueError("prior length must equal m")
        _check_probability_vector(self.prior, "prior")
        for fs in (self.feasible1, self.feasible2):
            if fs not in (FEASIBLE_UNCONSTRAINED, FEASIBLE_SIMPLEX):
                raise ValueError(f"unknown feasible set {fs!r}")

    def stationarity_blocks(self, x1, x2, world):
        """Gradient/Hessian blocks entering the stationarity system at one point.

        Returns (g1, h11, h12, g2, h22, h21) where the first three derive from
        player 1's cost and the rest from player 2's.
        """
        if self.fused_blocks is not None:
            return self.fused_blocks(x1, x2, world)
        g1 = self.cost1.grad(x1, x2, world, 1)
        h11 = self.cost1.hess(x1, x2, world, 1, 1)
        h12 = self.cost1.hess(x1, x2, world, 1, 2)
        g2 = self.cost2.grad(x1, x2, world, 2)
        h22 = self.cost2.hess(x1, x2, world, 2, 2)
        h21 = self.cost2.hess(x1, x2, world, 2, 1)
        return g1, h11, h12, g2, h22, h21

    def feasible_center(self, player: int) -> np.ndarray:
        fs = self.feasible1 if player == 1 else self.feasible2
        if fs == FEASIBLE_SIMPLEX:
            return np.full(self.n, 1.0 / self.n)
        return np.zeros(self.n)

    def check_derivatives(self, rng=None, points: int = 5, step: float = 1e-6) -> dict:
        """Compare analytic derivatives against central finite differences.

        Evaluates at random interior points and returns the maximum relative
        error per derivative kind. Interior points are simplex-interior when
        the feasible set is the simplex, standard-normal otherwise.
        """
        rng = np.random.default_rng(rng)
        worst = {"grad": 0.0, "hess": 0.0}
        for _ in range(points):
            x1 = self._random_interior(self.feasible1, rng)
            x2 = self._random_interior(self.feasible2, rng)
            w = int(rng.integers(self.m))
            for cost in (self.cost1, self.cost2):
                for arg in (1, 2):
                    g = cost.grad(x1, x2, w, arg)
                    g_fd = _fd_grad(cost.value, x1, x2, w, arg, step)
                    worst["grad"] = max(worst["grad"], _rel_err(g, g_fd))
                    for b in (1, 2):
                        h = cost.hess(x1, x2, w, arg, b)
                        h_fd = _fd_jac(lambda u1, u2: cost.grad(u1, u2, w, arg), x1, x2, b, step)
                        worst["hess"] = max(worst["hess"], _rel_err(h, h_fd))
        return worst

    def _random_interior(self, fs, rng):
        if fs == FEASIBLE_SIMPLEX:
            return 0.9 * rng.dirichlet(np.ones(self.n)) + 0.1 / self.n
        return rng.standard_normal(self.n)


def _rel_err(a, b):
    denom = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / denom


def _fd_grad(f, x1, x2, w, arg, step):
    x = (x1 if arg == 1 else x2).astype(float)
    out = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        if arg == 1:
            out[j] = (f(x + e, x2, w) - f(x - e, x2, w)) / (2 * step)
        else:
            out[j] = (f(x1, x + e, w) - f(x1, x - e, w)) / (2 * step)
    return out


def _fd_jac(g, x1, x2, wrt, step):
    x = (x1 if wrt == 1 else x2).astype(float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        if wrt == 1:
            cols.append((g(x + e, x2) - g(x - e, x2)) / (2 * step))
        else:
            cols.append((g(x1, x + e) - g(x1, x - e)) / (2 * step))
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class SignalStructure:
    """Detection rates r on the (m-1)-simplex; r[i] = p(signal i+1 | world i)."""

    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", _frozen(self.r))
        if self.r.ndim != 1:
            raise ValueError("r must be a vector")
        if np.any(self.r < -PROB_TOL) or np.any(self.r > 1.0 + PROB_TOL):
            raise ValueError(f"r entries must lie in [0, 1]: {self.r}")
        if abs(self.r.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"r must sum to 1 (got {self.r.sum()!r})")

    @property
    def m(self) -> int:
        return self.r.size

    def miss_rates(self) -> np.ndarray:
        """p(signal 0 | world i) = 1 - r[i]."""
        return 1.0 - self.r


def as_signal(r) -> "SignalStructure":
    """Coerce an allocation vector (or SignalStructure) to a SignalStructure."""
    if isinstance(r, SignalStructure):
        return r
    return SignalStructure(np.asarray(r, dtype=float))


@dataclass(frozen=True, eq=False)
class PosteriorZero:
    """Posterior over worlds conditioned on the no-detection signal.

    `support` lists world indices with positive no-detection probability;
    `weights` aligns with `support`.
    """

    support: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(int(i) for i in self.support))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if len(self.support) != self.weights.size:
            raise ValueError("support and weights must align")
        _check_probability_vector(self.weights, "posterior weights")

    @classmethod
    def point_mass(cls, world: int) -> "PosteriorZero":
        return cls(support=(world,), weights=np.array([1.0]))


def posterior_given_zero(r: SignalStructure, prior: np.ndarray) -> PosteriorZero:
    """Bayes posterior p(world | signal 0) under the no-false-positive model.

    Worlds with detection rate 1 (within tolerance) are dropped from the
    support. Raises DegenerateSignal when signal 0 itself has (numerically)
    zero probability.
    """
    r = as_signal(r)
    prior = np.asarray(prior, dtype=float)
    _check_probability_vector(prior, "prior")
    miss = r.miss_rates()
    joint = miss * prior
    total = joint.sum()
    if total <= 1e-14:
        raise DegenerateSignal("signal 0 has zero probability; no imperfect-information subgame")
    support = tuple(i for i in range(r.m) if miss[i] > PROB_TOL)
    weights = joint[list(support)] / total
    return PosteriorZero(support=support, weights=weights)


def joint_probabilities(r: SignalStructure, prior: np.ndarray) -> np.ndarray:
    """Tabulate p(signal, world) as an (m+1) x m matrix; row 0 is no-detection."""
    r = as_signal(r)
    prior = np.asarray(prior, dtype=float)
    _check_probability_vector(prior, "prior")
    m = r.m
    out = np.zeros((m + 1, m))
    out[0, :] = r.miss_rates() * prior
    for i in range(m):
        out[i + 1, i] = r.r[i] * prior[i]
    return out


def stage1_terms(sol, r: SignalStructure, spec: GameSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-world contributions to the stage-1 expected cost.

    Returns (detect, miss), each of length m:
      detect[i] = r[i] p[i] J1(x1(i+1), x2(i+1, i); i)
      miss[i]   = (1 - r[i]) p[i] J1(x1(0), x2(0, i); i)
    Terms whose probability weight vanishes (within tolerance) are zero and
    require no policy entry; any other absent entry raises MissingPolicy.
    """
    r = as_signal(r)
    m, prior = spec.m, spec.prior
    detect = np.zeros(m)
    miss = np.zeros(m)
    for i in range(m):
        w_detect = r.r[i] * prior[i]
        if w_detect > 0.0:
            sigma = i + 1
            if sigma not in sol.x1 or (sigma, i) not in sol.x2:
                raise MissingPolicy(f"no policy for signal {sigma}, world {i}")
            detect[i] = w_detect * spec.cost1.value(sol.x1[sigma], sol.x2[(sigma, i)], i)
        w_miss = (1.0 - r.r[i]) * prior[i]
        if (1.0 - r.r[i]) > PROB_TOL and prior[i] > 0.0:
            if 0 not in sol.x1 or (0, i) not in sol.x2:
                raise MissingPolicy(f"no policy for signal 0, world {i}")
            miss[i] = w_miss * spec.cost1.value(sol.x1[0], sol.x2[(0, i)], i)
    return detect, miss


def stage1_cost(sol, r: SignalStructure, spec: GameSpec) -> float:
    """Stage-1 expected cost of player 1 at the given stage-2 solution."""
    detect, miss = stage1_terms(sol, r, spec)
    return float(detect.sum() + miss.sum())
