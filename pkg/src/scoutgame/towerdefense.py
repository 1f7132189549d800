"""Zero-sum tower-defense game: a smooth Colonel Blotto variant.

The defender (player 1) and attacker (player 2) split unit resources over n
directions. In world w the attacker's allocation in direction j is scaled by
a force multiplier B[w, j]; direction w carries the largest multiplier, so
each world encodes a preferred attack direction. Per-direction damage is the
gated quadratic phi(d) = zeta(d) * d^2 where d = B[w, j]*x2[j] - x1[j] and
zeta is a logistic gate with sharpness k: the attacker scores only where its
scaled force exceeds the defense. The attacker minimizes J2 = -sum_j phi(d_j)
and the game is zero-sum (J1 = -J2).

Action dimension equals world count for this family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidPreference
from .game import CostFunction, GameSpec, _frozen

DEFAULT_PREFERENCES = np.array(
    [
        [3.0, 2.0, 2.0],
        [2.0, 3.0, 2.0],
        [2.0, 2.0, 3.0],
    ]
)
DEFAULT_SHARPNESS = 10.0


def zeta(delta: float, sharpness: float):
    """Logistic activation 1 / (1 + exp(-2*k*delta)); saturates to {0, 1}."""
    return _kernels.zeta_values(delta, sharpness)


@dataclass(frozen=True, eq=False)
class TowerDefenseParams:
    """Preference matrix, gate sharpness, prior, and the risk perturbation.

    `theta` is added to the (0, 0) entry of B, making world 0's preferred
    direction carry a larger multiplier than the other worlds' preferred
    directions.
    """

    B: np.ndarray
    sharpness: float = DEFAULT_SHARPNESS
    prior: np.ndarray = None
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "B", _frozen(self.B))
        m = self.B.shape[0]
        if self.B.shape != (m, m):
            raise InvalidPreference("preference matrix must be square")
        if self.prior is None:
            object.__setattr__(self, "prior", _frozen(np.full(m, 1.0 / m)))
        else:
            object.__setattr__(self, "prior", _frozen(self.prior))
        if self.sharpness <= 0:
            raise ValueError("sharpness must be positive")
        _validate_preferences(self.effective_preferences())

    @property
    def m(self) -> int:
        return self.B.shape[0]

    def effective_preferences(self) -> np.ndarray:
        """B with the theta perturbation applied to entry (0, 0)."""
        out = self.B.copy()
        out[0, 0] += self.theta
        return out


def _validate_preferences(B: np.ndarray) -> None:
    if np.any(B <= 0.0):
        raise InvalidPreference("force multipliers must be strictly positive")
    for i in range(B.shape[0]):
        off = np.delete(B[i], i)
        if np.any(off >= B[i, i]):
            raise InvalidPreference(
                f"row {i}: diagonal multiplier must strictly dominate the row"
            )


def default_params(theta: float = 0.0, sharpness: float = DEFAULT_SHARPNESS,
                   prior=None) -> TowerDefenseParams:
    return TowerDefenseParams(B=DEFAULT_PREFERENCES, sharpness=sharpness,
                              prior=prior, theta=theta)


class AttackerCost(CostFunction):
    """J2(x1, x2; w) = -sum_j phi(B[w, j]*x2[j] - x1[j])."""

    def __init__(self, B: np.ndarray, sharpness: float):
        self.B = np.ascontiguousarray(B, dtype=float)
        self.sharpness = float(sharpness)

    def value(self, x1, x2, world):
        return _kernels.attacker_value(
            np.ascontiguousarray(x1), np.ascontiguousarray(x2), self.B[world], self.sharpness
        )

    def value_many(self, x1_stack, x2_stack, world):
        return _kernels.attacker_values_pairs(
            np.ascontiguousarray(x1_stack),
            np.ascontiguousarray(x2_stack),
            self.B[world],
            self.sharpness,
        )

    def terms(self, x1, x2, world):
        """(j2, dphi, ddphi) from the kernel; building block for all derivatives."""
        return _kernels.attacker_terms(
            np.ascontiguousarray(x1), np.ascontiguousarray(x2), self.B[world], self.sharpness
        )

    def grad(self, x1, x2, world, arg):
        _, dphi, _ = self.terms(x1, x2, world)
        if arg == 1:
            return dphi
        return -dphi * self.B[world]

    def hess(self, x1, x2, world, a, b):
        _, _, ddphi = self.terms(x1, x2, world)
        beta = self.B[world]
        if (a, b) == (1, 1):
            return np.diag(-ddphi)
        if (a, b) == (2, 2):
            return np.diag(-ddphi * beta * beta)
        return np.diag(ddphi * beta)


class DefenderCost(CostFunction):
    """Defender cost J1 = -J2, shared evaluation with the attacker side."""

    def __init__(self, attacker: AttackerCost):
        self._attacker = attacker

    def value(self, x1, x2, world):
        return -self._attacker.value(x1, x2, world)

    def value_many(self, x1_stack, x2_stack, world):
        return -self._attacker.value_many(x1_stack, x2_stack, world)

    def grad(self, x1, x2, world, arg):
        return -self._attacker.grad(x1, x2, world, arg)

    def hess(self, x1, x2, world, a, b):
        return -self._attacker.hess(x1, x2, world, a, b)


def attacker_cost(x1, x2, world: int, params: TowerDefenseParams) -> float:
    """Attacker cost J2 at one point; the defender's cost is its negation."""
    cost = AttackerCost(params.effective_preferences(), params.sharpness)
    return cost.value(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float), world)


def cost_derivatives(x1, x2, world: int, params: TowerDefenseParams) -> dict:
    """Analytic first and second derivatives of the attacker cost J2.

    Returns a dict with gradients g1, g2 and Hessian blocks h11, h12, h21,
    h22 (rows indexed by the first subscript). Defender derivatives are the
    negations.
    """
    x1 = np.ascontiguousarray(x1, dtype=float)
    x2 = np.ascontiguousarray(x2, dtype=float)
    cost = AttackerCost(params.effective_preferences(), params.sharpness)
    j2, dphi, ddphi = cost.terms(x1, x2, world)
    beta = cost.B[world]
    return {
        "value": j2,
        "g1": dphi,
        "g2": -dphi * beta,
        "h11": np.diag(-ddphi),
        "h12": np.diag(ddphi * beta),
        "h21": np.diag(ddphi * beta),
        "h22": np.diag(-ddphi * beta * beta),
    }


def build_game(params: TowerDefenseParams) -> GameSpec:
    """GameSpec for the tower-defense family: simplex actions, n = m, J1 = -J2."""
    B = params.effective_preferences()
    attacker = AttackerCost(B, params.sharpness)
    defender = DefenderCost(attacker)

    def fused(x1, x2, world):
        # one kernel call yields every stationarity block (all diagonal)
        _, dphi, ddphi = attacker.terms(x1, x2, world)
        beta = attacker.B[world]
        g1 = -dphi
        h11 = np.diag(ddphi)
        h12 = np.diag(-ddphi * beta)
        g2 = -dphi * beta
        h22 = np.diag(-ddphi * beta * beta)
        h21 = np.diag(ddphi * beta)
        return g1, h11, h12, g2, h22, h21

    return GameSpec(
        m=params.m,
        n=params.m,
        prior=params.prior,
        cost1=defender,
        cost2=attacker,
        feasible1="simplex",
        feasible2="simplex",
        fused_blocks=fused,
    )
