"""Equilibrium sensitivity and the total stage-1 gradient.

The pooled-subgame equilibrium z = (x1(0), x2(0, w) for each supported world)
solves a square stationarity system F(z; r) = 0 once the active simplex
constraints are eliminated in a tangent-space basis. Differentiating through
F with the implicit function theorem gives dz/dr, and combining it with the
explicit probability weights yields the total derivative of the stage-1
objective. The Jacobian of F carries a block structure (one diagonal block
per world for the informed player) that the linear solve exploits via a
Schur complement; the full Jacobian is never inverted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GradientUnavailable, SingularSystem
from .game import FEASIBLE_SIMPLEX, GameSpec, PosteriorZero, as_signal, stage1_cost
from .simplex import embed_basis
from .solver import (
    ACTIVE_TOL,
    MULTIPLIER_TOL,
    SolverConfig,
    Stage2Solution,
    Stage2Solver,
)

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class JacobianParts:
    """Reduced first-order-system Jacobian blocks at a pooled equilibrium.

    A is the uninformed player's own block, B_blocks/C_blocks the cross
    blocks per world, D_blocks the informed player's own blocks (these are
    the only nonzero pieces of the bottom-right section: the informed
    player's decisions are independent across worlds). dF_dr holds the
    explicit dependence of the system on the allocation, which enters only
    through the posterior weights in the uninformed player's rows.
    """

    A: np.ndarray
    B_blocks: tuple
    C_blocks: tuple
    D_blocks: tuple
    dF_dr: np.ndarray
    Z1: np.ndarray
    Z2: tuple
    support: tuple
    weights: np.ndarray
    weak: bool

    @property
    def B(self) -> np.ndarray:
        if self.B_blocks:
            return np.hstack(self.B_blocks)
        return np.zeros((self.A.shape[0], 0))

    @property
    def C(self) -> np.ndarray:
        if self.C_blocks:
            return np.vstack(self.C_blocks)
        return np.zeros((0, self.A.shape[0]))

    @property
    def D(self) -> np.ndarray:
        sizes = [d.shape[0] for d in self.D_blocks]
        total = sum(sizes)
        out = np.zeros((total, total))
        off = 0
        for d in self.D_blocks:
            k = d.shape[0]
            out[off : off + k, off : off + k] = d
            off += k
        return out

    def full_jacobian(self) -> np.ndarray:
        """Assembled reduced Jacobian [[A, B], [C, D]] (diagnostics only)."""
        top = np.hstack([self.A, self.B]) if self.B.shape[1] else self.A
        bottom = np.hstack([self.C, self.D]) if self.C.shape[0] else None
        if bottom is None:
            return top
        return np.vstack([top, bottom])


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    """Sensitivity of the pooled equilibrium and the stage-1 gradient."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    dz_dr: np.ndarray
    dK_dr: np.ndarray
    conditions: dict
    weak: bool

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "E": self.E.tolist(),
            "dz_dr": self.dz_dr.tolist(),
            "dK_dr": self.dK_dr.tolist(),
            "conditions": self.conditions,
            "weak_complementarity": self.weak,
        }


def _free_mask(n: int, feasible: str, x: np.ndarray, active_list) -> tuple:
    """Free-coordinate mask; degenerate (zero-multiplier) constraints are
    reassigned to the inactive set so a subgradient can still be emitted."""
    if feasible != FEASIBLE_SIMPLEX:
        return np.ones(n, dtype=bool), False
    free = np.ones(n, dtype=bool)
    weak = False
    for idx, mu in active_list:
        if abs(mu) <= MULTIPLIER_TOL:
            weak = True
            continue
        free[idx] = False
    return free, weak


def posterior_weight_jacobian(r, prior: np.ndarray, support) -> np.ndarray:
    """d(posterior weight of supported world i)/d r_k, shape (|support|, m).

    With q_i = (1 - r_i) p_i and Q = sum(q), the weight is w_i = q_i / Q, so
    dw_i/dr_k = -p_i 1[i==k]/Q + q_i p_k / Q^2.
    """
    r = as_signal(r).r
    prior = np.asarray(prior, dtype=float)
    q = (1.0 - r) * prior
    big_q = q.sum()
    out = np.zeros((len(support), r.size))
    if big_q <= 1e-14:
        # only reachable on the one-point simplex (m = 1, r = [1]), where the
        # weight map is constant; any m >= 2 allocation keeps Q positive
        return out
    for row, i in enumerate(support):
        for k in range(r.size):
            out[row, k] = q[i] * prior[k] / big_q**2
            if i == k:
                out[row, k] -= prior[i] / big_q
    return out


def assemble_jacobian(
    spec: GameSpec,
    posterior: PosteriorZero,
    solution: Stage2Solution,
    r,
) -> JacobianParts:
    """Reduced Jacobian blocks of the pooled stationarity system at r.

    The system is expressed in the tangent basis of the free coordinates
    (active constraints with strictly positive multipliers are treated as
    equalities). Only the uninformed player's rows depend on r, through the
    posterior weights.
    """
    sub = solution.subgames[0]
    support = sub.support
    weights = np.asarray(posterior.weights, dtype=float)
    n = spec.n
    x1 = sub.x1

    free1, weak = _free_mask(n, spec.feasible1, x1, sub.active1)
    z1 = embed_basis(free1) if spec.feasible1 == FEASIBLE_SIMPLEX else np.eye(n)
    z2 = []
    for w in support:
        free2, wk = _free_mask(n, spec.feasible2, sub.x2[w], sub.active2[w])
        weak = weak or wk
        z2.append(
            embed_basis(free2) if spec.feasible2 == FEASIBLE_SIMPLEX else np.eye(n)
        )

    h11 = np.zeros((n, n))
    g1_list = []
    b_blocks = []
    c_blocks = []
    d_blocks = []
    for wgt, w, zb in zip(weights, support, z2):
        g1, h11_w, h12, _, h22, h21 = spec.stationarity_blocks(x1, sub.x2[w], w)
        g1_list.append(g1)
        h11 += wgt * h11_w
        b_blocks.append(wgt * (z1.T @ h12 @ zb))
        c_blocks.append(zb.T @ h21 @ z1)
        d_blocks.append(zb.T @ h22 @ zb)
    a_block = z1.T @ h11 @ z1

    dw = posterior_weight_jacobian(r, spec.prior, support)
    k1 = z1.shape[1]
    total = k1 + sum(zb.shape[1] for zb in z2)
    df_dr = np.zeros((total, spec.m))
    for row in range(len(support)):
        df_dr[:k1, :] += np.outer(z1.T @ g1_list[row], dw[row])

    return JacobianParts(
        A=a_block,
        B_blocks=tuple(b_blocks),
        C_blocks=tuple(c_blocks),
        D_blocks=tuple(d_blocks),
        dF_dr=df_dr,
        Z1=z1,
        Z2=tuple(z2),
        support=support,
        weights=weights,
        weak=weak,
    )


def _schur_complement(parts: JacobianParts):
    """E = A - sum_j B_j D_j^{-1} C_j, with per-block condition checks."""
    e_block = parts.A.copy()
    d_inv_c = []
    for b, c, d in zip(parts.B_blocks, parts.C_blocks, parts.D_blocks):
        if d.size:
            cond = np.linalg.cond(d)
            if not np.isfinite(cond) or cond > COND_LIMIT:
                raise SingularSystem(
                    f"informed-player Hessian block has condition {cond:.3e}"
                )
            dic = np.linalg.solve(d, c)
        else:
            dic = np.zeros((0, parts.A.shape[0]))
        d_inv_c.append(dic)
        e_block = e_block - b @ dic
    return e_block, d_inv_c


def solve_sensitivity(parts: JacobianParts, n: Optional[int] = None, m: Optional[int] = None) -> np.ndarray:
    """dz/dr for the pooled equilibrium, shape (n*(m+1), m).

    Solves (grad_z F) dz = -dF/dr blockwise: the informed player's blocks
    are eliminated first, the n x n Schur system is solved, then the
    per-world corrections are back-substituted. Ambient rows follow the
    layout [x1(0); x2(0, world 0); ...; x2(0, world m-1)]; rows for worlds
    outside the posterior support are zero.
    """
    if n is None:
        n = parts.Z1.shape[0]
    if m is None:
        m = parts.dF_dr.shape[1]
    k1 = parts.A.shape[0]
    rhs = -parts.dF_dr
    r1 = rhs[:k1, :]
    r2 = []
    off = k1
    for zb in parts.Z2:
        k = zb.shape[1]
        r2.append(rhs[off : off + k, :])
        off += k

    e_block, d_inv_c = _schur_complement(parts)
    reduced_rhs = r1.copy()
    d_inv_r2 = []
    for b, d, r2j in zip(parts.B_blocks, parts.D_blocks, r2):
        if d.size:
            dir2 = np.linalg.solve(d, r2j)
        else:
            dir2 = r2j
        d_inv_r2.append(dir2)
        reduced_rhs -= b @ dir2

    if e_block.size:
        cond = np.linalg.cond(e_block)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularSystem(f"Schur complement has condition {cond:.3e}")
        u1 = np.linalg.solve(e_block, reduced_rhs)
    else:
        u1 = np.zeros((0, m))

    dz = np.zeros((n * (m + 1), m))
    dz[:n, :] = parts.Z1 @ u1
    for w, zb, dic, dir2 in zip(parts.support, parts.Z2, d_inv_c, d_inv_r2):
        u2 = dir2 - dic @ u1
        dz[n * (1 + w) : n * (2 + w), :] = zb @ u2
    return dz


def total_gradient(spec: GameSpec, r, solution: Stage2Solution, dz_dr: np.ndarray) -> np.ndarray:
    """Total derivative of the stage-1 cost with respect to the allocation.

    dK/dr_k = p_k [J1 at the detected-world policies - J1 at the pooled
    policies, both in world k] plus the chain term through the pooled
    equilibrium. Detected-world policies do not move with r and contribute
    no chain term.
    """
    sig = as_signal(r)
    rvec = sig.r
    prior = spec.prior
    m, n = spec.m, spec.n
    x1_zero = solution.x1[0]

    explicit = np.zeros(m)
    for k in range(m):
        if prior[k] <= 0.0:
            continue
        if (0, k) not in solution.x2:
            raise GradientUnavailable(
                f"world {k} is outside the no-detection support; the gradient "
                "needs a pooled policy for it"
            )
        detect = spec.cost1.value(solution.x1[k + 1], solution.x2[(k + 1, k)], k)
        miss = spec.cost1.value(x1_zero, solution.x2[(0, k)], k)
        explicit[k] = prior[k] * (detect - miss)

    grad_z = np.zeros(n * (m + 1))
    for k in range(m):
        q = (1.0 - rvec[k]) * prior[k]
        if q <= 0.0 or (0, k) not in solution.x2:
            continue
        x2k = solution.x2[(0, k)]
        grad_z[:n] += q * spec.cost1.grad(x1_zero, x2k, k, arg=1)
        grad_z[n * (1 + k) : n * (2 + k)] = q * spec.cost1.grad(x1_zero, x2k, k, arg=2)
    return explicit + grad_z @ dz_dr


def check_conditions(parts: JacobianParts, r=None) -> dict:
    """Invertibility / interiority / complementarity report (never raises)."""
    report: dict = {}
    conds_d = []
    for d in parts.D_blocks:
        conds_d.append(float(np.linalg.cond(d)) if d.size else 1.0)
    report["A_cond"] = float(np.linalg.cond(parts.A)) if parts.A.size else 1.0
    report["D_conds"] = conds_d
    report["hessians_invertible"] = all(
        np.isfinite(c) and c <= COND_LIMIT for c in conds_d
    )
    if report["hessians_invertible"]:
        try:
            e_block, _ = _schur_complement(parts)
            e_cond = float(np.linalg.cond(e_block)) if e_block.size else 1.0
            report["E_cond"] = e_cond
            report["E_invertible"] = np.isfinite(e_cond) and e_cond <= COND_LIMIT
        except SingularSystem:
            report["E_cond"] = float("inf")
            report["E_invertible"] = False
    else:
        report["E_cond"] = float("inf")
        report["E_invertible"] = False
    report["strict_complementarity"] = not parts.weak
    if r is not None:
        rvec = as_signal(r).r
        report["min_r"] = float(rvec.min())
        report["relative_interior"] = bool(rvec.min() > 1e-9)
    return report


def sensitivity_report(
    spec: GameSpec,
    r,
    solution: Optional[Stage2Solution] = None,
    solver: Optional[Stage2Solver] = None,
    config: Optional[SolverConfig] = None,
) -> SensitivityReport:
    """Solve (or reuse) the second stage at r and differentiate through it."""
    if solution is None:
        if solver is None:
            solver = Stage2Solver(spec, config)
        solution = solver.solve(r)
    parts = assemble_jacobian(spec, solution.posterior, solution, r)
    dz_dr = solve_sensitivity(parts, n=spec.n, m=spec.m)
    dk_dr = total_gradient(spec, r, solution, dz_dr)
    conditions = check_conditions(parts, r)
    e_block, _ = _schur_complement(parts)
    return SensitivityReport(
        A=parts.A,
        B=parts.B,
        C=parts.C,
        D=parts.D,
        E=e_block,
        dz_dr=dz_dr,
        dK_dr=dk_dr,
        conditions=conditions,
        weak=parts.weak,
    )


# -- finite-difference oracles ------------------------------------------------


def tangent_directions(m: int) -> list:
    """Unit vectors (e_a - e_b)/sqrt(2) spanning the simplex tangent space."""
    dirs = []
    for a in range(m):
        for b in range(a + 1, m):
            t = np.zeros(m)
            t[a] = 1.0
            t[b] = -1.0
            dirs.append(t / np.sqrt(2.0))
    return dirs


def fd_directional_k(
    spec: GameSpec,
    r,
    direction: np.ndarray,
    step: float = 1e-4,
    solver: Optional[Stage2Solver] = None,
    config: Optional[SolverConfig] = None,
) -> float:
    """Central difference of K(solve_stage2(r)) along a tangent direction."""
    rvec = as_signal(r).r
    direction = np.asarray(direction, dtype=float)
    if abs(direction.sum()) > 1e-10:
        raise ValueError("direction must lie in the simplex tangent space")
    if solver is None:
        solver = Stage2Solver(spec, config)
    r_plus = rvec + step * direction
    r_minus = rvec - step * direction
    k_plus = stage1_cost(solver.solve(r_plus), r_plus, spec)
    k_minus = stage1_cost(solver.solve(r_minus), r_minus, spec)
    return (k_plus - k_minus) / (2.0 * step)


def fd_jacobian(spec: GameSpec, parts: JacobianParts, solution: Stage2Solution, step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of the reduced system w.r.t. reduced z."""
    sub = solution.subgames[0]
    x1 = sub.x1
    x2_list = [sub.x2[w] for w in parts.support]
    k1 = parts.Z1.shape[1]
    sizes = [zb.shape[1] for zb in parts.Z2]
    total = k1 + sum(sizes)

    def eval_f(du: np.ndarray) -> np.ndarray:
        x1_t = x1 + parts.Z1 @ du[:k1]
        x2_t = []
        off = k1
        for zb, x2 in zip(parts.Z2, x2_list):
            x2_t.append(x2 + zb @ du[off : off + zb.shape[1]])
            off += zb.shape[1]
        return _reduced_f(spec, parts, x1_t, x2_t)

    jac = np.zeros((total, total))
    for j in range(total):
        e = np.zeros(total)
        e[j] = step
        jac[:, j] = (eval_f(e) - eval_f(-e)) / (2.0 * step)
    return jac


def _reduced_f(spec: GameSpec, parts: JacobianParts, x1, x2_list) -> np.ndarray:
    rows = []
    f1 = np.zeros(spec.n)
    for wgt, w, x2 in zip(parts.weights, parts.support, x2_list):
        g1, _, _, g2, _, _ = spec.stationarity_blocks(x1, x2, w)
        f1 += wgt * g1
        rows.append(g2)
    out = [parts.Z1.T @ f1]
    for zb, g2 in zip(parts.Z2, rows):
        out.append(zb.T @ g2)
    return np.concatenate(out)
