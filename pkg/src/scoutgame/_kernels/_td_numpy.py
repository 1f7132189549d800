"""Numpy implementation of the tower-defense hot kernels.

Same contract as the compiled module `_td_cython`; see `scoutgame._kernels`
for how the backend is chosen.

All per-direction quantities derive from the gated quadratic
phi(d) = zeta(d) * d**2 with zeta(d) = 1 / (1 + exp(-2*k*d)). The attacker
cost in one world is -sum_j phi(beta_j*x2_j - x1_j), so every gradient and
Hessian block of the game is an elementwise expression in phi', phi''.
"""

import numpy as np

# exp argument beyond which zeta saturates; derivatives are flushed to zero.
_EXP_LIMIT = 700.0


def _phi_parts(delta, sharpness):
    """Return (phi, dphi, ddphi) elementwise for the gated quadratic."""
    delta = np.asarray(delta, dtype=np.float64)
    t = 2.0 * sharpness * delta
    saturated = np.abs(t) > _EXP_LIMIT
    z = 1.0 / (1.0 + np.exp(-np.clip(t, -_EXP_LIMIT, _EXP_LIMIT)))
    z = np.where(saturated, np.where(t > 0.0, 1.0, 0.0), z)
    zp = 2.0 * sharpness * z * (1.0 - z)
    zpp = 4.0 * sharpness * sharpness * z * (1.0 - z) * (1.0 - 2.0 * z)
    zp = np.where(saturated, 0.0, zp)
    zpp = np.where(saturated, 0.0, zpp)
    d2 = delta * delta
    phi = z * d2
    dphi = zp * d2 + 2.0 * delta * z
    ddphi = zpp * d2 + 4.0 * delta * zp + 2.0 * z
    return phi, dphi, ddphi


def zeta_values(delta, sharpness):
    """Logistic gate zeta(delta) with the saturation guard applied."""
    t = 2.0 * sharpness * np.asarray(delta, dtype=np.float64)
    saturated = np.abs(t) > _EXP_LIMIT
    z = 1.0 / (1.0 + np.exp(-np.clip(t, -_EXP_LIMIT, _EXP_LIMIT)))
    return np.where(saturated, np.where(t > 0.0, 1.0, 0.0), z)


def attacker_value(x1, x2, beta, sharpness):
    """Attacker cost -sum_j phi(beta_j*x2_j - x1_j) for one world."""
    delta = beta * x2 - x1
    phi, _, _ = _phi_parts(delta, sharpness)
    return -float(np.sum(phi))


def attacker_terms(x1, x2, beta, sharpness):
    """Return (j2, dphi, ddphi): attacker cost plus the per-direction
    first and second derivatives of phi at delta = beta*x2 - x1."""
    delta = beta * x2 - x1
    phi, dphi, ddphi = _phi_parts(delta, sharpness)
    return -float(np.sum(phi)), dphi, ddphi


def attacker_terms_batch(x1, x2_stack, b_rows, sharpness):
    """Batched `attacker_terms` over worlds.

    x1: (n,), x2_stack: (m, n), b_rows: (m, n).
    Returns (j2: (m,), dphi: (m, n), ddphi: (m, n)).
    """
    delta = b_rows * x2_stack - x1[None, :]
    phi, dphi, ddphi = _phi_parts(delta, sharpness)
    return -np.sum(phi, axis=1), dphi, ddphi


def attacker_values_pairs(x1_stack, x2_stack, beta, sharpness):
    """Attacker cost for N (x1, x2) pairs in a single world.

    x1_stack, x2_stack: (N, n). Returns (N,).
    """
    delta = beta[None, :] * x2_stack - x1_stack
    phi, _, _ = _phi_parts(delta, sharpness)
    return -np.sum(phi, axis=1)
