"""Unit-simplex geometry helpers shared by the solvers."""

from __future__ import annotations

import numpy as np


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = 1}.

    Sort-based O(n log n) algorithm; idempotent on feasible points.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, n + 1)
    cond = u - css / ks > 0
    rho = np.nonzero(cond)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def tangent_basis(n_free: int) -> np.ndarray:
    """Orthonormal basis of the zero-sum subspace {u : sum(u) = 0} in R^f.

    Returns an (f, f-1) matrix with orthonormal columns (Helmert
    construction, deterministic). For f = 1 the basis is empty.
    """
    f = n_free
    basis = np.zeros((f, f - 1))
    for k in range(1, f):
        col = basis[:, k - 1]
        col[:k] = 1.0
        col[k] = -float(k)
        col /= np.sqrt(k * (k + 1.0))
    return basis


def embed_basis(free_mask: np.ndarray) -> np.ndarray:
    """Tangent basis of the simplex face with the given free coordinates,
    embedded in R^n (active rows are zero)."""
    n = free_mask.size
    f = int(np.count_nonzero(free_mask))
    z = np.zeros((n, max(f - 1, 0)))
    z[free_mask, :] = tangent_basis(f)
    return z


def random_simplex(rng: np.random.Generator, n: int) -> np.ndarray:
    """Dirichlet(1) sample, uniform on the simplex."""
    return rng.dirichlet(np.ones(n))


def barycentric_lattice(resolution: int, dims: int = 3) -> np.ndarray:
    """All lattice points {(i1, ..., id) / resolution : sum = resolution}.

    Ordered lexicographically by the integer tuples; resolution 1 yields the
    vertices only.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    points = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            points.append(prefix + [remaining])
            return
        for i in range(remaining + 1):
            rec(prefix + [i], remaining - i, slots - 1)

    rec([], resolution, dims)
    return np.array(points, dtype=float) / float(resolution)


def interior_clamp(r: np.ndarray, eps: float) -> np.ndarray:
    """Pull a simplex point into the relative interior: (1 - m*eps)*r + eps."""
    m = r.size
    return (1.0 - m * eps) * r + eps
