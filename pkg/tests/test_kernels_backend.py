"""Compiled and numpy kernel backends must agree to rounding error."""

import numpy as np
import pytest

from scoutgame import _kernels
from scoutgame._kernels import _td_numpy

cython = pytest.importorskip("scoutgame._kernels._td_cython")

BETA = np.array([3.0, 2.0, 2.0])
K = 10.0


def test_backend_is_selected():
    assert _kernels.BACKEND in ("cython", "numpy")
    assert _kernels.get_backend("numpy") is _td_numpy
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


def test_zeta_values_agree_on_dense_grid():
    # covers the smooth region, the saturation cutover, and deep saturation
    delta = np.concatenate([np.linspace(-60, 60, 24001), [-1e6, 1e6]])
    a = _td_numpy.zeta_values(delta, K)
    b = cython.zeta_values(delta, K)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)
    assert b[-1] == 1.0 and b[-2] == 0.0


def test_attacker_value_and_terms_agree():
    rng = np.random.default_rng(31)
    for _ in range(300):
        x1 = rng.dirichlet(np.ones(3))
        x2 = rng.dirichlet(np.ones(3))
        va = _td_numpy.attacker_value(x1, x2, BETA, K)
        vb = cython.attacker_value(x1, x2, BETA, K)
        assert va == pytest.approx(vb, rel=1e-14, abs=1e-15)
        ta = _td_numpy.attacker_terms(x1, x2, BETA, K)
        tb = cython.attacker_terms(x1, x2, BETA, K)
        assert ta[0] == pytest.approx(tb[0], rel=1e-14, abs=1e-15)
        np.testing.assert_allclose(ta[1], tb[1], rtol=1e-13, atol=1e-14)
        np.testing.assert_allclose(ta[2], tb[2], rtol=1e-13, atol=1e-13)


def test_agreement_in_saturation_region():
    # sharpness 200 pushes |2 k delta| past the overflow guard
    x1 = np.array([0.0, 0.5, 0.5])
    x2 = np.array([1.0, 0.0, 0.0])
    for k in (10.0, 200.0, 1e4):
        ta = _td_numpy.attacker_terms(x1, x2, BETA, k)
        tb = cython.attacker_terms(x1, x2, BETA, k)
        assert ta[0] == pytest.approx(tb[0], rel=1e-14)
        np.testing.assert_allclose(ta[1], tb[1], rtol=1e-13, atol=1e-14)
        np.testing.assert_allclose(ta[2], tb[2], rtol=1e-13, atol=1e-13)
        assert np.all(np.isfinite(tb[1])) and np.all(np.isfinite(tb[2]))


def test_batch_entry_points_agree():
    rng = np.random.default_rng(32)
    x1 = rng.dirichlet(np.ones(3))
    x2_stack = rng.dirichlet(np.ones(3), size=5)
    b_rows = np.array([[3.0, 2.0, 2.0], [2.0, 3.0, 2.0], [2.0, 2.0, 3.0], [3.0, 2.0, 2.0], [2.0, 3.0, 2.0]])
    outa = _td_numpy.attacker_terms_batch(x1, x2_stack, b_rows, K)
    outb = cython.attacker_terms_batch(x1, x2_stack, b_rows, K)
    for a, b in zip(outa, outb):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)

    x1_stack = rng.dirichlet(np.ones(3), size=7)
    x2_stack = rng.dirichlet(np.ones(3), size=7)
    va = _td_numpy.attacker_values_pairs(x1_stack, x2_stack, BETA, K)
    vb = cython.attacker_values_pairs(x1_stack, x2_stack, BETA, K)
    np.testing.assert_allclose(va, vb, rtol=1e-14, atol=1e-15)
