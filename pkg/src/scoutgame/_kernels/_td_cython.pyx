# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled tower-defense kernels. Mirrors `_td_numpy` exactly; the numpy
module is the reference implementation."""

from libc.math cimport exp, fabs

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double _EXP_LIMIT = 700.0


cdef inline void _phi_point(double delta, double sharpness,
                            double* phi, double* dphi, double* ddphi) nogil:
    cdef double t = 2.0 * sharpness * delta
    cdef double z, zp, zpp, d2
    d2 = delta * delta
    if fabs(t) > _EXP_LIMIT:
        z = 1.0 if t > 0.0 else 0.0
        phi[0] = z * d2
        dphi[0] = 2.0 * delta * z
        ddphi[0] = 2.0 * z
        return
    z = 1.0 / (1.0 + exp(-t))
    zp = 2.0 * sharpness * z * (1.0 - z)
    zpp = 4.0 * sharpness * sharpness * z * (1.0 - z) * (1.0 - 2.0 * z)
    phi[0] = z * d2
    dphi[0] = zp * d2 + 2.0 * delta * z
    ddphi[0] = zpp * d2 + 4.0 * delta * zp + 2.0 * z


def zeta_values(delta, double sharpness):
    delta_arr = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    cdef double[::1] d = np.ascontiguousarray(delta_arr)
    out_arr = np.empty(d.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j
    cdef double t
    for j in range(d.shape[0]):
        t = 2.0 * sharpness * d[j]
        if fabs(t) > _EXP_LIMIT:
            out[j] = 1.0 if t > 0.0 else 0.0
        else:
            out[j] = 1.0 / (1.0 + exp(-t))
    if np.isscalar(delta) or np.asarray(delta).ndim == 0:
        return out_arr[0]
    return out_arr


def attacker_value(double[::1] x1, double[::1] x2, double[::1] beta,
                   double sharpness):
    cdef Py_ssize_t j, n = x1.shape[0]
    cdef double acc = 0.0
    cdef double phi, dphi, ddphi
    with nogil:
        for j in range(n):
            _phi_point(beta[j] * x2[j] - x1[j], sharpness, &phi, &dphi, &ddphi)
            acc += phi
    return -acc


def attacker_terms(double[::1] x1, double[::1] x2, double[::1] beta,
                   double sharpness):
    cdef Py_ssize_t j, n = x1.shape[0]
    dphi_arr = np.empty(n, dtype=np.float64)
    ddphi_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] dphi = dphi_arr
    cdef double[::1] ddphi = ddphi_arr
    cdef double acc = 0.0
    cdef double phi, dp, ddp
    with nogil:
        for j in range(n):
            _phi_point(beta[j] * x2[j] - x1[j], sharpness, &phi, &dp, &ddp)
            acc += phi
            dphi[j] = dp
            ddphi[j] = ddp
    return -acc, dphi_arr, ddphi_arr


def attacker_terms_batch(double[::1] x1, double[:, ::1] x2_stack,
                         double[:, ::1] b_rows, double sharpness):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t m = x2_stack.shape[0]
    cdef Py_ssize_t n = x1.shape[0]
    j2_arr = np.empty(m, dtype=np.float64)
    dphi_arr = np.empty((m, n), dtype=np.float64)
    ddphi_arr = np.empty((m, n), dtype=np.float64)
    cdef double[::1] j2 = j2_arr
    cdef double[:, ::1] dphi = dphi_arr
    cdef double[:, ::1] ddphi = ddphi_arr
    cdef double acc, phi, dp, ddp
    with nogil:
        for i in range(m):
            acc = 0.0
            for j in range(n):
                _phi_point(b_rows[i, j] * x2_stack[i, j] - x1[j], sharpness,
                           &phi, &dp, &ddp)
                acc += phi
                dphi[i, j] = dp
                ddphi[i, j] = ddp
            j2[i] = -acc
    return j2_arr, dphi_arr, ddphi_arr


def attacker_values_pairs(double[:, ::1] x1_stack, double[:, ::1] x2_stack,
                          double[::1] beta, double sharpness):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t count = x1_stack.shape[0]
    cdef Py_ssize_t n = beta.shape[0]
    out_arr = np.empty(count, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc, phi, dp, ddp
    with nogil:
        for i in range(count):
            acc = 0.0
            for j in range(n):
                _phi_point(beta[j] * x2_stack[i, j] - x1_stack[i, j], sharpness,
                           &phi, &dp, &ddp)
                acc += phi
            out[i] = -acc
    return out_arr
