# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled solver hot kernels.

Arithmetic is kept identical, operation for operation, to the numpy
reference in ``_reference.py`` so both backends give bit-equal output.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()


def vertical_apply(double[:, ::1] u, double[:, ::1] ux, double[::1] c11,
                   double[:, ::1] c12, double[:, ::1] c22, double dz,
                   double[:, ::1] out_avg, double[:, ::1] out_diff):
    """See ``_reference.vertical_apply``."""
    cdef Py_ssize_t M = c12.shape[0]
    cdef Py_ssize_t N = c12.shape[1]
    cdef Py_ssize_t m, i
    cdef double X, Z, f1, f2, half_dz = 0.5 * dz

    for m in range(M + 1):
        for i in range(N):
            out_avg[m, i] = 0.0
            out_diff[m, i] = 0.0
    for m in range(M):
        for i in range(N):
            X = 0.5 * (ux[m, i] + ux[m + 1, i])
            Z = (u[m + 1, i] - u[m, i]) / dz
            f1 = c11[i] * X + c12[m, i] * Z
            f2 = c12[m, i] * X + c22[m, i] * Z
            out_avg[m, i] += half_dz * f1
            out_avg[m + 1, i] += half_dz * f1
            out_diff[m, i] -= f2
            out_diff[m + 1, i] += f2
    return np.asarray(out_avg), np.asarray(out_diff)


def tridiag_solve_batch(double[:, ::1] dl, double[:, ::1] cp,
                        double[:, ::1] dinv, double complex[:, ::1] b):
    """See ``_reference.tridiag_solve_batch`` (complex right-hand sides)."""
    cdef Py_ssize_t B = b.shape[0]
    cdef Py_ssize_t M = b.shape[1]
    cdef Py_ssize_t j, m

    for j in range(B):
        b[j, 0] = b[j, 0] * dinv[j, 0]
        for m in range(1, M):
            b[j, m] = (b[j, m] - dl[j, m] * b[j, m - 1]) * dinv[j, m]
        for m in range(M - 2, -1, -1):
            b[j, m] = b[j, m] - cp[j, m] * b[j, m + 1]
    return np.asarray(b)
