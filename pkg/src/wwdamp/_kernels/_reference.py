"""Pure-numpy reference implementation of the solver hot kernels.

Kept arithmetically identical to the compiled versions in ``_core.pyx`` so
either backend produces bit-equal results; the compiled module only removes
interpreter and temporary-array overhead from the inner loops.
"""

import numpy as np


def vertical_apply(u, ux, c11, c12, c22, dz, out_avg, out_diff):
    """Half-cell metric products and their vertical adjoints.

    u, ux        : (M+1, N) level fields (values and spectral x-derivative)
    c11          : (N,) cell coefficient, constant in z
    c12, c22     : (M, N) mid-cell coefficients
    out_avg      : (M+1, N) accumulates dz * Avg^T(c11*X + c12*Z)
    out_diff     : (M+1, N) accumulates Dz^T(c12*X + c22*Z) * dz

    X is the mid-cell average of ux and Z the mid-cell difference of u.
    Outputs are overwritten, not accumulated.
    """
    M = c12.shape[0]
    X = 0.5 * (ux[:M] + ux[1:])
    Z = (u[1:] - u[:M]) / dz
    f1 = c11 * X + c12 * Z
    f2 = c12 * X + c22 * Z
    out_avg[...] = 0.0
    out_diff[...] = 0.0
    out_avg[:M] += 0.5 * dz * f1
    out_avg[1:] += 0.5 * dz * f1
    out_diff[:M] -= f2
    out_diff[1:] += f2
    return out_avg, out_diff


def tridiag_factor(dl, d, du):
    """Thomas factorization of batched tridiagonal systems.

    dl, d, du : (B, M) sub-, main- and super-diagonals (dl[:,0], du[:,-1]
    unused).  Returns (dl, cp, dinv) ready for ``tridiag_solve``.
    """
    B, M = d.shape
    cp = np.empty_like(d)
    dinv = np.empty_like(d)
    denom = d[:, 0].copy()
    dinv[:, 0] = 1.0 / denom
    cp[:, 0] = du[:, 0] * dinv[:, 0]
    for m in range(1, M):
        denom = d[:, m] - dl[:, m] * cp[:, m - 1]
        dinv[:, m] = 1.0 / denom
        cp[:, m] = du[:, m] * dinv[:, m]
    return np.ascontiguousarray(dl), np.ascontiguousarray(cp), np.ascontiguousarray(dinv)


def tridiag_solve_batch(dl, cp, dinv, b):
    """Solve factored batched tridiagonal systems in place.

    dl, cp, dinv : (B, M) float64 factors from ``tridiag_factor``
    b            : (B, M) float64 or complex128 right-hand sides, overwritten
                   with the solution.
    """
    B, M = b.shape
    b[:, 0] = b[:, 0] * dinv[:, 0]
    for m in range(1, M):
        b[:, m] = (b[:, m] - dl[:, m] * b[:, m - 1]) * dinv[:, m]
    for m in range(M - 2, -1, -1):
        b[:, m] = b[:, m] - cp[:, m] * b[:, m + 1]
    return b
