"""Compare the compiled solver kernels against the numpy reference.

Times the batched tridiagonal preconditioner sweep and the fused half-cell
metric product on solver-shaped workloads, then an end-to-end interior solve
with either backend selected.  Run as:

    python benchmarks/bench_kernels.py [N] [M]
"""

import sys
import time

import numpy as np

from wwdamp import _kernels
from wwdamp._kernels import _reference

try:
    from wwdamp._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeat=50):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def bench_tridiag(N, M):
    rng = np.random.default_rng(0)
    K = N // 2 + 1
    dl = np.zeros((K, M))
    du = np.zeros((K, M))
    d = np.full((K, M), 4.0)
    dl[:, 1:] = -1.0
    du[:, :-1] = -1.0
    factors = _reference.tridiag_factor(dl, d, du)
    rhs = rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))
    out = {}
    out["reference"] = timeit(lambda: _reference.tridiag_solve_batch(
        *factors, np.ascontiguousarray(rhs.copy())))
    if _core is not None:
        out["compiled"] = timeit(lambda: _core.tridiag_solve_batch(
            *factors, np.ascontiguousarray(rhs.copy())))
    return out


def bench_vertical(N, M):
    rng = np.random.default_rng(1)
    u = rng.standard_normal((M + 1, N))
    ux = rng.standard_normal((M + 1, N))
    c11 = rng.uniform(0.5, 2.0, N)
    c12 = rng.standard_normal((M, N))
    c22 = rng.uniform(0.5, 2.0, (M, N))
    oa = np.empty((M + 1, N))
    od = np.empty((M + 1, N))
    out = {}
    out["reference"] = timeit(lambda: _reference.vertical_apply(
        u, ux, c11, c12, c22, 1.0 / M, oa, od))
    if _core is not None:
        out["compiled"] = timeit(lambda: _core.vertical_apply(
            u, ux, c11, c12, c22, 1.0 / M, oa, od))
    return out


def bench_solve(N, M):
    from wwdamp.dtn import EllipticSolver
    from wwdamp.grid import Grid

    grid = Grid(np.pi, N)
    eta = 0.05 * np.cos(2 * grid.x)
    psi = np.cos(grid.x) + 0.2 * np.cos(3 * grid.x)
    out = {}
    backends = {"reference": _reference}
    if _core is not None:
        backends["compiled"] = _core
    saved = (_kernels.vertical_apply, _kernels.tridiag_solve_batch)
    try:
        for name, mod in backends.items():
            _kernels.vertical_apply = mod.vertical_apply
            _kernels.tridiag_solve_batch = mod.tridiag_solve_batch
            solver = EllipticSolver(grid, 1.0, M)
            out[name] = timeit(lambda: solver.solve_potential(eta, psi),
                               repeat=20)
    finally:
        _kernels.vertical_apply, _kernels.tridiag_solve_batch = saved
    return out


def main():
    N = int(sys.argv[1]) if len(sys.argv) > 1 else 256
    M = int(sys.argv[2]) if len(sys.argv) > 2 else 64
    print(f"kernel benchmark at N={N}, M={M} "
          f"(active backend: {_kernels.backend_name()})")
    rows = [
        ("tridiag_solve_batch", bench_tridiag(N, M)),
        ("vertical_apply", bench_vertical(N, M)),
        ("interior solve (PCG)", bench_solve(N, M)),
    ]
    print(f"{'kernel':24s} {'reference':>12s} {'compiled':>12s} {'speedup':>9s}")
    for name, res in rows:
        ref = res["reference"]
        if "compiled" in res:
            comp = res["compiled"]
            print(f"{name:24s} {ref * 1e6:10.1f}us {comp * 1e6:10.1f}us "
                  f"{ref / comp:8.1f}x")
        else:
            print(f"{name:24s} {ref * 1e6:10.1f}us {'n/a':>12s} {'':>9s}")


if __name__ == "__main__":
    main()
