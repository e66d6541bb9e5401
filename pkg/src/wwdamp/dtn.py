"""Surface-to-normal-velocity operator and the interior potential solve.

The moving fluid domain is flattened onto the fixed strip z in [-1, 0] by
sigma(x, z) = (1+z)*eta(x) + h*z.  The transformed Laplace problem is
discretized by the symmetric energy form

    a(u, v) = sum over mid-cells of
              dz * [ c11 ux vx + c12 (ux vz + uz vx) + c22 uz vz ],

with spectral x-derivatives averaged to mid-cells and plain differences in z,
where c11 = h+eta, c12 = -(1+z)*eta_x and c22 = (1 + ((1+z)*eta_x)^2)/(h+eta).
Because a(.,.) is symmetric and positive semidefinite by construction, the
operator returned by ``dtn_apply`` (the discrete conormal flux at z = 0) is
self-adjoint, positive and annihilates constants to solver tolerance, not
just to discretization order.

The flat-bottom problem diagonalizes per Fourier mode into tridiagonal
systems; that solve is both the preconditioner for the curved case and the
fast exact path (symbol k*tanh(kh)) when eta vanishes identically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import MapDegenerateError, SolverConvergenceError
from .grid import EVEN, Grid

DEFAULT_RTOL = 1e-12
DEFAULT_MAXITER = 400


def flat_symbol(grid: Grid, h: float) -> np.ndarray:
    """Exact flat-strip symbol k*tanh(k*h) on the rfft modes."""
    return grid.k * np.tanh(grid.k * h)


def dtn_flat(grid: Grid, psi: np.ndarray, h: float) -> np.ndarray:
    """Apply the exact flat-strip operator (eta = 0)."""
    return grid.irfft(flat_symbol(grid, h) * grid.rfft(psi))


def dtn_taylor(grid: Grid, eta: np.ndarray, psi: np.ndarray, h: float,
               order: int = 1) -> np.ndarray:
    """Small-slope expansion of the operator about the flat strip.

    Order 0 is the flat symbol; order 1 adds the first eta-linear correction
    -G0(eta*G0 psi) - d/dx(eta*psi_x).  Used only as an independent
    cross-check of the elliptic path.
    """
    if order not in (0, 1):
        raise ValueError(f"order must be 0 or 1, got {order}")
    g0 = dtn_flat(grid, psi, h)
    if order == 0:
        return g0
    corr = -dtn_flat(grid, eta * g0, h) - grid.diff(eta * grid.diff(psi))
    return g0 + corr


class StripMap:
    """Coefficients of the strip-flattening map for a given surface."""

    def __init__(self, grid: Grid, eta: np.ndarray, h: float, M: int):
        eta = np.asarray(eta, dtype=float)
        if np.min(eta) <= -h * (1.0 - 1e-9):
            raise MapDegenerateError(
                f"surface reaches the bottom: min(eta) = {np.min(eta):.6g}, h = {h}"
            )
        self.grid = grid
        self.h = float(h)
        self.M = int(M)
        self.dz = 1.0 / M
        self.z = -1.0 + self.dz * np.arange(M + 1)
        self.z_mid = -1.0 + self.dz * (np.arange(M) + 0.5)
        self.eta = eta
        self.eta_x = grid.diff(eta)
        self.sigma_z = h + eta                                   # (N,)
        self.sigma_x_mid = (1.0 + self.z_mid)[:, None] * self.eta_x  # (M, N)
        self.c11 = self.sigma_z
        self.c12 = np.ascontiguousarray(-self.sigma_x_mid)
        self.c22 = np.ascontiguousarray(
            (1.0 + self.sigma_x_mid**2) / self.sigma_z
        )

    def sigma_levels(self) -> np.ndarray:
        """Physical height y = sigma(x, z) on the level grid."""
        return (1.0 + self.z)[:, None] * self.eta[None, :] + self.h * self.z[:, None]


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    rtol: float


class InteriorField:
    """Potential and physical-coordinate gradient on the strip grid.

    Level fields (M+1, N) use centered differences in z with third-order
    one-sided stencils at the top and bottom; mid-cell fields reuse the exact
    discretization stencils of the energy form and drive all interior
    quadratures.
    """

    def __init__(self, smap: StripMap, u: np.ndarray, info: SolveInfo | None = None):
        grid, M, dz = smap.grid, smap.M, smap.dz
        self.smap = smap
        self.grid = grid
        self.info = info
        self.phi = u
        ux = grid.diff(u)
        uz = np.empty_like(u)
        uz[1:M] = (u[2:] - u[: M - 1]) / (2.0 * dz)
        uz[0] = (-11.0 * u[0] + 18.0 * u[1] - 9.0 * u[2] + 2.0 * u[3]) / (6.0 * dz)
        uz[M] = (11.0 * u[M] - 18.0 * u[M - 1] + 9.0 * u[M - 2] - 2.0 * u[M - 3]) / (6.0 * dz)
        sigma_x_lev = (1.0 + smap.z)[:, None] * smap.eta_x[None, :]
        self.phi_x = ux - sigma_x_lev / smap.sigma_z * uz
        self.phi_y = uz / smap.sigma_z
        # mid-cell gradient, consistent with the energy-form stencils
        X = 0.5 * (ux[:M] + ux[1:])
        Z = (u[1:] - u[:M]) / dz
        self.phi_x_mid = X - smap.sigma_x_mid / smap.sigma_z * Z
        self.phi_y_mid = Z / smap.sigma_z
        # traces: bottom sigma_x vanishes, so phi_x there is the plain
        # x-derivative; the surface traces come from the one-sided stencil
        self.bottom_phi_x = ux[0]
        self.surface_V = self.phi_x[M]
        self.surface_B = self.phi_y[M]

    # -- quadratures over the physical domain ------------------------------

    def integral_mid(self, integrand_mid: np.ndarray) -> float:
        """Integral over the fluid domain, dy dx = sigma_z dz dx."""
        grid, smap = self.grid, self.smap
        return grid.dx * smap.dz * float(
            np.sum(integrand_mid * smap.sigma_z[None, :])
        )

    def cross_term(self, weight_x: np.ndarray) -> float:
        """Integral of weight(x) * phi_x * phi_y over the fluid domain."""
        return self.integral_mid(weight_x[None, :] * self.phi_x_mid * self.phi_y_mid)

    def grad_sq_integral(self) -> float:
        """Integral of |grad phi|^2 over the fluid domain (mid-cell rule)."""
        return self.integral_mid(self.phi_x_mid**2 + self.phi_y_mid**2)

    def bottom_flux_sq(self) -> float:
        """Integral of phi_x^2 along the bottom."""
        return self.grid.integrate(self.bottom_phi_x**2)

    def wall_phi_y_sq(self) -> float:
        """Integral of phi_y^2 over depth at the wall column x = -L (== L)."""
        smap = self.smap
        return smap.dz * smap.sigma_z[0] * float(np.sum(self.phi_y_mid[:, 0] ** 2))


class DtnResult:
    """Operator output plus everything needed to inspect the interior."""

    def __init__(self, grid: Grid, g_eta_psi: np.ndarray, smap: StripMap,
                 u: np.ndarray, info: SolveInfo, flat_path: bool = False):
        self.grid = grid
        self.g_eta_psi = g_eta_psi
        self.smap = smap
        self.u = u
        self.ux = None  # cached spectral x-derivative of u, when available
        self.info = info
        self.flat_path = flat_path
        self._interior = None

    @property
    def interior(self) -> InteriorField:
        if self._interior is None:
            self._interior = InteriorField(self.smap, self.u, self.info)
        return self._interior


class EllipticSolver:
    """Preconditioned CG solver for the strip-transformed potential problem.

    An instance owns its workspaces and is single threaded; independent
    instances can run concurrently on disjoint states.  The flat-strip
    operator (per-mode tridiagonal) serves as preconditioner, initial guess
    and exact fast path.
    """

    def __init__(self, grid: Grid, h: float, M: int,
                 rtol: float = DEFAULT_RTOL, maxiter: int = DEFAULT_MAXITER):
        if M < 8:
            raise ValueError(f"need at least 8 vertical cells, got {M}")
        self.grid = grid
        self.h = float(h)
        self.M = int(M)
        self.dz = 1.0 / M
        self.rtol = float(rtol)
        self.maxiter = int(maxiter)
        self._ik = 1j * grid.k.copy()
        self._ik[-1] = 0.0
        # Parseval weights of the half-complex representation
        self._specw = np.full(grid.N // 2 + 1, 2.0)
        self._specw[0] = 1.0
        self._specw[-1] = 1.0
        self._build_flat_factors()
        self._out_avg = np.empty((M + 1, grid.N))
        self._out_diff = np.empty((M + 1, grid.N))

    # -- flat-strip machinery ----------------------------------------------

    def _build_flat_factors(self):
        grid, h, dz, M = self.grid, self.h, self.dz, self.M
        # effective wavenumbers of the discrete d/dx: Nyquist acts like zero
        k = grid.k.copy()
        k[-1] = 0.0
        K = k.size
        off = (k**2) * h * dz / 4.0 - 1.0 / (h * dz)           # (K,)
        diag_int = (k**2) * h * dz / 2.0 + 2.0 / (h * dz)
        diag_bot = (k**2) * h * dz / 4.0 + 1.0 / (h * dz)
        dl = np.zeros((K, M))
        d = np.empty((K, M))
        du = np.zeros((K, M))
        d[:, 0] = diag_bot
        d[:, 1:] = diag_int[:, None]
        dl[:, 1:] = off[:, None]
        du[:, :-1] = off[:, None]
        self._flat_off = off
        self._flat_diag_top = diag_bot  # flux row mirrors the bottom row
        self._factors = kernels.tridiag_factor(dl, d, du)
        # discrete flat symbol: conormal flux of the unit-Dirichlet solve
        rhs = np.zeros((K, M), dtype=np.complex128)
        rhs[:, M - 1] = -off
        sol = kernels.tridiag_solve_batch(*self._factors, rhs).real
        self.discrete_symbol = diag_bot + off * sol[:, M - 1]
        self.discrete_symbol[0] = 0.0

    def _flat_solve_hat(self, rhat: np.ndarray) -> np.ndarray:
        """Solve the flat operator per mode; rhat, result are (K, M)."""
        b = np.ascontiguousarray(rhat)
        return kernels.tridiag_solve_batch(*self._factors, b)

    def precondition_hat(self, rhat: np.ndarray) -> np.ndarray:
        """Inverse flat operator on a spectral interior residual (M, K)."""
        return self._flat_solve_hat(rhat.T.copy()).T

    def precondition(self, r: np.ndarray) -> np.ndarray:
        """Apply the inverse flat operator to an interior residual (M, N)."""
        zhat = self.precondition_hat(np.fft.rfft(r, axis=1))
        return np.fft.irfft(np.ascontiguousarray(zhat), n=self.grid.N, axis=1)

    def _dot_hat(self, F: np.ndarray, G: np.ndarray) -> float:
        """Frobenius inner product of the underlying real fields."""
        return float(np.sum(self._specw * (F.real * G.real + F.imag * G.imag))) / self.grid.N

    # -- curved-operator application ----------------------------------------

    def build_map(self, eta: np.ndarray) -> StripMap:
        return StripMap(self.grid, eta, self.h, self.M)

    def _vertical(self, smap: StripMap, u: np.ndarray, ux: np.ndarray):
        return kernels.vertical_apply(
            u, ux, smap.c11, smap.c12, smap.c22, self.dz,
            self._out_avg, self._out_diff,
        )

    def apply_full(self, smap: StripMap, u_full: np.ndarray) -> np.ndarray:
        """Energy-form operator on a full (M+1, N) level field."""
        u_full = np.ascontiguousarray(u_full)
        ux = np.ascontiguousarray(self.grid.diff(u_full))
        out_avg, out_diff = self._vertical(smap, u_full, ux)
        return -self.grid.diff(out_avg) + out_diff

    def _apply_hat(self, smap: StripMap, Uhat: np.ndarray) -> np.ndarray:
        """Energy-form operator in spectral-x representation (M+1, K)."""
        N = self.grid.N
        u = np.fft.irfft(Uhat, n=N, axis=1)
        ux = np.fft.irfft(self._ik * Uhat, n=N, axis=1)
        out_avg, out_diff = self._vertical(smap, u, ux)
        return -self._ik * np.fft.rfft(out_avg, axis=1) + np.fft.rfft(out_diff, axis=1)

    def bilinear(self, smap: StripMap, u: np.ndarray, v: np.ndarray) -> float:
        """Energy form a(u, v); a(u, u) is twice the kinetic energy."""
        return self.grid.dx * float(np.sum(self.apply_full(smap, u) * v))

    def solve_potential(self, eta: np.ndarray, psi: np.ndarray,
                        rtol: float | None = None) -> tuple[StripMap, np.ndarray, SolveInfo]:
        """Solve the transformed problem; returns (map, levels, info).

        Preconditioned CG on the spectral-x representation of the interior
        unknowns; the initial guess is the flat-operator solve of the
        right-hand side, which keeps runs deterministic and resumable.
        """
        grid, M = self.grid, self.M
        rtol = self.rtol if rtol is None else rtol
        smap = self.build_map(eta)
        psi_hat = np.fft.rfft(psi)
        top = np.zeros((M + 1, grid.N // 2 + 1), dtype=np.complex128)
        top[M] = psi_hat
        b = -self._apply_hat(smap, top)[:M]

        x = self.precondition_hat(b)
        full = top.copy()
        full[:M] = x
        # interior rows of the full-system residual: the top row is Dirichlet
        r = -self._apply_hat(smap, full)[:M]
        bnorm = np.sqrt(self._dot_hat(b, b))
        tol = rtol * bnorm + 1e-306
        it = 0
        rnorm = np.sqrt(self._dot_hat(r, r))
        work = np.zeros((M + 1, grid.N // 2 + 1), dtype=np.complex128)
        if rnorm > tol:
            z = self.precondition_hat(r)
            p = z.copy()
            rz = self._dot_hat(r, z)
            for it in range(1, self.maxiter + 1):
                work[:M] = p
                Ap = self._apply_hat(smap, work)[:M]
                alpha = rz / self._dot_hat(p, Ap)
                x += alpha * p
                r -= alpha * Ap
                rnorm = np.sqrt(self._dot_hat(r, r))
                if rnorm <= tol:
                    break
                z = self.precondition_hat(r)
                rz_new = self._dot_hat(r, z)
                p = z + (rz_new / rz) * p
                rz = rz_new
            else:
                raise SolverConvergenceError(
                    f"CG stalled at residual {rnorm:.3e} (target {tol:.3e}) "
                    f"after {self.maxiter} iterations"
                )
        full[:M] = x
        u_full = np.fft.irfft(full, n=grid.N, axis=1)
        info = SolveInfo(iterations=it, residual=rnorm / max(bnorm, 1e-306), rtol=rtol)
        return smap, u_full, info

    # -- public operator ------------------------------------------------------

    def dtn_apply(self, eta: np.ndarray, psi: np.ndarray,
                  rtol: float | None = None) -> DtnResult:
        """Surface operator; exact symbol when eta vanishes identically."""
        grid = self.grid
        if not np.any(eta):
            return self._flat_result(psi)
        smap, u, info = self.solve_potential(eta, psi, rtol=rtol)
        u = np.ascontiguousarray(u)
        ux = np.ascontiguousarray(grid.diff(u))
        out_avg, out_diff = self._vertical(smap, u, ux)
        flux = -grid.diff(out_avg[self.M]) + out_diff[self.M]
        g = grid.symmetrize(flux, EVEN)
        res = DtnResult(grid, g, smap, u, info)
        res.ux = ux
        return res

    def _flat_result(self, psi: np.ndarray) -> DtnResult:
        grid, h, M = self.grid, self.h, self.M
        g = dtn_flat(grid, psi, h)
        z = -1.0 + self.dz * np.arange(M + 1)
        w = grid.k * h
        psi_hat = grid.rfft(psi)
        decay = np.exp(np.outer(z, w))
        tail = np.exp(-w[None, :] * (2.0 + z[:, None]))
        denom = 1.0 + np.exp(-2.0 * w)
        profile = (decay + tail) / denom
        u = grid.irfft(profile[:, None, :] * psi_hat[None, None, :])[:, 0, :]
        smap = StripMap(grid, np.zeros(grid.N), h, M)
        info = SolveInfo(iterations=0, residual=0.0, rtol=self.rtol)
        return DtnResult(grid, g, smap, u, info, flat_path=True)

    # -- shape derivative of the kinetic energy -------------------------------

    def shape_gradient(self, smap: StripMap, u_full: np.ndarray,
                       ux: np.ndarray | None = None) -> np.ndarray:
        """Exact derivative of (1/2) a(u, u) with respect to the surface.

        By the envelope argument only the explicit coefficient dependence
        contributes; the result converges to the quadratic surface term of
        the evolution equation and makes the semi-discrete flow Hamiltonian
        for the discrete energy.
        """
        grid, M, dz = self.grid, self.M, self.dz
        if ux is None:
            ux = grid.diff(u_full)
        X = 0.5 * (ux[:M] + ux[1:])
        Z = (u_full[1:] - u_full[:M]) / dz
        sz = smap.sigma_z
        sx = smap.sigma_x_mid
        one_plus_z = (1.0 + smap.z_mid)[:, None]
        D = 0.5 * dz * np.sum(X**2 - (1.0 + sx**2) / sz**2 * Z**2, axis=0)
        E = dz * np.sum(one_plus_z * (-X * Z + sx * Z**2 / sz), axis=0)
        return D - grid.diff(E)


# -- binary interior dump ------------------------------------------------------

_DUMP_HEADER = struct.Struct("<qq")


def dump_interior(path, interior: InteriorField) -> None:
    """Write [N, M_levels, phi, phi_x, phi_y] as little-endian 64-bit data."""
    levels, N = interior.phi.shape
    with open(path, "wb") as f:
        f.write(_DUMP_HEADER.pack(N, levels))
        for arr in (interior.phi, interior.phi_x, interior.phi_y):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_interior_dump(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back a dump written by ``dump_interior``."""
    with open(path, "rb") as f:
        raw = f.read(_DUMP_HEADER.size)
        if len(raw) != _DUMP_HEADER.size:
            raise ValueError("truncated interior dump header")
        N, levels = _DUMP_HEADER.unpack(raw)
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != 3 * N * levels:
        raise ValueError("interior dump payload size mismatch")
    data = data.reshape(3, levels, N)
    return data[0], data[1], data[2]


def dump_full_snapshot(path, interior: InteriorField, eta: np.ndarray,
                       psi: np.ndarray) -> None:
    """Interior dump layout followed by the surface arrays eta, psi."""
    levels, N = interior.phi.shape
    with open(path, "wb") as f:
        f.write(_DUMP_HEADER.pack(N, levels))
        for arr in (interior.phi, interior.phi_x, interior.phi_y):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for arr in (eta, psi):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_full_snapshot(path):
    """Read (phi, phi_x, phi_y, eta, psi) from a full snapshot."""
    with open(path, "rb") as f:
        raw = f.read(_DUMP_HEADER.size)
        if len(raw) != _DUMP_HEADER.size:
            raise ValueError("truncated snapshot header")
        N, levels = _DUMP_HEADER.unpack(raw)
        data = np.frombuffer(f.read(), dtype="<f8")
    expected = 3 * N * levels + 2 * N
    if data.size != expected:
        raise ValueError("snapshot payload size mismatch")
    fields = data[: 3 * N * levels].reshape(3, levels, N)
    eta = data[3 * N * levels : 3 * N * levels + N]
    psi = data[3 * N * levels + N :]
    return fields[0], fields[1], fields[2], eta.copy(), psi.copy()
