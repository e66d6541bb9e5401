"""Surface evolution: curvature, quadratic terms, feedback pressure, stepping.

The stiff linear part (restoring force g + kappa*k^2 against the flat-strip
normal-velocity symbol) is integrated exactly by a fourth-order exponential
scheme; everything nonlinear, including the feedback pressure evaluated from
the current stage's surface velocity, is explicit.  Time integrals of the
verification functionals ride along as extra quadrature states combined with
the scheme's stage weights, so they carry the integrator's order rather than
the output cadence's.

The quadratic term driving d(psi)/dt is the exact shape derivative of the
discrete kinetic energy (see ``EllipticSolver.shape_gradient``); with the
spectral derivative's exact antisymmetry this makes the semi-discrete flow
Hamiltonian for the measured energy, so the undamped drift is pure
time-integration error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dtn import DtnResult, EllipticSolver
from .energy import EnergyBreakdown, assumption_monitor, energy_from, multiplier_fields
from .errors import BlowUpError
from .grid import EVEN, Grid
from .params import ControlParams, CutoffProfile, PhysicalParams

ETA_X_BLOWUP = 5.0
MIN_ETA_FRACTION = 0.01  # abort when min(eta) <= -h*(1 - fraction)

# accumulator keys, in serialization order
ACC_KEYS = (
    "H_dt", "Htilde_dt", "dissipation", "bottom_sq_dt", "O", "W",
    "Psq", "p_zeta",
    "eq1_pot", "eq1_kin", "eq1_pext", "eq1_nlin",
    "eqchi_pot", "eqchi_kin", "eqchi_pext", "eqchi_nlin", "eqchi_cross",
)


@dataclass
class SurfaceState:
    """Surface elevation and potential trace at one instant."""

    t: float
    eta: np.ndarray
    psi: np.ndarray

    def copy(self) -> "SurfaceState":
        return SurfaceState(self.t, self.eta.copy(), self.psi.copy())


def make_state(grid: Grid, eta, psi, t: float = 0.0) -> SurfaceState:
    """Project onto the admissible state space: even fields, zero-mean
    elevation, band-limited to the dealias cut."""
    eta = grid.project(np.asarray(eta, float), EVEN, zero_mean=True, dealias=True)
    psi = grid.project(np.asarray(psi, float), EVEN, dealias=True)
    return SurfaceState(t, eta, psi)


def standing_wave_state(grid: Grid, params: PhysicalParams, mode: int,
                        amplitude_ratio: float) -> SurfaceState:
    """Single-mode elevation of amplitude ratio*h at rest (psi = 0)."""
    if mode < 1 or mode > grid.n_dealias:
        raise ValueError(f"mode must be in [1, {grid.n_dealias}], got {mode}")
    eta = amplitude_ratio * params.h * np.cos(mode * np.pi * grid.x / grid.L)
    return make_state(grid, eta, np.zeros(grid.N))


def curvature(grid: Grid, eta: np.ndarray) -> np.ndarray:
    """d/dx( eta_x / sqrt(1 + eta_x^2) ), dealiased, even."""
    eta_x = grid.diff(eta)
    return grid.project(grid.diff(eta_x / np.sqrt(1.0 + eta_x**2)), EVEN, dealias=True)


def nonlinear_term(grid: Grid, eta: np.ndarray, psi: np.ndarray,
                   g_eta_psi: np.ndarray) -> np.ndarray:
    """Quadratic surface term in its trace form,
    (1/2) psi_x^2 - (1/2)(G + eta_x psi_x)^2 / (1 + eta_x^2)."""
    eta_x = grid.diff(eta)
    psi_x = grid.diff(psi)
    val = 0.5 * psi_x**2 - 0.5 * (g_eta_psi + eta_x * psi_x) ** 2 / (1.0 + eta_x**2)
    return grid.project(val, EVEN, dealias=True)


def surface_traces(grid: Grid, eta: np.ndarray, psi: np.ndarray,
                   g_eta_psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Velocity components (V, B) at the surface from the exact relations
    psi_x = V + eta_x*B and G = B - eta_x*V."""
    eta_x = grid.diff(eta)
    psi_x = grid.diff(psi)
    V = (psi_x - eta_x * g_eta_psi) / (1.0 + eta_x**2)
    B = g_eta_psi + eta_x * V
    return V, B


def pressure_feedback(grid: Grid, profile: CutoffProfile, lam: float,
                      deta_dt: np.ndarray) -> tuple[np.ndarray, float]:
    """Feedback pressure lam*chi*deta_dt with the spatial mean removed.

    Returns (p_ext, p_of_t) where p_ext = lam*chi*deta_dt + p_of_t and
    mean(p_ext) = 0 identically.
    """
    raw = lam * profile.chi * deta_dt
    p_of_t = -grid.mean(raw)
    return raw + p_of_t, float(p_of_t)


@dataclass
class RhsEval:
    """One right-hand-side evaluation together with its byproducts."""

    deta_dt: np.ndarray
    dpsi_dt: np.ndarray
    p_ext: np.ndarray
    p_of_t: float
    dtn: DtnResult
    n_shape: np.ndarray
    energy: EnergyBreakdown
    quad: dict


class FlowModel:
    """Right-hand side of the damped surface system for fixed parameters."""

    def __init__(self, grid: Grid, params: PhysicalParams, ctrl: ControlParams,
                 profile: CutoffProfile, solver: EllipticSolver,
                 damping: bool = True):
        self.grid = grid
        self.params = params
        self.ctrl = ctrl
        self.profile = profile
        self.solver = solver
        self.damping = damping

    def rhs(self, state: SurfaceState) -> RhsEval:
        grid, params, profile = self.grid, self.params, self.profile
        eta, psi = state.eta, state.psi
        dtn = self.solver.dtn_apply(eta, psi)
        deta = grid.project(dtn.g_eta_psi, EVEN, zero_mean=True, dealias=True)
        n_shape = self.solver.shape_gradient(dtn.smap, dtn.u, dtn.ux)
        eta_x = grid.diff(eta)
        curv = grid.project(grid.diff(eta_x / np.sqrt(1.0 + eta_x**2)),
                            EVEN, dealias=True)
        if self.damping:
            p_ext, p_of_t = pressure_feedback(grid, profile, self.ctrl.lam, deta)
        else:
            p_ext = np.zeros(grid.N)
            p_of_t = 0.0
        dpsi = grid.project(
            -params.g * eta - n_shape + params.kappa * curv - p_ext,
            EVEN, dealias=True,
        )
        ebd = energy_from(grid, params, eta, psi, dtn.g_eta_psi, eta_x=eta_x)
        quad = self._quad_pack(state, dtn, deta, n_shape, p_ext, p_of_t, ebd, eta_x)
        return RhsEval(deta, dpsi, p_ext, p_of_t, dtn, n_shape, ebd, quad)

    def _quad_pack(self, state, dtn, deta, n_shape, p_ext, p_of_t, ebd, eta_x) -> dict:
        grid, params, profile = self.grid, self.params, self.profile
        lam = self.ctrl.lam
        eta, psi = state.eta, state.psi
        psi_x = grid.diff(psi)
        chi, m = profile.chi, profile.m
        psi_tilde = psi - grid.mean(psi)
        root = np.sqrt(1.0 + eta_x**2)

        zeta = profile.m_x * eta + m * eta_x + 1.5 * chi * eta - 0.25 * eta
        nu = grid.integrate(chi * eta)
        P_raw = lam * chi * deta if self.damping else np.zeros(grid.N)
        phi_x_bot = grid.diff(dtn.u[0])

        obs = (grid.integrate(1.5 * chi * psi_tilde * deta)
               + grid.integrate_x_weighted(psi_x * deta)
               - grid.integrate(m * psi_x * deta))
        pot_density = params.g * eta**2 + params.kappa * eta_x**2 / root
        return {
            "H_dt": ebd.H,
            "Htilde_dt": ebd.H_tilde,
            "dissipation": lam * grid.integrate(chi * deta**2) if self.damping else 0.0,
            "bottom_sq_dt": grid.integrate(phi_x_bot**2),
            "O": obs,
            "W": -grid.integrate(p_ext * zeta),
            "Psq": grid.integrate(P_raw**2),
            "p_zeta": p_of_t * 1.5 * nu if self.damping else 0.0,
            "eq1_pot": grid.integrate(pot_density),
            "eq1_kin": grid.integrate(psi * deta),
            "eq1_pext": grid.integrate(eta * p_ext),
            "eq1_nlin": grid.integrate(eta * n_shape),
            "eqchi_pot": grid.integrate(chi * pot_density),
            "eqchi_kin": grid.integrate(chi * psi * deta),
            "eqchi_pext": grid.integrate(chi * eta * p_ext),
            "eqchi_nlin": grid.integrate(chi * eta * n_shape),
            "eqchi_cross": params.kappa * grid.integrate(profile.chi_x * eta * eta_x / root),
        }


# -- exponential integrator ----------------------------------------------------


def _phi_values(theta: np.ndarray):
    """exp, phi1, phi2, phi3 at z = i*theta; power series below |z| = 0.25."""
    z = 1j * theta
    small = np.abs(theta) < 0.25
    zsafe = np.where(small, 1.0, z)
    ez = np.exp(z)
    p1 = (ez - 1.0) / zsafe
    p2 = (ez - 1.0 - z) / zsafe**2
    p3 = (ez - 1.0 - z - 0.5 * z**2) / zsafe**3
    s1 = np.zeros_like(z)
    s2 = np.zeros_like(z)
    s3 = np.zeros_like(z)
    for n in range(13, -1, -1):
        s1 = s1 * z / (n + 2) + 1.0
        s2 = s2 * z / (n + 3) + 1.0
        s3 = s3 * z / (n + 4) + 1.0
    p1 = np.where(small, s1, p1)
    p2 = np.where(small, s2 / 2.0, p2)
    p3 = np.where(small, s3 / 6.0, p3)
    return ez, p1, p2, p3


class _Pair:
    """Per-mode 2x2 matrix tau*f(tau*L) for L = [[0, s], [-b, 0]].

    L^2 = -omega^2 I, so f(tau L) = Re f(i theta) I + (Im f(i theta)/theta)
    tau L with theta = tau*omega; ``prefactor`` multiplies the whole matrix
    (1 for exponentials, tau for the stage weights).
    """

    def __init__(self, fvals, theta, tau, s, b, fprime0, prefactor):
        A = prefactor * fvals.real
        safe = np.where(theta > 1e-300, theta, 1.0)
        B = prefactor * tau * np.where(theta > 1e-300, fvals.imag / safe, fprime0)
        self.a11 = A
        self.a12 = B * s
        self.a21 = -B * b
        self.a22 = A

    def apply(self, eh, ph):
        return self.a11 * eh + self.a12 * ph, self.a21 * eh + self.a22 * ph

    def apply_add(self, out_e, out_p, eh, ph, factor=1.0):
        out_e += factor * (self.a11 * eh + self.a12 * ph)
        out_p += factor * (self.a21 * eh + self.a22 * ph)


class Integrator:
    """Fourth-order exponential stepper (stiff linear part exact)."""

    def __init__(self, model: FlowModel, dt: float):
        self.model = model
        self.dt = float(dt)
        grid, params = model.grid, model.params
        k = grid.k
        self.s_lin = model.solver.discrete_symbol.copy()
        self.s_lin[grid.n_dealias + 1:] = 0.0
        self.b_lin = params.g + params.kappa * k**2
        omega = np.sqrt(self.s_lin * self.b_lin)
        dt_ = self.dt
        s, b = self.s_lin, self.b_lin

        th_h = 0.5 * dt_ * omega
        ez, p1, _, _ = _phi_values(th_h)
        self.E_half = _Pair(ez, th_h, 0.5 * dt_, s, b, 1.0, 1.0)
        self.S_half = _Pair(p1, th_h, 0.5 * dt_, s, b, 0.5, 0.5 * dt_)

        th = dt_ * omega
        ez, p1, p2, p3 = _phi_values(th)
        self.E_full = _Pair(ez, th, dt_, s, b, 1.0, 1.0)
        self.W1 = _Pair(p1 - 3 * p2 + 4 * p3, th, dt_, s, b, 1.0 / 6.0, dt_)
        self.W2 = _Pair(p2 - 2 * p3, th, dt_, s, b, 1.0 / 12.0, dt_)
        self.W3 = _Pair(4 * p3 - p2, th, dt_, s, b, 0.0, dt_)

    def nonlinear_hat(self, t, eh, ph):
        """Nonlinear spectral residual and stage quadrature values."""
        grid = self.model.grid
        ev = self.model.rhs(SurfaceState(t, grid.irfft(eh), grid.irfft(ph)))
        Ne = grid.rfft(ev.deta_dt) - self.s_lin * ph
        Np = grid.rfft(ev.dpsi_dt) + self.b_lin * eh
        return (Ne, Np), ev

    def step_hat(self, t, eh, ph, acc):
        """One step in spectral space; accumulators updated in place.
        Returns (eh, ph, RhsEval-at-step-start)."""
        dt = self.dt
        (NUe, NUp), evU = self.nonlinear_hat(t, eh, ph)
        ae, ap = self.E_half.apply(eh, ph)
        self.S_half.apply_add(ae, ap, NUe, NUp)
        (Nae, Nap), evA = self.nonlinear_hat(t + 0.5 * dt, ae, ap)
        be, bp = self.E_half.apply(eh, ph)
        self.S_half.apply_add(be, bp, Nae, Nap)
        (Nbe, Nbp), evB = self.nonlinear_hat(t + 0.5 * dt, be, bp)
        ce, cp = self.E_half.apply(ae, ap)
        self.S_half.apply_add(ce, cp, 2 * Nbe - NUe, 2 * Nbp - NUp)
        (Nce, Ncp), evC = self.nonlinear_hat(t + dt, ce, cp)
        ne, npsi = self.E_full.apply(eh, ph)
        self.W1.apply_add(ne, npsi, NUe, NUp)
        self.W2.apply_add(ne, npsi, Nae, Nap, 2.0)
        self.W2.apply_add(ne, npsi, Nbe, Nbp, 2.0)
        self.W3.apply_add(ne, npsi, Nce, Ncp)
        qU, qa, qb, qc = evU.quad, evA.quad, evB.quad, evC.quad
        for key in ACC_KEYS:
            acc[key] += dt * (qU[key] + 2.0 * (qa[key] + qb[key]) + qc[key]) / 6.0
        return ne, npsi, evU


# -- trajectory recording --------------------------------------------------------

ROW_KEYS = (
    "t", "H", "H_tilde", "kinetic", "potential_grav", "potential_surf",
    "dissipation_rate", "min_eta", "max_abs_eta_x",
    "margin_rho", "margin_rho_x", "margin_nu", "margin_mx_etax2",
    "margin_eta_x", "margin_min_eta", "margin_tension",
    "all_ok", "hypotheses_ok", "mean_psi", "nu", "beta", "solver_iterations",
) + tuple("acc_" + k for k in ACC_KEYS)


class Trajectory:
    """Sampled states plus per-sample diagnostics and running integrals."""

    def __init__(self, grid: Grid, params: PhysicalParams, ctrl: ControlParams,
                 profile: CutoffProfile, meta: dict):
        self.grid = grid
        self.params = params
        self.ctrl = ctrl
        self.profile = profile
        self.meta = meta
        self.ts: list[float] = []
        self.etas: list[np.ndarray] = []
        self.psis: list[np.ndarray] = []
        self.rows: list[dict] = []

    def append(self, state: SurfaceState, row: dict):
        self.ts.append(state.t)
        self.etas.append(state.eta.copy())
        self.psis.append(state.psi.copy())
        self.rows.append(row)

    def __len__(self):
        return len(self.ts)

    def state(self, i: int) -> SurfaceState:
        return SurfaceState(self.ts[i], self.etas[i], self.psis[i])

    @property
    def H0(self) -> float:
        return self.rows[0]["H"]

    @property
    def final_acc(self) -> dict:
        return {k: self.rows[-1]["acc_" + k] for k in ACC_KEYS}

    def column(self, key: str) -> np.ndarray:
        return np.array([row[key] for row in self.rows])


def suggested_dt(grid: Grid, params: PhysicalParams,
                 ctrl: ControlParams | None = None,
                 profile: CutoffProfile | None = None,
                 damping: bool = False) -> float:
    """Stability-guarded default step.

    Half the period bound 0.5/omega_max over the retained modes; a damped
    run is additionally capped by the explicit feedback's decay rate
    lambda * sup(chi) * k_c * tanh(k_c h) at the dealias edge.
    """
    k_max = grid.k[grid.n_dealias]
    sigma_max = k_max * np.tanh(k_max * params.h)
    omega_max = np.sqrt((params.g + params.kappa * k_max**2) * sigma_max)
    dt = 0.5 / float(omega_max)
    if damping and ctrl is not None and profile is not None:
        rate = ctrl.lam * profile.sup_chi * sigma_max
        if rate > 0:
            dt = min(dt, 2.5 / float(rate))
    return dt


def default_cadence(grid: Grid, params: PhysicalParams) -> float:
    """Eight samples per shortest retained linear period."""
    k_max = grid.k[grid.n_dealias]
    omega_max = np.sqrt((params.g + params.kappa * k_max**2)
                        * k_max * np.tanh(k_max * params.h))
    return 2.0 * np.pi / (8.0 * float(omega_max))


class Simulator:
    """Owns the elliptic solver and advances surface states.

    Instances are single threaded and deterministic; independent instances
    may run concurrently on disjoint states.
    """

    DYNAMICS_RTOL = 1e-11

    def __init__(self, grid: Grid, params: PhysicalParams, ctrl: ControlParams,
                 profile: CutoffProfile, M: int | None = None,
                 damping: bool = True, rtol: float | None = None):
        M = max(32, grid.N // 4) if M is None else M
        rtol = self.DYNAMICS_RTOL if rtol is None else rtol
        self.grid = grid
        self.params = params
        self.ctrl = ctrl
        self.profile = profile
        self.solver = EllipticSolver(grid, params.h, M, rtol=rtol)
        self.model = FlowModel(grid, params, ctrl, profile, self.solver, damping)

    def rhs(self, state: SurfaceState) -> RhsEval:
        return self.model.rhs(state)

    def step(self, state: SurfaceState, dt: float) -> SurfaceState:
        """Advance a single step of size dt (capped by the stability default)."""
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        dt = min(dt, self._dt_cap())
        integ = Integrator(self.model, dt)
        acc = {k: 0.0 for k in ACC_KEYS}
        eh = self.grid.rfft(state.eta)
        ph = self.grid.rfft(state.psi)
        eh, ph, _ = integ.step_hat(state.t, eh, ph, acc)
        new = make_state(self.grid, self.grid.irfft(eh), self.grid.irfft(ph),
                         t=state.t + dt)
        self._check_blowup(new)
        return new

    def _dt_cap(self) -> float:
        return suggested_dt(self.grid, self.params, self.ctrl, self.profile,
                            damping=self.model.damping)

    def _check_blowup(self, state: SurfaceState):
        params = self.params
        eta_x = self.grid.diff(state.eta)
        max_slope = float(np.max(np.abs(eta_x)))
        min_eta = float(np.min(state.eta))
        if max_slope > ETA_X_BLOWUP or min_eta <= -params.h * (1.0 - MIN_ETA_FRACTION):
            raise BlowUpError(
                f"surface left the admissible regime at t = {state.t:.6g}: "
                f"max|eta_x| = {max_slope:.3g}, min(eta) = {min_eta:.3g}",
                t=state.t,
                diagnostics={"max_abs_eta_x": max_slope, "min_eta": min_eta},
            )

    def _row(self, state: SurfaceState, ev: RhsEval, acc: dict) -> dict:
        grid, params, profile = self.grid, self.params, self.profile
        ebd = ev.energy
        mf = multiplier_fields(grid, state, profile)
        rep = assumption_monitor(grid, state, profile, params)
        eta_x = grid.diff(state.eta)
        row = {
            "t": state.t,
            "H": ebd.H, "H_tilde": ebd.H_tilde, "kinetic": ebd.kinetic,
            "potential_grav": ebd.potential_grav,
            "potential_surf": ebd.potential_surf,
            "dissipation_rate": ev.quad["dissipation"],
            "min_eta": float(np.min(state.eta)),
            "max_abs_eta_x": float(np.max(np.abs(eta_x))),
            "margin_rho": rep.margins["rho"],
            "margin_rho_x": rep.margins["rho_x"],
            "margin_nu": rep.margins["nu"],
            "margin_mx_etax2": rep.margins["mx_etax2"],
            "margin_eta_x": rep.margins["eta_x"],
            "margin_min_eta": rep.margins["min_eta"],
            "margin_tension": rep.margins["tension"],
            "all_ok": rep.all_ok,
            "hypotheses_ok": rep.hypotheses_ok,
            "mean_psi": grid.mean(state.psi),
            "nu": mf.nu, "beta": mf.beta,
            "solver_iterations": ev.dtn.info.iterations,
        }
        for k in ACC_KEYS:
            row["acc_" + k] = acc[k]
        return row

    def simulate(self, state0: SurfaceState, T: float, dt: float | None = None,
                 cadence: float | None = None) -> Trajectory:
        """Run to final time T, sampling at the output cadence.

        Raises BlowUpError when the slope or trough guards trip; the
        exception carries the failing diagnostics.
        """
        grid, params = self.grid, self.params
        if T <= 0:
            raise ValueError(f"T must be positive, got {T}")
        dt_cap = self._dt_cap()
        dt_eff = dt_cap if dt is None else min(float(dt), dt_cap)
        n_steps = max(1, int(np.ceil(T / dt_eff - 1e-12)))
        dt_eff = T / n_steps
        cad = default_cadence(grid, params) if cadence is None else float(cadence)
        stride = max(1, int(round(cad / dt_eff)))

        state0 = make_state(grid, state0.eta, state0.psi, t=state0.t)
        if np.min(state0.eta) < -0.5 * params.h:
            raise BlowUpError(
                "initial surface violates min(eta) >= -h/2",
                t=state0.t, diagnostics={"min_eta": float(np.min(state0.eta))},
            )
        integ = Integrator(self.model, dt_eff)
        acc = {k: 0.0 for k in ACC_KEYS}
        meta = {
            "dt": dt_eff, "n_steps": n_steps, "stride": stride,
            "T": T, "damping": self.model.damping, "lambda": self.ctrl.lam,
            "N": grid.N, "M": self.solver.M, "L": grid.L,
            "g": params.g, "kappa": params.kappa, "h": params.h,
            "delta": self.ctrl.delta, "solver_rtol": self.solver.rtol,
            "backend": _kernels.backend_name(),
        }
        traj = Trajectory(grid, params, self.ctrl, self.profile, meta)

        eh = grid.rfft(state0.eta)
        ph = grid.rfft(state0.psi)
        t0 = state0.t
        state = state0
        for n in range(n_steps):
            t = t0 + n * dt_eff
            acc_before = dict(acc)
            eh, ph, evU = integ.step_hat(t, eh, ph, acc)
            if n % stride == 0:
                traj.append(state, self._row(state, evU, acc_before))
            state = make_state(grid, grid.irfft(eh), grid.irfft(ph),
                               t=t0 + (n + 1) * dt_eff)
            eh = grid.rfft(state.eta)
            ph = grid.rfft(state.psi)
            self._check_blowup(state)
        ev_final = self.model.rhs(state)
        traj.append(state, self._row(state, ev_final, dict(acc)))
        return traj
