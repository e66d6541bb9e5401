"""Energy functionals, multiplier fields and the hypothesis monitor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .params import CutoffProfile, PhysicalParams


@dataclass
class EnergyBreakdown:
    """Energy split into its three components plus the strengthened variant.

    H_tilde replaces the exact surface-stretch integrand by its pointwise
    majorant eta_x^2/sqrt(1+eta_x^2), so H_tilde >= H always.
    """

    potential_grav: float
    potential_surf: float
    kinetic: float
    H: float
    H_tilde: float


def energy_from(grid: Grid, params: PhysicalParams, eta: np.ndarray,
                psi: np.ndarray, g_eta_psi: np.ndarray,
                eta_x: np.ndarray | None = None) -> EnergyBreakdown:
    """Energy from a precomputed operator application.

    The kinetic part (1/2) int psi*G(eta)psi equals the fluid-interior
    Dirichlet integral by the divergence theorem; the surface-stretch
    integrand sqrt(1+eta_x^2)-1 is evaluated in the cancellation-free form
    eta_x^2 / (1 + sqrt(1+eta_x^2)).
    """
    if eta_x is None:
        eta_x = grid.diff(eta)
    root = np.sqrt(1.0 + eta_x**2)
    pot_g = 0.5 * params.g * grid.integrate(eta**2)
    pot_s = params.kappa * grid.integrate(eta_x**2 / (1.0 + root))
    kin = 0.5 * grid.inner(psi, g_eta_psi)
    return EnergyBreakdown(
        potential_grav=pot_g,
        potential_surf=pot_s,
        kinetic=kin,
        H=pot_g + pot_s + kin,
        H_tilde=pot_g + params.kappa * grid.integrate(eta_x**2 / root) + kin,
    )


def energy(grid: Grid, params: PhysicalParams, state, solver) -> EnergyBreakdown:
    """Energy of a state, running the interior solve for the kinetic part."""
    dtn = solver.dtn_apply(state.eta, state.psi)
    return energy_from(grid, params, state.eta, state.psi, dtn.g_eta_psi)


@dataclass
class MultiplierFields:
    """Multiplier-method fields derived from a state and a profile.

    zeta and rho satisfy rho = zeta + eta - x*eta_x identically; both are
    assembled by the product rule so the identity holds to machine precision
    on the grid.  nu is the chi-weighted elevation integral and
    beta = 3*nu/(8L).
    """

    zeta: np.ndarray
    rho: np.ndarray
    rho_x: np.ndarray
    psi_tilde: np.ndarray
    nu: float
    beta: float


def multiplier_fields(grid: Grid, state, profile: CutoffProfile) -> MultiplierFields:
    eta, psi = state.eta, state.psi
    eta_x = grid.diff(eta)
    eta_xx = grid.diff(eta, order=2)
    m, m_x, m_xx = profile.m, profile.m_x, profile.m_xx
    x = grid.x
    zeta = m_x * eta + m * eta_x + 1.5 * profile.chi * eta - 0.25 * eta
    rho = (m - x) * eta_x + 2.25 * eta - 0.5 * m_x * eta
    rho_x = ((m_x - 1.0) * eta_x + (m - x) * eta_xx + 2.25 * eta_x
             - 0.5 * m_xx * eta - 0.5 * m_x * eta_x)
    nu = grid.integrate(profile.chi * eta)
    return MultiplierFields(
        zeta=zeta, rho=rho, rho_x=rho_x,
        psi_tilde=psi - grid.mean(psi),
        nu=nu, beta=3.0 * nu / (8.0 * grid.L),
    )


@dataclass
class AssumptionReport:
    """Signed distances to the decay-theorem constraint boundaries.

    ``all_ok`` requires every margin (including the static surface-tension
    condition) to be nonnegative; ``hypotheses_ok`` covers only the
    state-dependent hypotheses and is what trajectory checks gate on.  The
    rho_x constraint is strict in theorem mode, so a zero margin fails it.
    """

    margins: dict
    all_ok: bool
    hypotheses_ok: bool

    SOLUTION_KEYS = ("rho", "rho_x", "nu", "mx_etax2", "eta_x", "min_eta")


def assumption_monitor(grid: Grid, state, profile: CutoffProfile,
                       params: PhysicalParams) -> AssumptionReport:
    eta = state.eta
    eta_x = grid.diff(eta)
    mf = multiplier_fields(grid, state, profile)
    margins = {
        "rho": float(np.min(mf.rho)) + params.h / 4.0,
        "rho_x": 0.25 - float(np.max(np.abs(mf.rho_x))),
        "nu": params.h * grid.L / 3.0 - mf.nu,
        "mx_etax2": 2.0 - float(np.max(np.abs(profile.m_x) * eta_x**2)),
        "eta_x": 1.0 - float(np.max(np.abs(eta_x))),
        "min_eta": float(np.min(eta)) + 0.5 * params.h,
        "tension": params.g - params.kappa * profile.sup_mxx**2,
    }
    strict = margins["rho_x"] > 0.0
    solution_ok = strict and all(
        margins[k] >= 0.0 for k in AssumptionReport.SOLUTION_KEYS if k != "rho_x"
    )
    return AssumptionReport(
        margins=margins,
        all_ok=solution_ok and margins["tension"] >= 0.0,
        hypotheses_ok=solution_ok,
    )
