"""Numerical verification of the energy identities, inequalities and the
explicit constants chain.

Every check evaluates both sides of its identity through independent
discretizations (surface quadrature vs interior quadrature vs accumulated
time integrals) and reports a residual or a signed slack.  Report entries
are keyed by short equation tags ("C6bis", "C4", "d11", "CL8", "t49",
"C14", "d7", "d8", "d20") forming the stable JSON interface consumed by CI.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dtn import DtnResult, EllipticSolver, InteriorField
from .dynamics import SurfaceState, Trajectory, nonlinear_term
from .energy import assumption_monitor, energy_from, multiplier_fields
from .grid import Grid
from .params import ControlParams, CutoffProfile, PhysicalParams


def _rel(residual: float, *scales: float) -> float:
    return abs(residual) / max(*(abs(s) for s in scales), 1e-300)


# -- pointwise identities -------------------------------------------------------


def verify_flux_identity(grid: Grid, state: SurfaceState, dtn: DtnResult,
                         mu: np.ndarray, mu_x: np.ndarray) -> dict:
    """Balance between the surface quadratic term, the interior cross term
    and the bottom flux, for a periodic C1 weight mu."""
    interior = dtn.interior
    N_surf = nonlinear_term(grid, state.eta, state.psi, dtn.g_eta_psi)
    t_surface = grid.integrate(mu * N_surf)
    t_cross = interior.cross_term(mu_x)
    t_bottom = 0.5 * grid.integrate(mu * interior.bottom_phi_x**2)
    residual = t_surface + t_cross - t_bottom
    return {
        "residual": _rel(residual, t_surface, t_cross, t_bottom),
        "terms": {"surface": t_surface, "cross": t_cross, "bottom": t_bottom},
    }


def verify_pohozaev(grid: Grid, state: SurfaceState, dtn: DtnResult) -> dict:
    """Domain-scaling identity: the x-weighted observation integral equals
    the positive boundary term Sigma plus a surface remainder."""
    interior = dtn.interior
    psi_x = grid.diff(state.psi)
    eta_x = grid.diff(state.eta)
    N_surf = nonlinear_term(grid, state.eta, state.psi, dtn.g_eta_psi)
    lhs = grid.integrate_x_weighted(psi_x * dtn.g_eta_psi)
    sigma = 0.5 * interior.smap.h * interior.bottom_flux_sq() \
        + grid.L * interior.wall_phi_y_sq()
    remainder = grid.integrate(state.eta * N_surf) \
        - grid.integrate_x_weighted(eta_x * N_surf)
    residual = lhs - sigma - remainder
    return {
        "residual": _rel(residual, lhs, sigma, remainder),
        "terms": {"lhs": lhs, "sigma": sigma, "remainder": remainder},
    }


def verify_psi_x_control(grid: Grid, state: SurfaceState, dtn: DtnResult,
                         profile: CutoffProfile) -> dict:
    """Control of the chi-weighted tangential velocity by the damping
    observation, the bottom flux and the interior cross term."""
    eta_x = grid.diff(state.eta)
    if np.max(np.abs(eta_x)) > 1.0:
        return {"skipped": True, "reason": "|eta_x| > 1"}
    interior = dtn.interior
    psi_x = grid.diff(state.psi)
    g = dtn.g_eta_psi
    slack = (8.0 * grid.integrate(profile.chi * g**2)
             + 4.0 * interior.bottom_flux_sq()
             - 8.0 * interior.cross_term(profile.chi_x)
             - grid.integrate(profile.chi * psi_x**2))
    return {"slack": slack, "skipped": False}


@dataclass
class RemainderLedger:
    """Intermediate quantities of the energy-rate bookkeeping."""

    F: float
    R1: float
    R2: float
    R3: float
    R4: float
    Sigma: float
    nu: float
    beta: float


def remainder_ledger(grid: Grid, state: SurfaceState, dtn: DtnResult,
                     profile: CutoffProfile, params: PhysicalParams) -> RemainderLedger:
    kappa = params.kappa
    interior = dtn.interior
    eta, psi = state.eta, state.psi
    eta_x = grid.diff(eta)
    psi_x = grid.diff(psi)
    root = np.sqrt(1.0 + eta_x**2)
    m, m_x, m_xx, chi = profile.m, profile.m_x, profile.m_xx, profile.chi
    mf = multiplier_fields(grid, state, profile)
    N_surf = nonlinear_term(grid, eta, psi, dtn.g_eta_psi)

    F = grid.integrate(dtn.g_eta_psi * m * psi_x) + grid.integrate(N_surf * m * eta_x)
    odd_part = kappa * grid.integrate(m_xx * eta * eta_x / root)
    even_part = kappa * grid.integrate(
        m_x * (1.0 - 0.5 * eta_x**2 / root - 1.0 / root))
    R1 = odd_part + even_part
    R2 = (-0.5 * odd_part + even_part
          + 0.75 * kappa * grid.integrate(eta_x**2 / root)
          + params.g * grid.integrate(chi * eta**2))
    bottom_sq = interior.bottom_flux_sq()
    rho_bottom = (grid.integrate((m * eta_x + 2.25 * eta - 0.5 * m_x * eta)
                                 * interior.bottom_phi_x**2)
                  - grid.integrate_x_weighted(eta_x * interior.bottom_phi_x**2))
    wall = grid.L * interior.wall_phi_y_sq()
    R3 = R2 + 0.5 * (params.h * bottom_sq + rho_bottom) + wall
    R4 = R3 - mf.beta * bottom_sq
    Sigma = 0.5 * params.h * bottom_sq + wall
    return RemainderLedger(F=F, R1=R1, R2=R2, R3=R3, R4=R4, Sigma=Sigma,
                           nu=mf.nu, beta=mf.beta)


def verify_remainder_bound(grid: Grid, state: SurfaceState, dtn: DtnResult,
                           profile: CutoffProfile, params: PhysicalParams) -> dict:
    """Lower bound on the remainder ledger by the strengthened energy."""
    rep = assumption_monitor(grid, state, profile, params)
    if not rep.hypotheses_ok:
        return {"skipped": True, "reason": "hypotheses violated",
                "margins": rep.margins}
    led = remainder_ledger(grid, state, dtn, profile, params)
    mf = multiplier_fields(grid, state, profile)
    interior = dtn.interior
    ebd = energy_from(grid, params, state.eta, state.psi, dtn.g_eta_psi)
    cross = interior.cross_term(mf.rho_x)
    slack = (led.R4 - cross - 0.25 * params.h * interior.bottom_flux_sq()
             + 0.25 * ebd.H_tilde)
    return {"slack": slack, "skipped": False, "ledger": led}


# -- trajectory-level checks ------------------------------------------------------


def verify_dissipation_identity(traj: Trajectory) -> dict:
    """Energy drop equals the accumulated damping work."""
    H0 = traj.H0
    HT = traj.rows[-1]["H"]
    acc = traj.final_acc
    residual = (H0 - HT) - acc["dissipation"]
    return {
        "residual": abs(residual) / max(H0, 1e-300),
        "H0": H0, "HT": HT, "work": acc["dissipation"],
        "applicable": traj.meta["damping"],
    }


def verify_pressure_work_bounds(traj: Trajectory) -> dict:
    """A priori bounds on the pressure's L2 norm and its mean-part work."""
    profile = traj.profile
    lam = traj.ctrl.lam
    H0 = traj.H0
    acc = traj.final_acc
    d7_slack = lam * profile.sup_chi * H0 - acc["Psq"]
    d8_slack = (1.5 * lam / traj.params.g) * profile.sup_one_minus_mx**2 * H0 \
        + acc["p_zeta"]
    bures4_slack = H0 - acc["dissipation"]
    return {"d7_slack": d7_slack, "d8_slack": d8_slack,
            "bures4_slack": bures4_slack}


@dataclass
class InequalityReport:
    """Master time-integrated inequality, term by term."""

    O: float
    W: float
    B: float
    I: float
    int_H: float
    lhs: float
    rhs: float
    slack: float
    hypotheses_ok: bool
    violating_times: list = field(default_factory=list)


def verify_main_inequality(traj: Trajectory) -> InequalityReport:
    """Assemble the observation/work/boundary/interior decomposition from the
    run's accumulators and the endpoint states."""
    grid = traj.grid
    acc = traj.final_acc
    int_H = acc["H_dt"]
    I = 0.25 * traj.params.h * acc["bottom_sq_dt"]
    O = acc["O"]
    W = acc["W"]
    mf0 = multiplier_fields(grid, traj.state(0), traj.profile)
    mfT = multiplier_fields(grid, traj.state(len(traj) - 1), traj.profile)
    B = grid.inner(mf0.zeta, mf0.psi_tilde) - grid.inner(mfT.zeta, mfT.psi_tilde)
    lhs = 0.25 * int_H + I
    rhs = O + W + B
    bad = [traj.ts[i] for i, row in enumerate(traj.rows)
           if not row["hypotheses_ok"]]
    return InequalityReport(O=O, W=W, B=B, I=I, int_H=int_H, lhs=lhs, rhs=rhs,
                            slack=rhs - lhs, hypotheses_ok=not bad,
                            violating_times=bad)


def verify_equipartition(traj: Trajectory, theta: str = "one") -> dict:
    """Time-integrated balance between the restoring and kinetic quadratic
    forms for the weight theta in {"one", "chi"}, using the run's
    stage-accumulated integrals."""
    if theta not in ("one", "chi"):
        raise ValueError("theta must be 'one' or 'chi'")
    key = "eq1" if theta == "one" else "eqchi"
    grid = traj.grid
    acc = traj.final_acc
    w = np.ones(grid.N) if theta == "one" else traj.profile.chi
    s0 = traj.state(0)
    sT = traj.state(len(traj) - 1)
    boundary = grid.integrate(w * sT.eta * sT.psi) - grid.integrate(w * s0.eta * s0.psi)
    lhs = acc[key + "_pot"]
    cross = acc.get(key + "_cross", 0.0)   # identically zero for theta = 1
    rhs = (acc[key + "_kin"] - acc[key + "_pext"] - boundary
           - acc[key + "_nlin"] - cross)
    scale = max(abs(lhs), abs(acc[key + "_kin"]), abs(boundary), 1e-300)
    return {"residual": abs(lhs - rhs) / scale,
            "terms": {"potential": lhs, "kinetic": acc[key + "_kin"],
                      "pressure": acc[key + "_pext"], "boundary": boundary,
                      "quadratic": acc[key + "_nlin"], "cross": cross}}


def equipartition_trapezoid(traj: Trajectory, theta: np.ndarray,
                            theta_x: np.ndarray, solver: EllipticSolver) -> dict:
    """Post-hoc equipartition check for an arbitrary weight, re-solving the
    interior at each stored sample and integrating by the trapezoid rule.
    Accuracy is limited by the output cadence, O(cadence^2)."""
    grid, params = traj.grid, traj.params
    lam = traj.ctrl.lam
    vals = []
    for i in range(len(traj)):
        s = traj.state(i)
        dtn = solver.dtn_apply(s.eta, s.psi)
        eta_x = grid.diff(s.eta)
        root = np.sqrt(1.0 + eta_x**2)
        N_surf = nonlinear_term(grid, s.eta, s.psi, dtn.g_eta_psi)
        deta = dtn.g_eta_psi
        if traj.meta["damping"]:
            raw = lam * traj.profile.chi * deta
            p_ext = raw - grid.mean(raw)
        else:
            p_ext = np.zeros(grid.N)
        vals.append([
            grid.integrate(theta * (params.g * s.eta**2
                                    + params.kappa * eta_x**2 / root)),
            grid.integrate(theta * s.psi * deta),
            grid.integrate(theta * s.eta * p_ext),
            grid.integrate(theta * s.eta * N_surf),
            params.kappa * grid.integrate(theta_x * s.eta * eta_x / root),
        ])
    vals = np.array(vals)
    ts = np.array(traj.ts)
    pot, kin, pext, nlin, cross = (np.trapezoid(vals[:, j], ts) for j in range(5))
    s0, sT = traj.state(0), traj.state(len(traj) - 1)
    boundary = grid.integrate(theta * sT.eta * sT.psi) \
        - grid.integrate(theta * s0.eta * s0.psi)
    rhs = kin - pext - boundary - nlin - cross
    return {"residual": abs(pot - rhs) / max(abs(pot), abs(kin), 1e-300),
            "terms": {"potential": pot, "kinetic": kin, "pressure": pext,
                      "boundary": boundary, "quadratic": nlin, "cross": cross}}


# -- constants ledger --------------------------------------------------------------


@dataclass
class ConstantsLedger:
    """Explicit constants chain ending in the decay bound and halving time."""

    K1: float
    K2: float
    C1: float
    eps1: float
    eps2: float
    eps3: float
    K: float
    C: float
    T0: float
    a: float
    lam: float
    sup_m: float
    sup_mxx: float
    sup_chi: float
    sup_chix: float
    sup_one_minus_mx: float
    tension_margin: float
    budget_slack: float
    provenance: dict

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        return d


def compute_constants(params: PhysicalParams, ctrl: ControlParams,
                      profile: CutoffProfile) -> ConstantsLedger:
    """Evaluate the explicit constants chain for this profile.

    The trace constant K2 has no closed form; the stand-in is the sharp
    flat-strip value at the lowest nonzero mode times a fixed safety factor
    of 4 for the curved-domain distortion (recorded in provenance).  The
    epsilon split gives each budget term at most 1/24.
    """
    if params.kappa <= 0:
        raise ValueError("the constants chain requires kappa > 0")
    g, kappa, h, L = params.g, params.kappa, params.h, params.L
    lam = ctrl.lam
    min_mx = 1.0 - profile.sup_one_minus_mx
    sup_term = (1.25 - 0.5 * min_mx) ** 2
    K1 = 6.0 / kappa * profile.sup_m**2 + 4.0 / g * sup_term
    k1 = np.pi / L
    K2 = 4.0 * 2.0 / (k1 * np.tanh(k1 * h))
    eps1 = 1.0 / (12.0 * K1)
    eps2 = 2.0 / (27.0 * K2)
    if profile.sup_chix > 0:
        eps3 = min(h / (8.0 * L), 1.0 / (96.0 * L * profile.sup_chix))
    else:
        eps3 = h / (8.0 * L)
    C1 = lam / (2.0 * eps1) * profile.sup_chi \
        + 1.5 * lam / g * profile.sup_one_minus_mx**2
    budget = eps1 * K1 / 2.0 + (9.0 / 16.0) * eps2 * K2 \
        + 4.0 * eps3 * L * profile.sup_chix
    budget_slack = 0.125 - budget
    if budget_slack < 0 or 2.0 * eps3 * L > 0.25 * h:
        raise AssertionError("epsilon budget infeasible; selection rule broken")
    K = C1 + K1 + K2 + profile.sup_chi / (eps2 * lam) \
        + 4.0 * eps3 * L / lam + L / (2.0 * eps3 * lam)
    tension_margin = g - kappa * profile.sup_mxx**2
    prov = {
        "K1": "6/kappa * sup(m)^2 + 4/g * sup(5/4 - m_x/2)^2, suprema measured "
              "on the 4x oversampled analytic profile",
        "K2": "flat-strip sharp constant 2/(k1 tanh(k1 h)) at k1 = pi/L, "
              "times safety factor 4 for curved-domain distortion",
        "C1": "lam/(2 eps1) sup(chi) + 3 lam/(2g) sup(1-m_x)^2",
        "eps": "eps1 = 1/(12 K1), eps2 = 2/(27 K2), "
               "eps3 = min(h/(8L), 1/(96 L sup|chi_x|)); each budget term <= 1/24",
        "C": "C = 8K, halving time T0 = 2C, interior absorption a = 1/8",
        "tension": "margin g - kappa*sup(m_xx)^2"
                   + ("" if tension_margin >= 0 else
                      " is NEGATIVE for this profile: the surface-tension "
                      "smallness condition fails and the decay bound is not "
                      "theorem-backed at these parameters"),
    }
    return ConstantsLedger(
        K1=K1, K2=K2, C1=C1, eps1=eps1, eps2=eps2, eps3=eps3,
        K=K, C=8.0 * K, T0=16.0 * K, a=0.125, lam=lam,
        sup_m=profile.sup_m, sup_mxx=profile.sup_mxx, sup_chi=profile.sup_chi,
        sup_chix=profile.sup_chix, sup_one_minus_mx=profile.sup_one_minus_mx,
        tension_margin=tension_margin, budget_slack=budget_slack,
        provenance=prov,
    )


@dataclass
class DecayReport:
    monotone: bool
    worst_increase: float
    half_time: float | None
    ratio_TH_over_H0: float
    int_H_over_H0: float
    C: float
    bound_ratio_ok: bool
    bound_int_ok: bool
    halving_windows_checked: int
    halving_ok: bool
    fitted_rate: float


def check_decay(traj: Trajectory, ledger: ConstantsLedger) -> DecayReport:
    """Decay diagnostics: monotonicity, halving time, the (loose) explicit
    bounds, and a log-linear rate fit for regression snapshots."""
    H = traj.column("H")
    ts = np.array(traj.ts)
    H0 = H[0]
    diffs = np.diff(H)
    monotone = bool(np.all(diffs <= 1e-12 * H0))
    worst = float(np.max(diffs) / H0) if len(diffs) else 0.0
    below = np.nonzero(H <= 0.5 * H0)[0]
    half_time = float(ts[below[0]]) if len(below) else None
    T = ts[-1] - ts[0]
    ratio = H[-1] * T / H0
    int_H = traj.final_acc["H_dt"] / H0
    n_windows = int(T // ledger.T0)
    halving_ok = True
    for n in range(1, n_windows + 1):
        i = int(np.argmin(np.abs(ts - ts[0] - n * ledger.T0)))
        halving_ok &= H[i] <= 2.0 ** (-n) * H0
    mask = H > 1e-10 * H0
    if np.sum(mask) > 2 and traj.meta["damping"]:
        coeff = np.polyfit(ts[mask], np.log(H[mask]), 1)
        rate = float(coeff[0])
    else:
        rate = 0.0
    return DecayReport(
        monotone=monotone, worst_increase=worst, half_time=half_time,
        ratio_TH_over_H0=float(ratio), int_H_over_H0=float(int_H), C=ledger.C,
        bound_ratio_ok=bool(ratio <= ledger.C), bound_int_ok=bool(int_H <= ledger.C),
        halving_windows_checked=n_windows, halving_ok=bool(halving_ok),
        fitted_rate=rate,
    )


# -- suite --------------------------------------------------------------------------


def run_suite(traj: Trajectory, solver: EllipticSolver, tags=None,
              identity_tol: float = 1e-3) -> dict:
    """Run the verification suite on a trajectory; returns the report dict
    keyed by equation tag, each entry carrying residual-or-slack, tolerance,
    pass flag and the grid signature.

    The pointwise identity checks (C6bis, C4) run on the stored states at
    the run's own vertical resolution, which damped-run states do not fully
    resolve (the feedback injects fine-scale surface structure); their
    trajectory-level tolerance is therefore 1e-3.  The 1e-4 figure applies
    to the canonical curved-state setup exercised by the acceptance suite.
    """
    grid, params, profile = traj.grid, traj.params, traj.profile
    ctrl = traj.ctrl
    H0 = traj.H0
    gridsig = {"N": grid.N, "M": solver.M, "dt": traj.meta["dt"]}
    all_tags = ("C6bis", "C4", "d11", "CL8", "t49", "C14", "d7", "d8", "d20")
    tags = all_tags if tags is None else tags
    report = {}
    slack_tol = 1e-6 * H0

    sample_idx = _verification_samples(traj)
    dtns = {}

    def dtn_at(i):
        if i not in dtns:
            s = traj.state(i)
            dtns[i] = solver.dtn_apply(s.eta, s.psi)
        return dtns[i]

    if "C6bis" in tags or "C4" in tags:
        worst_c6 = 0.0
        worst_c4 = 0.0
        ones = np.ones(grid.N)
        zeros = np.zeros(grid.N)
        # derivative of the trigonometric interpolant of chi, so the weight
        # pair is consistent on this grid
        chi_x_spec = grid.diff(profile.chi)
        for i in sample_idx:
            s = traj.state(i)
            if np.max(np.abs(s.eta)) == 0.0 and np.max(np.abs(s.psi)) == 0.0:
                continue
            d = dtn_at(i)
            r1 = verify_flux_identity(grid, s, d, ones, zeros)["residual"]
            r2 = verify_flux_identity(grid, s, d, profile.chi, chi_x_spec)["residual"]
            worst_c6 = max(worst_c6, r1, r2)
            worst_c4 = max(worst_c4, verify_pohozaev(grid, s, d)["residual"])
        if "C6bis" in tags:
            report["C6bis"] = {"residual": worst_c6, "tolerance": identity_tol,
                               "pass": worst_c6 < identity_tol, "grid": gridsig}
        if "C4" in tags:
            report["C4"] = {"residual": worst_c4, "tolerance": identity_tol,
                            "pass": worst_c4 < identity_tol, "grid": gridsig}

    if "d11" in tags:
        worst = np.inf
        for i in sample_idx:
            out = verify_psi_x_control(grid, traj.state(i), dtn_at(i), profile)
            if not out.get("skipped"):
                worst = min(worst, out["slack"])
        report["d11"] = {"slack": None if worst is np.inf else worst,
                         "tolerance": -slack_tol,
                         "pass": worst is np.inf or worst >= -slack_tol,
                         "grid": gridsig}

    if "CL8" in tags:
        worst = np.inf
        n_checked = 0
        for i in sample_idx:
            out = verify_remainder_bound(grid, traj.state(i), dtn_at(i),
                                         profile, params)
            if not out.get("skipped"):
                worst = min(worst, out["slack"])
                n_checked += 1
        report["CL8"] = {"slack": None if worst is np.inf else worst,
                         "tolerance": -slack_tol,
                         "pass": worst is np.inf or worst >= -slack_tol,
                         "samples_checked": n_checked, "grid": gridsig}

    if "t49" in tags:
        rep = verify_main_inequality(traj)
        report["t49"] = {"slack": rep.slack, "tolerance": -slack_tol,
                         "pass": rep.slack >= -slack_tol,
                         "hypotheses_ok": rep.hypotheses_ok,
                         "violating_times": rep.violating_times[:8],
                         "terms": {"O": rep.O, "W": rep.W, "B": rep.B,
                                   "I": rep.I, "int_H": rep.int_H},
                         "grid": gridsig}

    if "C14" in tags:
        out = verify_dissipation_identity(traj)
        if traj.meta["damping"]:
            report["C14"] = {"residual": out["residual"], "tolerance": 1e-6,
                             "pass": out["residual"] < 1e-6, "grid": gridsig}
        else:
            report["C14"] = {"residual": None, "tolerance": 1e-6,
                             "pass": True, "applicable": False, "grid": gridsig}

    if "d7" in tags or "d8" in tags:
        out = verify_pressure_work_bounds(traj)
        if "d7" in tags:
            report["d7"] = {"slack": out["d7_slack"], "tolerance": -slack_tol,
                            "pass": out["d7_slack"] >= -slack_tol, "grid": gridsig}
        if "d8" in tags:
            report["d8"] = {"slack": out["d8_slack"], "tolerance": -slack_tol,
                            "pass": out["d8_slack"] >= -slack_tol, "grid": gridsig}

    if "d20" in tags:
        led = compute_constants(params, ctrl, profile)
        report["d20"] = {"slack": led.budget_slack, "tolerance": 0.0,
                         "pass": led.budget_slack >= 0.0,
                         "constants": {"K1": led.K1, "K2": led.K2, "C1": led.C1,
                                       "K": led.K, "C": led.C, "T0": led.T0},
                         "tension_margin": led.tension_margin, "grid": gridsig}
    return report


def _verification_samples(traj: Trajectory, max_samples: int = 24) -> list:
    n = len(traj)
    if n <= max_samples:
        return list(range(n))
    stride = max(1, n // max_samples)
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return idx
