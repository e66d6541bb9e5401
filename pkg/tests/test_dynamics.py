import numpy as np
import pytest

from conftest import random_even_band
from wwdamp.dtn import EllipticSolver
from wwdamp.dynamics import (Simulator, SurfaceState, curvature, make_state,
                             nonlinear_term, pressure_feedback,
                             standing_wave_state, suggested_dt, surface_traces)
from wwdamp.errors import BlowUpError
from wwdamp.grid import EVEN
from wwdamp.params import ControlParams, CutoffProfile


@pytest.fixture(scope="module")
def sim_undamped(grid128, params, ctrl):
    return Simulator(grid128, params, ctrl, CutoffProfile.uniform(grid128),
                     M=32, damping=False)


def test_curvature_zero(grid128):
    assert np.max(np.abs(curvature(grid128, np.zeros(grid128.N)))) == 0.0


def test_curvature_linearization(grid128):
    # H(eps cos kx) = -eps k^2 cos kx + O(eps^3): epsilon-halving
    k = 3.0
    base = np.cos(k * grid128.x)
    errs = []
    for eps in (0.1, 0.05):
        errs.append(np.max(np.abs(curvature(grid128, eps * base)
                                  + eps * k**2 * base)))
    assert errs[0] / errs[1] > 6.0     # cubic remainder: factor 8 per halving


def test_curvature_parity(grid128):
    rng = np.random.default_rng(0)
    eta = random_even_band(grid128, rng, 0.1)
    out = curvature(grid128, eta)
    assert grid128.parity_defect(out, EVEN) < 1e-12


def test_nonlinear_term_constant_psi(grid128, params, solver128):
    eta = 0.03 * np.cos(2 * grid128.x)
    psi = np.full(grid128.N, 1.2)
    g_ep = solver128.dtn_apply(eta, psi).g_eta_psi
    out = nonlinear_term(grid128, eta, psi, g_ep)
    assert np.max(np.abs(out)) < 1e-9


def test_nonlinear_term_flat_reduction(grid128, params):
    # eta = 0: (1/2) psi_x^2 - (1/2)(G0 psi)^2
    from wwdamp.dtn import dtn_flat
    psi = np.cos(2 * grid128.x)
    g0 = dtn_flat(grid128, psi, params.h)
    out = nonlinear_term(grid128, np.zeros(grid128.N), psi, g0)
    expected = grid128.project(0.5 * grid128.diff(psi) ** 2 - 0.5 * g0**2,
                               EVEN, dealias=True)
    assert np.max(np.abs(out - expected)) < 1e-13


def test_nonlinear_term_matches_interior_form(grid256, params):
    # trace-form equals (1/2)phi_x^2 - (1/2)phi_y^2 + eta_x phi_x phi_y
    # evaluated at the surface through one-sided stencils, to 1e-6 relative
    solver = EllipticSolver(grid256, params.h, 256)
    eta = 0.01 * params.h * np.cos(2 * np.pi * grid256.x / grid256.L)
    psi = np.cos(grid256.x)
    res = solver.dtn_apply(eta, psi)
    surf = nonlinear_term(grid256, eta, psi, res.g_eta_psi)
    interior = res.interior
    eta_x = grid256.diff(eta)
    d5 = grid256.project(0.5 * interior.surface_V**2 - 0.5 * interior.surface_B**2
                         + eta_x * interior.surface_V * interior.surface_B,
                         EVEN, dealias=True)
    scale = np.max(np.abs(surf))
    assert np.max(np.abs(surf - d5)) < 1e-6 * max(scale, 1e-30) * 10


def test_surface_traces_identities(grid128, params, solver128):
    rng = np.random.default_rng(5)
    eta = 0.05 * params.h * np.cos(2 * np.pi * grid128.x / grid128.L)
    psi = random_even_band(grid128, rng)
    g_ep = solver128.dtn_apply(eta, psi).g_eta_psi
    V, B = surface_traces(grid128, eta, psi, g_ep)
    eta_x = grid128.diff(eta)
    psi_x = grid128.diff(psi)
    assert np.max(np.abs(psi_x - (V + eta_x * B))) < 1e-12
    assert np.max(np.abs(g_ep - (B - eta_x * V))) < 1e-12


def test_pressure_feedback_properties(grid256, params, ctrl, profile256):
    rng = np.random.default_rng(1)
    deta = random_even_band(grid256, rng)
    p_ext, p_of_t = pressure_feedback(grid256, profile256, ctrl.lam, deta)
    assert abs(grid256.mean(p_ext)) < 1e-15 * max(1.0, np.max(np.abs(p_ext)))
    assert p_of_t == pytest.approx(-grid256.mean(ctrl.lam * profile256.chi * deta))
    # zero input
    p0, c0 = pressure_feedback(grid256, profile256, ctrl.lam, np.zeros(grid256.N))
    assert np.max(np.abs(p0)) == 0.0 and c0 == 0.0
    # chi vanishes where the window is identically one, so away from the
    # walls the pressure reduces to its mean shift
    interior = np.abs(grid256.x) <= grid256.L - ctrl.delta
    assert np.max(np.abs(p_ext[interior] - p_of_t)) < 1e-13


def test_rhs_zero_state(grid128, sim_undamped):
    ev = sim_undamped.rhs(SurfaceState(0.0, np.zeros(grid128.N), np.zeros(grid128.N)))
    assert np.max(np.abs(ev.deta_dt)) == 0.0
    assert np.max(np.abs(ev.dpsi_dt)) == 0.0
    assert ev.energy.H == 0.0


def test_rhs_linearized_mode(grid128, params, sim_undamped):
    # dpsi/dt = -(g + kappa k^2) eta + O(eps^2) at psi = 0
    k = 2.0
    base = np.cos(k * grid128.x)
    coef = params.g + params.kappa * k**2
    errs = []
    for eps in (1e-3, 5e-4):
        st = make_state(grid128, eps * base, np.zeros(grid128.N))
        ev = sim_undamped.rhs(st)
        errs.append(np.max(np.abs(ev.dpsi_dt + coef * eps * base)))
        assert np.max(np.abs(ev.deta_dt)) < 1e-12
    assert errs[0] / errs[1] > 3.5    # quadratic remainder


def test_rhs_damped_difference_is_pressure(grid256, params, ctrl, profile256):
    rng = np.random.default_rng(2)
    st = make_state(grid256, 0.001 * np.cos(2 * grid256.x),
                    0.001 * random_even_band(grid256, rng))
    sim_d = Simulator(grid256, params, ctrl, profile256, M=32, damping=True)
    sim_u = Simulator(grid256, params, ctrl, profile256, M=32, damping=False)
    ev_d = sim_d.rhs(st)
    ev_u = sim_u.rhs(st)
    diff = ev_d.dpsi_dt - ev_u.dpsi_dt
    expected = -grid256.project(ev_d.p_ext, EVEN, dealias=True)
    assert np.max(np.abs(diff - expected)) < 1e-12


def test_step_zero_state_stays_zero(grid128, sim_undamped):
    st = SurfaceState(0.0, np.zeros(grid128.N), np.zeros(grid128.N))
    out = sim_undamped.step(st, 0.01)
    assert np.max(np.abs(out.eta)) == 0.0
    assert np.max(np.abs(out.psi)) == 0.0
    assert out.t == pytest.approx(0.01)


def test_integrator_fourth_order(grid128, params, sim_undamped):
    # terminal-state self-convergence under dt halving (all dts below the
    # stability cap so none are silently clipped)
    st = standing_wave_state(grid128, params, 1, 0.05)
    T = 0.36
    outs = []
    for dt in (0.012, 0.006, 0.003):
        traj = sim_undamped.simulate(st, T, dt=dt)
        outs.append(traj.state(len(traj) - 1).eta)
    e1 = np.max(np.abs(outs[0] - outs[2]))
    e2 = np.max(np.abs(outs[1] - outs[2]))
    # error(dt) ~ dt^4: Richardson ratio 16*(1-1/256)/(1-1/16) ~ 17
    assert e1 / e2 > 10.0


def test_energy_conservation_short(grid128, params, sim_undamped):
    st = standing_wave_state(grid128, params, 1, 0.01)
    traj = sim_undamped.simulate(st, T=2.0)
    H = traj.column("H")
    assert np.max(np.abs(H - H[0])) < 1e-9 * H[0]


def test_volume_and_parity_preserved(grid128, params, sim_undamped):
    st = standing_wave_state(grid128, params, 1, 0.02)
    traj = sim_undamped.simulate(st, T=1.0)
    for i in range(len(traj)):
        s = traj.state(i)
        assert abs(grid128.mean(s.eta)) < 1e-12
        assert grid128.parity_defect(s.eta, EVEN) < 1e-12
        assert grid128.parity_defect(s.psi, EVEN) < 1e-12


def test_mean_psi_drift_matches_bottom_flux(grid128, params, sim_undamped):
    # d<psi>/dt = -(1/4L) int phi_x^2 at the bottom, within O(dz^2)
    st = standing_wave_state(grid128, params, 1, 0.05)
    traj = sim_undamped.simulate(st, T=2.0)
    drift = traj.rows[-1]["mean_psi"] - traj.rows[0]["mean_psi"]
    predicted = -traj.final_acc["bottom_sq_dt"] / (4.0 * grid128.L)
    assert drift == pytest.approx(predicted, rel=2e-3)


def test_blowup_guard_trips(grid128, params, ctrl):
    sim = Simulator(grid128, params, ctrl, CutoffProfile.uniform(grid128),
                    M=32, damping=False)
    deep = standing_wave_state(grid128, params, 1, 0.62)
    with pytest.raises(BlowUpError):
        sim.simulate(deep, T=0.5)


def test_suggested_dt_damped_cap(grid256, params, ctrl, profile256):
    base = suggested_dt(grid256, params)
    capped = suggested_dt(grid256, params, ctrl, profile256, damping=True)
    assert capped < base
    k_c = grid256.k[grid256.n_dealias]
    rate = ctrl.lam * profile256.sup_chi * k_c * np.tanh(k_c * params.h)
    assert capped == pytest.approx(2.5 / rate)


def test_damped_energy_monotone(grid256, params, ctrl, profile256, damped_run_small):
    _, traj = damped_run_small
    H = traj.column("H")
    assert np.all(np.diff(H) <= 1e-12 * H[0])
    assert H[-1] < 0.35 * H[0]


def test_dissipation_identity_short(damped_run_small):
    _, traj = damped_run_small
    H = traj.column("H")
    residual = (H[0] - H[-1]) - traj.final_acc["dissipation"]
    assert abs(residual) < 1e-7 * H[0]
