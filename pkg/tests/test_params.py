import numpy as np
import pytest

from wwdamp.grid import Grid
from wwdamp.params import (ControlParams, CutoffProfile, PhysicalParams,
                           build_cutoff, check_multiplier_domination,
                           check_tension_compatibility, multiplier_eval,
                           profile_to_csv, window_eval)


def test_param_validation():
    with pytest.raises(ValueError):
        PhysicalParams(g=-1.0)
    with pytest.raises(ValueError):
        PhysicalParams(kappa=-0.1)
    with pytest.raises(ValueError):
        ControlParams(delta=0.0)
    with pytest.raises(ValueError):
        ControlParams(lam=0.0)
    with pytest.raises(ValueError):
        ControlParams(delta=4.0).validate_against(PhysicalParams(L=np.pi))


def test_build_rejects_coarse_grid(params, ctrl, grid128):
    with pytest.raises(ValueError):
        build_cutoff(params, ctrl, grid128)   # 10 nodes across delta/2


def test_window_plateaus(params, ctrl):
    L, delta = params.L, ctrl.delta
    phi, dphi, _ = window_eval(np.array([0.0, 0.3, L - delta, L - delta / 2, L]),
                               L, delta)
    assert phi[0] == 1.0                      # phi(0) = 1
    assert phi[1] == 1.0
    assert phi[2] == 1.0
    assert phi[3] == 0.0
    assert phi[4] == 0.0
    assert np.all(np.abs(dphi[[0, 1, 2, 3, 4]]) == 0.0)


def test_window_monotone_condition(params, ctrl):
    # x * phi'(x) <= 0 on a dense grid
    xs = np.linspace(-params.L, params.L, 4097)
    _, dphi, _ = window_eval(xs, params.L, ctrl.delta)
    assert np.max(xs * dphi) <= 0.0


def test_profile_invariants(params, ctrl, grid256, profile256):
    grid, prof = grid256, profile256
    assert np.all(prof.phi >= 0.0) and np.all(prof.phi <= 1.0)
    # multiplier vanishes at the center and the walls
    assert prof.m[grid.N // 2] == 0.0         # x = 0
    assert prof.m[0] == 0.0                   # x = -L == L
    # exact odd symmetry by construction
    assert np.max(np.abs(prof.m + prof.m[grid._mirror])) == 0.0
    # chi = 1 - m_x pointwise
    assert np.max(np.abs(prof.chi + prof.m_x - 1.0)) < 1e-14
    assert np.min(prof.chi) >= 0.0
    # the damping weight integrates to the full period within quadrature
    # tolerance (the multiplier slope has zero mean)
    assert abs(grid.integrate(prof.chi) - 2 * grid.L) < 5e-5 * 2 * grid.L


def test_figure_style_mxx_bound(params, ctrl, profile256):
    # for the standard geometry the measured supremum respects the
    # piecewise-arc construction's bound 8/delta + 32 L/delta^2
    bound = 8.0 / ctrl.delta + 32.0 * params.L / ctrl.delta**2
    assert profile256.sup_mxx <= bound


def test_suprema_against_dense_oracle(params, ctrl, profile256):
    # independent oracle: direct evaluation on a 4096-node grid
    xs = -params.L + 2 * params.L * np.arange(4096) / 4096
    m, m_x, m_xx = multiplier_eval(xs, params.L, ctrl.delta)
    assert profile256.sup_m == pytest.approx(np.max(np.abs(m)), rel=1e-3)
    assert profile256.sup_mxx == pytest.approx(np.max(np.abs(m_xx)), rel=1e-2)
    assert profile256.sup_chi == pytest.approx(np.max(1 - m_x), rel=1e-3)


def test_tension_margin_zero_kappa(ctrl, grid256):
    params = PhysicalParams(kappa=0.0)
    prof = build_cutoff(params, ctrl, grid256)
    assert check_tension_compatibility(params, prof) == params.g


def test_tension_margin_attained_bound(ctrl, grid256):
    # kappa chosen so the measured supremum exactly saturates the condition
    base = PhysicalParams()
    prof = build_cutoff(base, ctrl, grid256)
    kappa_crit = base.g / prof.sup_mxx**2
    params = PhysicalParams(kappa=kappa_crit)
    margin = check_tension_compatibility(params, prof)
    assert margin == pytest.approx(0.0, abs=1e-12 * base.g)


def test_tension_margin_standard(params, profile256):
    # direct evaluation with the measured supremum; negative at the standard
    # parameters and reported, not raised
    margin = check_tension_compatibility(params, profile256)
    assert margin == pytest.approx(params.g - params.kappa * profile256.sup_mxx**2)
    assert margin < 0.0


def test_multiplier_domination(profile256):
    # L*chi >= |x - m| everywhere, tight at the walls and the interior
    assert check_multiplier_domination(profile256) >= -1e-12


def test_domination_pointwise_cases(params, ctrl, grid256, profile256):
    grid = grid256
    interior = np.abs(grid.x) <= params.L - ctrl.delta
    slack = params.L * profile256.chi - np.abs(grid.x - profile256.m)
    assert np.max(np.abs(slack[interior])) < 1e-12   # x - m = 0 and chi = 0
    assert slack[0] == pytest.approx(0.0, abs=1e-12)  # x = -L: L*1 - L


def test_domination_half_delta(params, grid256):
    ctrl = ControlParams(delta=params.L / 2.0)
    prof = build_cutoff(params, ctrl, grid256)
    assert check_multiplier_domination(prof) >= -1e-12


def test_trivial_profile(grid256):
    prof = CutoffProfile.uniform(grid256)
    assert np.all(prof.chi == 1.0)
    assert np.all(prof.m == 0.0)
    assert prof.sup_chi == 1.0 and prof.sup_mxx == 0.0
    assert check_multiplier_domination(prof) >= 0.0


def test_profile_csv_dump(tmp_path, profile256):
    path = tmp_path / "profile.csv"
    profile_to_csv(profile256, path)
    rows = path.read_text().strip().split("\n")
    assert rows[0] == "x,phi,m,m_x,m_xx,chi,chi_x"
    assert len(rows) == profile256.grid.N + 1
    first = [float(v) for v in rows[1].split(",")]
    assert first[0] == -profile256.grid.L
