"""Physical/control parameters and the wall-zone multiplier profile.

The damping actuator is localized by an even C-infinity window ``phi`` equal
to 1 on [0, L-delta] and 0 on [L-delta/2, L], from which the multiplier
m(x) = x*phi(x) and the damping weight chi = 1 - m_x are built.  All profile
fields have closed-form derivatives, so suprema are measured by direct
evaluation on an oversampled grid rather than by finite differencing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid

OVERSAMPLE = 4


@dataclass(frozen=True)
class PhysicalParams:
    """Tank geometry and restoring coefficients."""

    g: float = 9.81
    kappa: float = 0.01
    h: float = 1.0
    L: float = float(np.pi)

    def __post_init__(self):
        if self.g <= 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if self.h <= 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if self.L <= 0:
            raise ValueError(f"L must be positive, got {self.L}")


@dataclass(frozen=True)
class ControlParams:
    """Damping-zone width and feedback gain."""

    delta: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    def validate_against(self, params: PhysicalParams) -> None:
        if self.delta >= params.L:
            raise ValueError(
                f"delta must be smaller than L, got delta={self.delta}, L={params.L}"
            )


# -- C-infinity unit ramp r: [0,1] -> [0,1], flat to all orders at both ends --


def _ramp(s):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    out[s <= 0.0] = 0.0
    out[s >= 1.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    # r = 1/(1 + exp(q)), q = 1/s - 1/(1-s); monotone, r(1/2) = 1/2
    q = np.clip(1.0 / sm - 1.0 / (1.0 - sm), -700.0, 700.0)
    out[mid] = 1.0 / (1.0 + np.exp(q))
    return out


def _ramp_d12(s):
    """First and second derivative of the unit ramp."""
    s = np.asarray(s, dtype=float)
    d1 = np.zeros_like(s)
    d2 = np.zeros_like(s)
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    q = np.clip(1.0 / sm - 1.0 / (1.0 - sm), -700.0, 700.0)
    r = 1.0 / (1.0 + np.exp(q))
    q1 = -1.0 / sm**2 - 1.0 / (1.0 - sm) ** 2
    q2 = 2.0 / sm**3 - 2.0 / (1.0 - sm) ** 3
    w = r * (1.0 - r)
    d1[mid] = -q1 * w
    d2[mid] = w * (-q2 + q1**2 * (1.0 - 2.0 * r))
    return d1, d2


def window_eval(x, L: float, delta: float):
    """phi, phi', phi'' of the even window at arbitrary points."""
    x = np.asarray(x, dtype=float)
    xa = np.abs(x)
    sgn = np.sign(x)
    width = 0.5 * delta
    # s runs 0 -> 1 as |x| goes from L-delta/2 down to L-delta
    s = (L - 0.5 * delta - xa) / width
    phi = _ramp(s)
    d1, d2 = _ramp_d12(s)
    dphi = -d1 / width * sgn
    d2phi = d2 / width**2
    return phi, dphi, d2phi


def multiplier_eval(x, L: float, delta: float):
    """m, m_x, m_xx with m = x*phi(x)."""
    x = np.asarray(x, dtype=float)
    phi, dphi, d2phi = window_eval(x, L, delta)
    m = x * phi
    m_x = phi + x * dphi
    m_xx = 2.0 * dphi + x * d2phi
    return m, m_x, m_xx


@dataclass
class CutoffProfile:
    """Sampled multiplier profile plus cached suprema.

    Immutable after construction; safe to share between concurrent runs.
    The suprema are measured analytically on a grid oversampled by
    ``OVERSAMPLE`` so the downstream constants are reproducible from
    (params, N) alone.
    """

    grid: Grid
    delta: float
    phi: np.ndarray
    m: np.ndarray
    m_x: np.ndarray
    m_xx: np.ndarray
    chi: np.ndarray
    chi_x: np.ndarray
    sup_m: float
    sup_mxx: float
    sup_chi: float
    sup_chix: float
    sup_one_minus_mx: float
    trivial: bool = field(default=False)

    @classmethod
    def uniform(cls, grid: Grid) -> "CutoffProfile":
        """The m = 0, chi = 1 profile (damping everywhere)."""
        zero = np.zeros(grid.N)
        one = np.ones(grid.N)
        return cls(
            grid=grid, delta=0.0, phi=zero.copy(), m=zero.copy(),
            m_x=zero.copy(), m_xx=zero.copy(), chi=one, chi_x=zero.copy(),
            sup_m=0.0, sup_mxx=0.0, sup_chi=1.0, sup_chix=0.0,
            sup_one_minus_mx=1.0, trivial=True,
        )


def build_cutoff(params: PhysicalParams, ctrl: ControlParams, grid: Grid) -> CutoffProfile:
    """Construct the Definition-2.3-style profile on the given grid.

    Rejects delta >= L and grids that put fewer than 16 nodes across the
    delta/2 transition band.
    """
    ctrl.validate_against(params)
    if abs(grid.L - params.L) > 1e-12 * params.L:
        raise ValueError("grid half-period does not match params.L")
    nodes_in_ramp = 0.5 * ctrl.delta / grid.dx
    if nodes_in_ramp < 16:
        raise ValueError(
            f"grid too coarse for the transition: {nodes_in_ramp:.1f} nodes "
            f"across delta/2, need >= 16"
        )

    L, delta = params.L, ctrl.delta
    phi, dphi, _ = window_eval(grid.x, L, delta)
    m, m_x, m_xx = multiplier_eval(grid.x, L, delta)
    # exact odd reflection: node 0 sits at x = -L where m vanishes anyway
    m = 0.5 * (m - m[grid._mirror])
    chi = 1.0 - m_x
    chi_x = -m_xx

    xs = -L + (2.0 * L / (OVERSAMPLE * grid.N)) * np.arange(OVERSAMPLE * grid.N)
    ms, mxs, mxxs = multiplier_eval(xs, L, delta)
    return CutoffProfile(
        grid=grid, delta=delta, phi=phi, m=m, m_x=m_x, m_xx=m_xx,
        chi=chi, chi_x=chi_x,
        sup_m=float(np.max(np.abs(ms))),
        sup_mxx=float(np.max(np.abs(mxxs))),
        sup_chi=float(np.max(1.0 - mxs)),
        sup_chix=float(np.max(np.abs(mxxs))),
        sup_one_minus_mx=float(np.max(np.abs(1.0 - mxs))),
    )


def check_tension_compatibility(params: PhysicalParams, profile: CutoffProfile) -> float:
    """Margin g - kappa*(sup m_xx)^2; nonnegative means the surface-tension
    smallness condition holds for this profile."""
    return params.g - params.kappa * profile.sup_mxx**2


def check_multiplier_domination(profile: CutoffProfile) -> float:
    """Worst slack of L*chi - |x - m| over an oversampled grid."""
    grid = profile.grid
    L = grid.L
    if profile.trivial:
        xs = grid.x
        return float(np.min(L - np.abs(xs)))
    xs = -L + (2.0 * L / (OVERSAMPLE * grid.N)) * np.arange(OVERSAMPLE * grid.N)
    ms, mxs, _ = multiplier_eval(xs, L, profile.delta)
    return float(np.min(L * (1.0 - mxs) - np.abs(xs - ms)))


def profile_to_csv(profile: CutoffProfile, path) -> None:
    """Dump x, phi, m, m_x, m_xx, chi, chi_x for plotting and regression."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "phi", "m", "m_x", "m_xx", "chi", "chi_x"])
        for j in range(profile.grid.N):
            writer.writerow(
                ["%.17e" % v for v in (
                    profile.grid.x[j], profile.phi[j], profile.m[j],
                    profile.m_x[j], profile.m_xx[j], profile.chi[j],
                    profile.chi_x[j],
                )]
            )
