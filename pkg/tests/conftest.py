import numpy as np
import pytest

from wwdamp.dtn import EllipticSolver
from wwdamp.dynamics import Simulator, standing_wave_state
from wwdamp.grid import Grid
from wwdamp.params import ControlParams, PhysicalParams, build_cutoff

STANDARD = dict(g=9.81, kappa=0.01, h=1.0, L=np.pi, delta=1.0, lam=1.0)


@pytest.fixture(scope="session")
def params():
    return PhysicalParams(g=STANDARD["g"], kappa=STANDARD["kappa"],
                          h=STANDARD["h"], L=STANDARD["L"])


@pytest.fixture(scope="session")
def ctrl():
    return ControlParams(delta=STANDARD["delta"], lam=STANDARD["lam"])


@pytest.fixture(scope="session")
def grid128():
    return Grid(STANDARD["L"], 128)


@pytest.fixture(scope="session")
def grid256():
    return Grid(STANDARD["L"], 256)


@pytest.fixture(scope="session")
def profile256(params, ctrl, grid256):
    return build_cutoff(params, ctrl, grid256)


@pytest.fixture(scope="session")
def solver128(grid128, params):
    return EllipticSolver(grid128, params.h, 32)


def random_even_band(grid, rng, scale=1.0):
    """Random even band-limited field below the dealias cut."""
    F = np.zeros(grid.N // 2 + 1, dtype=complex)
    F[: grid.n_dealias + 1] = rng.standard_normal(grid.n_dealias + 1)
    f = grid.irfft(F)
    f = grid.symmetrize(f, "even")
    m = np.max(np.abs(f))
    return scale * f / m if m > 0 else f


@pytest.fixture(scope="session")
def damped_run_small(grid256, params, ctrl, profile256):
    """Short damped reference run shared by verifier tests (amplitude small
    enough that the decay-theorem hypotheses hold throughout)."""
    sim = Simulator(grid256, params, ctrl, profile256, M=32, damping=True)
    state0 = standing_wave_state(grid256, params, 2, 0.001)
    traj = sim.simulate(state0, T=4.0)
    return sim, traj
