import numpy as np
import pytest

from pulse_atom_sim import AtomParams, PulseShape, PulseSpec, TimeGrid, solve_bloch


@pytest.fixture(scope="session")
def rb_atom() -> AtomParams:
    """Rb D2 atom at the calculated overlap, the package default."""
    return AtomParams.from_lifetime(26.24, 0.03)


@pytest.fixture(scope="session")
def free_decay_trajectory(rb_atom):
    """P_e(0) = 1 with no drive, integrated over [0, 150] ns."""
    spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=15.0, mean_photons=0.0)
    return solve_bloch(spec, rb_atom, TimeGrid(0.0, 150.0, 0.1),
                       initial_state=(1.0, 0.0))


@pytest.fixture(scope="session")
def fig3_trajectory(rb_atom):
    """Exponential pulse, tau = 15 ns, <N> = 104: the fluorescence-run regime."""
    spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=15.0, mean_photons=104.0)
    return solve_bloch(spec, rb_atom, TimeGrid(spec.start_time(), 150.0, 0.1))


@pytest.fixture()
def flat_trajectory():
    """Constant P_e = 0.1 over [0, 1100] ns, for counting-statistics tests."""
    from pulse_atom_sim import Trajectory

    t = np.linspace(0.0, 1100.0, 2201)
    return Trajectory(times=t, p_e=np.full_like(t, 0.1),
                      coherence=np.zeros_like(t), p_e_max=0.1, t_of_max=0.0)
