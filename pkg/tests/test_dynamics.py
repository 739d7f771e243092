import math

import numpy as np
import pytest
from scipy.integrate import quad

from pulse_atom_sim import (
    AtomParams,
    PulseShape,
    PulseSpec,
    TimeGrid,
    Trajectory,
    coupling,
    default_grid,
    envelope_value,
    solve_bloch,
    weak_field_oracle,
)
from pulse_atom_sim.dynamics import envelope_squared_integral, local_maxima
from pulse_atom_sim.errors import DomainError, GridError, NumericalError


def containment_excess(traj: Trajectory) -> float:
    """How far (P_e - 1/2)^2 + s^2 exceeds the Bloch bound 1/4."""
    r2 = (traj.p_e - 0.5) ** 2 + traj.coherence**2
    return float(r2.max() - 0.25)


class TestEnvelope:
    def test_exponential_value_at_edge(self):
        spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=15.0, mean_photons=1.0)
        assert envelope_value(spec, 0.0) == pytest.approx(1.0 / math.sqrt(15.0), rel=1e-12)
        assert envelope_value(spec, 1.0) == 0.0
        assert envelope_value(spec, -30.0) == pytest.approx(
            math.exp(-1.0) / math.sqrt(15.0), rel=1e-12)

    def test_square_support(self):
        spec = PulseSpec(shape=PulseShape.SQUARE, tau=15.0, mean_photons=1.0)
        assert envelope_value(spec, 1.0) == 0.0
        assert envelope_value(spec, -16.0) == 0.0
        for t in (-15.0, -7.0, 0.0):
            assert envelope_value(spec, t) == pytest.approx(1.0 / math.sqrt(15.0))

    @pytest.mark.parametrize("shape", [PulseShape.RISING_EXP, PulseShape.SQUARE])
    def test_unit_intensity_normalization(self, shape):
        spec = PulseSpec(shape=shape, tau=15.0, mean_photons=1.0)
        val, _ = quad(lambda t: envelope_value(spec, t) ** 2, -np.inf, 0.0, limit=400)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_intensity_integral_matches_quadrature(self):
        spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=15.0, mean_photons=1.0)
        for a, b in ((-40.0, -3.0), (-7.0, 2.0), (1.0, 5.0)):
            val, _ = quad(lambda t: envelope_value(spec, t) ** 2, a, b, limit=200)
            assert envelope_squared_integral(spec, a, b) == pytest.approx(val, abs=1e-10)

    def test_tabulated_renormalization(self):
        t = np.linspace(-150.0, 0.0, 1501)
        raw = 3.7 * np.exp(t / 30.0)  # deliberately unnormalized
        spec = PulseSpec(shape=PulseShape.TABULATED, tau=15.0, mean_photons=1.0,
                         samples=np.column_stack([t, raw]))
        assert envelope_squared_integral(spec, -150.0, 0.0) == pytest.approx(1.0, rel=1e-6)

    def test_validation(self):
        with pytest.raises(DomainError):
            PulseSpec(shape=PulseShape.SQUARE, tau=-1.0, mean_photons=1.0)
        with pytest.raises(DomainError):
            PulseSpec(shape=PulseShape.SQUARE, tau=1.0, mean_photons=-2.0)
        with pytest.raises(DomainError):
            PulseSpec(shape=PulseShape.TABULATED, tau=1.0, mean_photons=1.0)


class TestCoupling:
    def test_zero_photons(self, rb_atom):
        spec = PulseSpec(shape=PulseShape.SQUARE, tau=15.0, mean_photons=0.0)
        t = np.linspace(-20.0, 5.0, 50)
        assert np.all(coupling(spec, rb_atom, t) == 0.0)

    def test_square_amplitude(self, rb_atom):
        spec = PulseSpec(shape=PulseShape.SQUARE, tau=15.0, mean_photons=1300.0)
        expected = math.sqrt(0.03 * (1.0 / 26.24) * 1300.0 / 15.0)
        assert expected == pytest.approx(0.3148, abs=2e-4)
        assert coupling(spec, rb_atom, -5.0) == pytest.approx(expected, rel=1e-12)

    def test_exponential_two_tau_rolloff(self, rb_atom):
        spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=15.0, mean_photons=10.0)
        g0 = coupling(spec, rb_atom, 0.0)
        assert coupling(spec, rb_atom, -2.0 * 15.0) == pytest.approx(g0 / math.e, rel=1e-12)


class TestSolver:
    def test_free_decay(self, rb_atom, free_decay_trajectory):
        expected = np.exp(-rb_atom.gamma * free_decay_trajectory.times)
        assert np.abs(free_decay_trajectory.p_e - expected).max() <= 1e-6

    def test_pi_pulse_without_decay(self, rb_atom):
        tau = 15.0
        nbar = math.pi**2 / (4.0 * rb_atom.gamma_p * tau)
        spec = PulseSpec(shape=PulseShape.SQUARE, tau=tau, mean_photons=nbar)
        traj = solve_bloch(spec, rb_atom, TimeGrid(-tau, 5.0, 0.05), decay_override=0.0)
        assert traj.p_e_at(0.0) == pytest.approx(1.0, abs=1e-6)

    def test_steady_state_saturation(self, rb_atom):
        spec = PulseSpec(shape=PulseShape.SQUARE, tau=150.0, mean_photons=1300.0)
        traj = solve_bloch(spec, rb_atom, TimeGrid(-150.0, 50.0, 0.1))
        assert traj.p_e_at(0.0) == pytest.approx(0.50, abs=0.02)

    def test_bloch_containment(self, rb_atom, fig3_trajectory):
        assert containment_excess(fig3_trajectory) <= 1e-6
        for shape, nbar in ((PulseShape.SQUARE, 1300.0), (PulseShape.RISING_EXP, 5.0)):
            spec = PulseSpec(shape=shape, tau=15.0, mean_photons=nbar)
            traj = solve_bloch(spec, rb_atom, default_grid(spec, rb_atom))
            assert containment_excess(traj) <= 1e-6

    def test_halved_step_convergence(self, rb_atom):
        spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=15.0, mean_photons=104.0)
        a = solve_bloch(spec, rb_atom, TimeGrid(spec.start_time(), 100.0, 0.1))
        b = solve_bloch(spec, rb_atom, TimeGrid(spec.start_time(), 100.0, 0.05))
        assert abs(a.p_e_max - b.p_e_max) <= 1e-7

    def test_weak_field_linearity(self, rb_atom):
        ratios = []
        for nbar in (0.001, 0.002, 0.004):
            spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=26.24, mean_photons=nbar)
            traj = solve_bloch(spec, rb_atom, default_grid(spec, rb_atom))
            ratios.append(traj.p_e_max / nbar)
        spread = (max(ratios) - min(ratios)) / min(ratios)
        assert spread <= 0.02

    def test_post_pulse_exponential_decay(self, rb_atom, fig3_trajectory):
        mask = (fig3_trajectory.times >= 5.0) & (
            fig3_trajectory.times <= 5.0 + 3.0 / rb_atom.gamma)
        slope, _ = np.polyfit(fig3_trajectory.times[mask],
                              np.log(fig3_trajectory.p_e[mask]), 1)
        assert -slope == pytest.approx(rb_atom.gamma, rel=1e-4)

    def test_time_translation_covariance(self, rb_atom):
        shift = 37.0
        base = PulseSpec(shape=PulseShape.SQUARE, tau=15.0, mean_photons=50.0)
        moved = PulseSpec(shape=PulseShape.SQUARE, tau=15.0, mean_photons=50.0,
                          t_end=shift)
        a = solve_bloch(base, rb_atom, TimeGrid(-15.0, 60.0, 0.1),
                        rtol=1e-12, atol=1e-14)
        b = solve_bloch(moved, rb_atom, TimeGrid(-15.0 + shift, 60.0 + shift, 0.1),
                        rtol=1e-12, atol=1e-14)
        probe = np.linspace(-15.0, 60.0, 1501)
        assert np.abs(a.p_e_at(probe) - b.p_e_at(probe + shift)).max() <= 1e-9

    def test_detuning_reduces_excitation(self, rb_atom):
        spec = PulseSpec(shape=PulseShape.SQUARE, tau=15.0, mean_photons=20.0)
        detuned = AtomParams(gamma=rb_atom.gamma, eta_p=rb_atom.eta_p, detuning=0.3)
        on = solve_bloch(spec, rb_atom, default_grid(spec, rb_atom))
        off = solve_bloch(spec, detuned, default_grid(spec, detuned))
        assert off.p_e_max < on.p_e_max
        assert containment_excess(off) <= 1e-6

    def test_tabulated_matches_analytic_envelope(self, rb_atom):
        t = np.linspace(-150.0, 0.0, 3001)
        samples = np.column_stack([t, np.exp(t / 30.0) / math.sqrt(15.0)])
        tab = PulseSpec(shape=PulseShape.TABULATED, tau=15.0, mean_photons=104.0,
                        samples=samples)
        ana = PulseSpec(shape=PulseShape.RISING_EXP, tau=15.0, mean_photons=104.0)
        traj_tab = solve_bloch(tab, rb_atom, TimeGrid(-150.0, 50.0, 0.1))
        traj_ana = solve_bloch(ana, rb_atom, TimeGrid(-150.0, 50.0, 0.1))
        assert traj_tab.p_e_max == pytest.approx(traj_ana.p_e_max, rel=1e-3)

    def test_rabi_oscillations_present(self, rb_atom):
        spec = PulseSpec(shape=PulseShape.SQUARE, tau=15.0, mean_photons=1300.0)
        traj = solve_bloch(spec, rb_atom, TimeGrid(-15.0, 60.0, 0.05))
        assert len(local_maxima(traj, 0.02)) >= 2

    def test_grid_and_coverage_errors(self, rb_atom):
        with pytest.raises(GridError):
            TimeGrid(5.0, 5.0, 0.1)
        with pytest.raises(GridError):
            TimeGrid(0.0, 1.0, -0.5)
        spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=15.0, mean_photons=10.0)
        with pytest.raises(GridError):
            solve_bloch(spec, rb_atom, TimeGrid(-20.0, 50.0, 0.1))  # starts mid-pulse

    def test_trajectory_validation_and_immutability(self, free_decay_trajectory):
        with pytest.raises(GridError):
            Trajectory(times=np.array([0.0, 0.0, 1.0]), p_e=np.zeros(3),
                       coherence=np.zeros(3), p_e_max=0.0, t_of_max=0.0)
        with pytest.raises(NumericalError):
            Trajectory(times=np.array([0.0, 1.0]), p_e=np.array([0.0, 1.5]),
                       coherence=np.zeros(2), p_e_max=1.5, t_of_max=1.0)
        with pytest.raises(ValueError):
            free_decay_trajectory.p_e[0] = 0.5

    def test_p_e_max_equals_grid_maximum(self, fig3_trajectory):
        assert fig3_trajectory.p_e_max == fig3_trajectory.p_e.max()
        assert fig3_trajectory.times[int(np.argmax(fig3_trajectory.p_e))] == \
            fig3_trajectory.t_of_max


class TestWeakFieldOracle:
    def test_zero_drive(self, rb_atom):
        spec = PulseSpec(shape=PulseShape.SQUARE, tau=15.0, mean_photons=0.0)
        traj = weak_field_oracle(spec, rb_atom, TimeGrid(-20.0, 50.0))
        assert np.all(traj.p_e == 0.0)

    def test_matched_exponential_transfers_eta_per_photon(self, rb_atom):
        # tau = 1/Gamma: first-order peak sits at the pulse edge with
        # P_e_max / <N> -> eta_p exactly.
        nbar = 1e-3
        spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=26.24, mean_photons=nbar)
        oracle = weak_field_oracle(spec, rb_atom)
        assert oracle.p_e_max / nbar == pytest.approx(rb_atom.eta_p, rel=1e-3)
        solver = solve_bloch(spec, rb_atom, default_grid(spec, rb_atom))
        assert oracle.p_e_max == pytest.approx(solver.p_e_max, rel=0.01)

    def test_square_pulse_agreement(self, rb_atom):
        spec = PulseSpec(shape=PulseShape.SQUARE, tau=15.0, mean_photons=0.01)
        oracle = weak_field_oracle(spec, rb_atom)
        solver = solve_bloch(spec, rb_atom, default_grid(spec, rb_atom))
        assert oracle.p_e_max == pytest.approx(solver.p_e_max, rel=0.01)
