"""
Tests for the drag displacement, Magnus propagation, noise trajectories and
the dephasing master equation
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.exceptions import ConvergenceError, StepTooLargeError
from src.models.evolution import DephasingSpec, NoiseSpec
from src.models.hamiltonian import RampSchedule
from src.models.measurement import ThermalSpec
from src.models.quantum import DensityMatrix, FockSpace, StateVector
from src.services.evolution_service import (
    adiabatic_ramp_down_duration,
    batch_bounds,
    calibrate_drive_amplitude,
    default_noise_spec,
    drag_displacement_alpha,
    ensemble_density_matrix,
    frozen_protocol,
    gamma_for_noise_sigma,
    noise_sigma_for_gamma,
    propagate_dephasing,
    propagate_trajectory,
    propagate_trajectory_ensemble,
    propagate_unitary,
    time_ordered_propagator,
)
from src.services.fock_service import spin_operators
from src.services.hamiltonian_service import (
    build_bichromatic,
    build_dragged,
    build_driven_tls,
    instantaneous_eigenbasis,
)
from src.services.stats_service import work_distribution
from src.services.tpm_service import dragged_transition_matrix, thermal_distribution, transition_matrix

NU = 2 * math.pi * 20e3
DRIVE = 2 * math.pi * 15e3
RABI = 2 * math.pi * 50e3


def test_drag_displacement_reference_value():
    alpha = drag_displacement_alpha(DRIVE, NU, 5e-6, 50e-6)
    assert abs(alpha) == pytest.approx(0.5 * (15 / 20) * 0.98364, rel=1e-4)


def test_drag_displacement_vanishes_for_whole_period_ramps():
    period = adiabatic_ramp_down_duration(NU)
    assert period == pytest.approx(50e-6)
    assert abs(drag_displacement_alpha(DRIVE, NU, 2 * period, period)) < 1e-9
    # slower ramps displace less
    fast = abs(drag_displacement_alpha(DRIVE, NU, 5e-6, period))
    slow = abs(drag_displacement_alpha(DRIVE, NU, 45e-6, period))
    assert slow < fast


def test_exact_period_protocol_does_no_work():
    period = adiabatic_ramp_down_duration(NU)
    alpha = drag_displacement_alpha(DRIVE, NU, period, period)
    assert abs(alpha) < 1e-12
    cutoff = 32
    spectrum = np.arange(cutoff) + 0.5
    dist = work_distribution(
        thermal_distribution(ThermalSpec(nbar=0.157), cutoff),
        dragged_transition_matrix(alpha, FockSpace(cutoff=cutoff)),
        spectrum,
        spectrum,
    )
    assert dist.probability_at(0.0, 1e-9) == pytest.approx(1.0, abs=1e-12)


def test_calibrate_drive_amplitude_hits_target():
    amplitude = calibrate_drive_amplitude(0.9, NU, 25e-6, 50e-6)
    assert abs(drag_displacement_alpha(amplitude, NU, 25e-6, 50e-6)) == pytest.approx(0.9, rel=1e-12)
    with pytest.raises(ValueError):
        drag_displacement_alpha(DRIVE, NU, 0.0, 50e-6)


def test_magnus_propagator_matches_analytic_displacement():
    space = FockSpace(cutoff=32)
    rng = np.random.default_rng(2024)
    ramp_down = adiabatic_ramp_down_duration(NU)
    for _ in range(20):
        tau = rng.uniform(5e-6, 25e-6)
        amplitude = calibrate_drive_amplitude(rng.uniform(0.1, 1.5), NU, tau, ramp_down)
        # peak shift stays below N/4 over this range of tau
        assert (amplitude / (2 * NU)) ** 2 < space.cutoff / 4
        hamiltonian = build_dragged(NU, amplitude, tau, ramp_down, space)
        numeric = transition_matrix(hamiltonian, tol=1e-8)
        analytic = dragged_transition_matrix(drag_displacement_alpha(amplitude, NU, tau, ramp_down), space)
        l1 = np.abs(numeric.entries[:4] - analytic.entries[:4]).sum(axis=1)
        assert np.all(l1 < 1e-6), (tau, amplitude, l1)


def test_time_ordered_propagator_is_unitary():
    hamiltonian = build_driven_tls(RABI, 5e-6)
    unitary = time_ordered_propagator(hamiltonian, tol=1e-10)
    assert_allclose(unitary.conj().T @ unitary, np.eye(2), atol=1e-10)


def test_time_ordered_propagator_reports_nonconvergence():
    hamiltonian = build_driven_tls(RABI, 5e-6)
    with pytest.raises(ConvergenceError):
        time_ordered_propagator(hamiltonian, tol=1e-30, max_halvings=1)


def test_propagate_unitary_constant_field():
    omega = 2 * math.pi * 10e3
    protocol = frozen_protocol(0.5 * omega * spin_operators().sx, math.pi / omega)
    final = propagate_unitary(protocol, 0.0, math.pi / omega, StateVector.basis(0, 2, spin_dim=2))
    assert final.populations[1] == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        propagate_unitary(protocol, 1.0, 0.0, StateVector.basis(0, 2, spin_dim=2))


def test_noise_sigma_round_trips_gamma():
    sigma = noise_sigma_for_gamma(448e3, RABI)
    assert gamma_for_noise_sigma(sigma, RABI) == pytest.approx(448e3)
    with pytest.raises(ValueError):
        noise_sigma_for_gamma(-1.0, RABI)


def test_default_noise_spec_resolves_protocol_and_noise():
    hamiltonian = build_driven_tls(RABI, 5e-6)
    noise = default_noise_spec(hamiltonian, 1340e3, seed=3)
    assert noise.dt <= 5e-6 / 1000
    assert noise.dt <= 0.1 / (noise.sigma**2 * RABI**2)
    finer = default_noise_spec(hamiltonian, 1340e3, seed=3, steps=4000)
    assert finer.dt == pytest.approx(5e-6 / 4000)


def test_trajectory_step_checks():
    hamiltonian = build_driven_tls(RABI, 5e-6)
    coarse = NoiseSpec(sigma=1e-4, dt=5e-7, seed=0)
    with pytest.raises(StepTooLargeError):
        propagate_trajectory(hamiltonian, coarse, 0.0, 5e-6, StateVector.basis(0, 2, spin_dim=2))
    oscillator = build_dragged(NU, DRIVE, 5e-6, 50e-6, FockSpace(cutoff=4))
    with pytest.raises(ValueError):
        propagate_trajectory_ensemble(
            oscillator, NoiseSpec(sigma=0.0, dt=1e-9), 0.0, 55e-6, np.zeros((1, 2)), np.array([0])
        )


def test_noiseless_trajectory_matches_unitary():
    hamiltonian = build_driven_tls(RABI, 5e-6)
    noise = default_noise_spec(hamiltonian, 0.0)
    start = StateVector.basis(0, 2, spin_dim=2)
    trajectory = propagate_trajectory(hamiltonian, noise, 0.0, 5e-6, start)
    reference = propagate_unitary(hamiltonian, 0.0, 5e-6, start, tol=1e-10)
    assert abs(trajectory.overlap(reference)) == pytest.approx(1.0, abs=1e-9)


def test_trajectories_are_keyed_by_index_not_batch():
    hamiltonian = build_driven_tls(RABI, 5e-6)
    noise = default_noise_spec(hamiltonian, 448e3, seed=11)
    states = np.tile(np.array([1.0, 0.0], dtype=complex), (6, 1))
    batch = propagate_trajectory_ensemble(hamiltonian, noise, 0.0, 5e-6, states, np.arange(10, 16))
    single = propagate_trajectory(hamiltonian, noise, 0.0, 5e-6, StateVector.basis(0, 2, spin_dim=2), index=13)
    assert_allclose(batch[3], single.amplitudes, atol=1e-12)
    assert_allclose(np.linalg.norm(batch, axis=1), np.ones(6), atol=1e-12)
    # different indices see different noise
    assert not np.allclose(batch[0], batch[1])


def test_static_dephasing_matches_closed_form():
    omega = 2 * math.pi * 50e3
    gamma = 1e5
    duration = 10e-6
    protocol = frozen_protocol(0.5 * omega * spin_operators().sx, duration)
    rho = propagate_dephasing(
        protocol, DephasingSpec(gamma=gamma), 0.0, duration, DensityMatrix.diagonal([1.0, 0.0], spin_dim=2)
    )
    # Bloch z-component rotates at omega and decays at gamma
    expected_up = 0.5 * (1.0 - math.exp(-gamma * duration) * math.cos(omega * duration))
    assert rho.populations()[1] == pytest.approx(expected_up, abs=1e-7)


def test_zero_dephasing_master_equation_is_unitary():
    hamiltonian = build_driven_tls(RABI, 10e-6)
    start = StateVector.basis(1, 2, spin_dim=2)
    rho = propagate_dephasing(hamiltonian, DephasingSpec(gamma=0.0), 0.0, 10e-6, DensityMatrix.from_state(start))
    psi = propagate_unitary(hamiltonian, 0.0, 10e-6, start, tol=1e-10)
    assert_allclose(rho.elements, np.outer(psi.amplitudes, psi.amplitudes.conj()), atol=1e-7)


def test_dephasing_keeps_frozen_eigenbasis_populations():
    rng = np.random.default_rng(8)
    M = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    H = 2 * math.pi * 10e3 * (M + M.conj().T)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    start = DensityMatrix(elements=A @ A.conj().T / np.trace(A @ A.conj().T).real)
    duration, gamma = 20e-6, 5e4
    protocol = frozen_protocol(H, duration)
    _, vectors, _ = instantaneous_eigenbasis(H)

    def in_eigenbasis(rho: DensityMatrix) -> np.ndarray:
        return vectors.conj().T @ rho.elements @ vectors

    initial = in_eigenbasis(start)
    closed = in_eigenbasis(propagate_dephasing(protocol, DephasingSpec(gamma=0.0), 0.0, duration, start))
    dephased = in_eigenbasis(propagate_dephasing(protocol, DephasingSpec(gamma=gamma), 0.0, duration, start))
    assert_allclose(np.diag(closed).real, np.diag(initial).real, atol=1e-8)
    assert_allclose(np.diag(dephased).real, np.diag(initial).real, atol=1e-8)
    # coherences only decay, at gamma
    off = ~np.eye(3, dtype=bool)
    assert_allclose(np.abs(dephased[off]), np.abs(initial[off]) * math.exp(-gamma * duration), atol=1e-7)


def test_bichromatic_drive_reduces_to_dragged_oscillator():
    space = FockSpace(cutoff=16)
    bichromatic = build_bichromatic(NU, RampSchedule.up_down(DRIVE, 5e-6, 50e-6), space)
    dragged = build_dragged(NU, DRIVE, 5e-6, 50e-6, space)
    u_bichromatic = time_ordered_propagator(bichromatic, tol=1e-10)
    u_dragged = time_ordered_propagator(dragged, tol=1e-10)
    # sigma_x = +1 sees the dragged force unchanged
    plus = np.array([1.0, 1.0]) / math.sqrt(2)
    ground = np.zeros(space.cutoff)
    ground[0] = 1.0
    expected = np.kron(plus, u_dragged[:, 0])
    evolved = u_bichromatic @ np.kron(plus, ground)
    assert abs(np.vdot(expected, evolved)) ** 2 > 1 - 1e-9


def test_trajectory_ensemble_reproduces_master_equation():
    tau = 5e-6
    gamma = 448e3
    hamiltonian = build_driven_tls(RABI, tau)
    reference = propagate_dephasing(
        hamiltonian, DephasingSpec(gamma=gamma), 0.0, tau, DensityMatrix.diagonal([1.0, 0.0], spin_dim=2)
    )
    count = 10_000
    states = np.tile(np.array([1.0, 0.0], dtype=complex), (count, 1))
    failures = 0
    for seed in range(20):
        noise = default_noise_spec(hamiltonian, gamma, seed=seed)
        final = propagate_trajectory_ensemble(hamiltonian, noise, 0.0, tau, states, np.arange(count))
        average = ensemble_density_matrix(final, seed=seed)
        assert average.trajectories == count
        failures += not np.all(average.within(reference.elements, sigmas=3.0))
    assert failures <= 1


def test_batch_bounds_cover_range():
    assert batch_bounds(10, 4) == [(0, 4), (4, 8), (8, 10)]
    assert batch_bounds(0, 4) == []
