"""
Tests for work distributions, fluctuation-theorem estimators and bootstrap errors
"""

import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from src.core.exceptions import EmptyOverlapError
from src.models.measurement import ThermalSpec, TransitionMatrix, WorkRecord
from src.models.quantum import FockSpace
from src.models.statistics import Provenance, WorkDistribution
from src.services.evolution_service import drag_displacement_alpha
from src.services.hamiltonian_service import build_dragged, build_driven_tls, driven_tls_reversed
from src.services.stats_service import (
    bootstrap_error,
    crooks_check,
    crooks_slope,
    exponential_average_statistic,
    free_energy_difference,
    jarzynski_average,
    jarzynski_free_energy,
    mean_work_statistic,
    partition_ratio,
    sampled_distribution,
    work_distribution,
    work_moments,
)
from src.services.tpm_service import (
    boltzmann_distribution,
    dragged_transition_matrix,
    run_tpm_montecarlo,
    thermal_distribution,
    tls_thermal_spec,
    transition_matrix,
)
from src.utils.units import beta_quanta, nbar_to_temperature

NU = 2 * math.pi * 20e3
RABI = 2 * math.pi * 50e3
T_EFF = 5.63e-6


def _oscillator_case(cutoff: int = 32, nbar: float = 0.157):
    space = FockSpace(cutoff=cutoff)
    alpha = drag_displacement_alpha(2 * math.pi * 15e3, NU, 5e-6, 50e-6)
    transitions = dragged_transition_matrix(alpha, space)
    thermal = thermal_distribution(ThermalSpec(nbar=nbar), cutoff)
    spectrum = np.arange(cutoff) + 0.5
    return thermal, transitions, spectrum, nbar_to_temperature(nbar, NU)


def test_work_distribution_merges_degenerate_work():
    thermal = np.array([0.5, 0.5])
    transitions = TransitionMatrix(entries=[[0.5, 0.5], [0.5, 0.5]])
    spectrum = np.array([0.0, 1.0])
    dist = work_distribution(thermal, transitions, spectrum, spectrum)
    assert_allclose(dist.support, [-1.0, 0.0, 1.0])
    assert_allclose(dist.probabilities, [0.25, 0.5, 0.25])
    assert dist.provenance == Provenance.EXACT
    assert_allclose(dist.stderr(), 0.0)


def test_work_distribution_checks_dimensions():
    with pytest.raises(ValueError):
        work_distribution(np.array([1.0]), TransitionMatrix.identity(2), np.zeros(2), np.zeros(2))


def test_jarzynski_holds_for_dragged_oscillator():
    thermal, transitions, spectrum, temperature = _oscillator_case()
    dist = work_distribution(thermal, transitions, spectrum, spectrum)
    assert jarzynski_average(dist, temperature, NU) == pytest.approx(1.0, abs=1e-9)
    assert free_energy_difference(spectrum, spectrum, temperature, NU) == pytest.approx(0.0, abs=1e-12)
    moments = work_moments(dist)
    # the mean work is |alpha|^2 quanta for a displaced oscillator
    alpha = drag_displacement_alpha(2 * math.pi * 15e3, NU, 5e-6, 50e-6)
    assert moments.mean == pytest.approx(abs(alpha) ** 2, rel=1e-6)
    assert moments.dissipated_mean > 0
    # some realizations still show negative work
    assert dist.probabilities[dist.support < -1e-9].sum() > 1e-3


def test_jarzynski_holds_for_driven_tls():
    hamiltonian = build_driven_tls(RABI, 5e-6)
    thermal = thermal_distribution(tls_thermal_spec(T_EFF, RABI), 2)
    dist = work_distribution(
        thermal, transition_matrix(hamiltonian), hamiltonian.initial_spectrum(), hamiltonian.final_spectrum()
    )
    ratio = partition_ratio(hamiltonian.initial_spectrum(), hamiltonian.final_spectrum(), T_EFF, RABI)
    assert ratio == pytest.approx(0.98326, abs=1e-4)
    assert jarzynski_average(dist, T_EFF, RABI) == pytest.approx(ratio, abs=1e-6)
    delta_f = free_energy_difference(hamiltonian.initial_spectrum(), hamiltonian.final_spectrum(), T_EFF, RABI)
    assert jarzynski_free_energy(dist, T_EFF, RABI) == pytest.approx(delta_f, abs=1e-6)
    assert work_moments(dist, delta_f).dissipated_mean >= -1e-12


def test_crooks_holds_for_driven_tls():
    tau = 10e-6
    forward_h = build_driven_tls(RABI, tau)
    backward_h = driven_tls_reversed(RABI, tau)
    thermal = thermal_distribution(tls_thermal_spec(T_EFF, RABI), 2)
    forward = work_distribution(
        thermal, transition_matrix(forward_h), forward_h.initial_spectrum(), forward_h.final_spectrum()
    )
    backward_thermal = boltzmann_distribution(backward_h.initial_spectrum(), beta_quanta(T_EFF, RABI))
    backward = work_distribution(
        backward_thermal, transition_matrix(backward_h), backward_h.initial_spectrum(), backward_h.final_spectrum()
    )
    delta_f = free_energy_difference(forward_h.initial_spectrum(), forward_h.final_spectrum(), T_EFF, RABI)
    result = crooks_check(forward, backward, T_EFF, RABI, delta_f)
    assert len(result.points) == 4
    assert result.max_deviation < 1e-6


def test_crooks_excludes_points_below_floor():
    forward = WorkDistribution(support=[-1.0, 1.0], probabilities=[1e-9, 1.0 - 1e-9])
    backward = WorkDistribution(support=[-1.0, 1.0], probabilities=[0.5, 0.5])
    result = crooks_check(forward, backward, 1e-6, NU)
    assert result.excluded == [-1.0]
    assert len(result.points) == 1
    lonely = WorkDistribution(support=[5.0], probabilities=[1.0])
    with pytest.raises(EmptyOverlapError):
        crooks_check(lonely, lonely, 1e-6, NU)


def test_sampled_crooks_slope_is_one():
    thermal, transitions, _, temperature = _oscillator_case()
    hamiltonian = build_dragged(NU, 2 * math.pi * 15e3, 5e-6, 50e-6, FockSpace(cutoff=32))
    shots = 100_000
    # the reversed drag displaces by the same |alpha|, so a second seed stands in for it
    forward, backward = (
        sampled_distribution(run_tpm_montecarlo(hamiltonian, thermal, shots, seed, transitions=transitions))
        for seed in (0, 1)
    )
    assert forward.provenance == Provenance.SAMPLED
    assert forward.shots == shots
    result = crooks_check(forward, backward, temperature, NU)
    assert len(result.points) >= 3
    assert all(p.forward_count >= 5 and p.backward_count >= 5 for p in result.points)
    fit = crooks_slope(result, temperature, NU)
    assert fit.slope == pytest.approx(1.0, abs=0.05)


def test_jarzynski_holds_for_random_bistochastic_maps():
    rng = np.random.default_rng(31)
    beta = beta_quanta(T_EFF, RABI)
    for _ in range(10):
        dimension = 6
        mixture = rng.dirichlet(np.ones(4))
        entries = sum(w * np.eye(dimension)[rng.permutation(dimension)] for w in mixture)
        transitions = TransitionMatrix(entries=entries)
        assert transitions.is_doubly_stochastic()
        initial = np.sort(rng.uniform(-2.0, 2.0, dimension))
        final = np.sort(rng.uniform(-2.0, 2.0, dimension))
        dist = work_distribution(boltzmann_distribution(initial, beta), transitions, initial, final)
        ratio = partition_ratio(initial, final, T_EFF, RABI)
        assert jarzynski_average(dist, T_EFF, RABI) == pytest.approx(ratio, abs=1e-6)


def test_crooks_slope_needs_two_points():
    forward = WorkDistribution(support=[0.0], probabilities=[1.0])
    result = crooks_check(forward, forward, 1e-6, NU)
    with pytest.raises(EmptyOverlapError):
        crooks_slope(result, 1e-6, NU)


def test_sampled_distribution_from_records():
    records = [
        WorkRecord(n_initial=0, m_final=1, work=1.0),
        WorkRecord(n_initial=1, m_final=1, work=0.0),
        WorkRecord(n_initial=0, m_final=1, work=1.0 + 1e-12),
    ]
    dist = sampled_distribution(records)
    assert_allclose(dist.support, [0.0, 1.0])
    assert_allclose(dist.probabilities, [1 / 3, 2 / 3])
    assert list(dist.counts) == [1, 2]
    assert dist.count_at(1.0) == 2
    empty = sampled_distribution([])
    assert empty.is_empty and empty.shots == 0


def test_bootstrap_error_matches_binomial_scale():
    rng = np.random.default_rng(4)
    work = rng.choice([0.0, 1.0], size=4000, p=[0.7, 0.3])
    frame = pd.DataFrame({"work": work, "weight": np.ones(work.size)})
    estimate, stderr = bootstrap_error(frame, mean_work_statistic, resamples=400, seed=1)
    assert estimate == pytest.approx(work.mean())
    assert stderr == pytest.approx(math.sqrt(0.21 / 4000), rel=0.2)
    with pytest.raises(ValueError):
        bootstrap_error(frame, mean_work_statistic, resamples=50)


def test_bootstrap_interval_coverage():
    thermal, transitions, spectrum, temperature = _oscillator_case(cutoff=16)
    exact = work_distribution(thermal, transitions, spectrum, spectrum)
    statistic = exponential_average_statistic(temperature, NU)
    truth = jarzynski_average(exact, temperature, NU)
    covered = 0
    for seed in range(100):
        frame = _multinomial_frame(exact, 100_000, 1000 + seed)
        estimate, stderr = bootstrap_error(frame, statistic, resamples=400, seed=seed)
        covered += abs(estimate - truth) <= 3 * stderr
    assert covered >= 99


def test_bootstrap_error_scales_as_inverse_root_shots():
    thermal, transitions, spectrum, temperature = _oscillator_case(cutoff=16)
    exact = work_distribution(thermal, transitions, spectrum, spectrum)
    statistic = exponential_average_statistic(temperature, NU)
    # spread of exp(-beta W) under the exact distribution
    values = np.exp(-beta_quanta(temperature, NU) * exact.support)
    spread = math.sqrt(np.dot(exact.probabilities, values**2) - np.dot(exact.probabilities, values) ** 2)
    for shots in (10_000, 100_000, 1_000_000):
        _, stderr = bootstrap_error(_multinomial_frame(exact, shots, shots), statistic, resamples=1000, seed=3)
        assert stderr == pytest.approx(spread / math.sqrt(shots), rel=0.2)


def _multinomial_frame(exact: WorkDistribution, shots: int, seed: int) -> pd.DataFrame:
    counts = np.random.default_rng(seed).multinomial(shots, exact.probabilities)
    work = np.repeat(exact.support, counts)
    return pd.DataFrame({"work": work, "weight": np.ones(work.size)})
