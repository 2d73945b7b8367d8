"""
Two-point measurement protocol: thermal preparation, exact transition
matrices and Monte-Carlo work sampling
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.config import get_settings
from src.core.constants import HBAR, K_B
from src.core.exceptions import CutoffError, InfiniteTemperatureError, NegativeTemperatureError
from src.models.evolution import DephasingSpec
from src.models.measurement import ThermalSpec, TransitionMatrix, WorkRecord
from src.models.quantum import FockSpace
from src.services.evolution_service import (
    batch_bounds,
    default_noise_spec,
    dephasing_channel,
    propagate_trajectory_ensemble,
    time_ordered_propagator,
)
from src.services.fock_service import displacement_matrix
from src.services.hamiltonian_service import TimeDependentHamiltonian, instantaneous_eigenbasis
from src.utils.units import beta_quanta

logger = logging.getLogger(__name__)

# Mass a thermal distribution may lose to the Fock cutoff
THERMAL_TAIL_TOL = 1e-6

# First spawn-key entry of the per-block shot streams
SHOT_STREAM = 1

RECORD_COLUMNS = ["n_initial", "m_final", "work", "weight"]


def thermal_distribution(spec: ThermalSpec, dimension: int) -> np.ndarray:
    """
    Thermal populations of the initial eigenstates.

    Oscillator: geometric P_n = nbar^n/(nbar+1)^(n+1) over n < dimension,
    renormalized; raises CutoffError when the cutoff drops more than 1e-6.
    """
    if spec.populations is not None:
        if dimension != 2:
            raise ValueError(f"Two-level populations need dimension 2, got {dimension}")
        return np.array(spec.populations, dtype=float)

    nbar = spec.nbar
    if nbar == 0:
        probabilities = np.zeros(dimension)
        probabilities[0] = 1.0
        return probabilities
    levels = np.arange(dimension)
    ratio = nbar / (nbar + 1.0)
    probabilities = ratio**levels / (nbar + 1.0)
    retained = probabilities.sum()
    if retained < 1.0 - THERMAL_TAIL_TOL:
        raise CutoffError(f"nbar = {nbar:.4g} keeps only {retained:.8f} of the population below N = {dimension}")
    return probabilities / retained


def boltzmann_distribution(spectrum: np.ndarray, beta: float) -> np.ndarray:
    """exp(-beta eps)/Z for a spectrum in quanta and beta in 1/quantum"""
    weights = np.exp(-beta * (np.asarray(spectrum, dtype=float) - np.min(spectrum)))
    return weights / weights.sum()


def tls_thermal_spec(temperature: float, rabi_0: float) -> ThermalSpec:
    """Two-level thermal state for the level splitting rabi_0"""
    beta = beta_quanta(temperature, rabi_0)
    excited = 1.0 / (1.0 + math.exp(beta))
    return ThermalSpec(populations=(1.0 - excited, excited), quantum=rabi_0)


def effective_temperature(p_down: float, p_up: float, rabi_0: float) -> float:
    """T_eff = hbar Omega0 / (k_B ln(p_down/p_up))"""
    if p_down <= 0 or p_up <= 0:
        raise ValueError(f"Populations must be positive, got ({p_down}, {p_up})")
    if p_down == p_up:
        raise InfiniteTemperatureError("Equal populations correspond to infinite temperature")
    if p_up > p_down:
        raise NegativeTemperatureError(f"Inverted populations ({p_down}, {p_up}) give a negative temperature")
    return HBAR * rabi_0 / (K_B * math.log(p_down / p_up))


def measurement_bases(hamiltonian: TimeDependentHamiltonian) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenbases projected on before and after the drive"""
    _, initial, _ = instantaneous_eigenbasis(hamiltonian(hamiltonian.t0))
    _, final, _ = instantaneous_eigenbasis(hamiltonian(hamiltonian.t1))
    return initial, final


def transition_matrix(
    hamiltonian: TimeDependentHamiltonian,
    dephasing: Optional[DephasingSpec] = None,
    tol: Optional[float] = None,
) -> TransitionMatrix:
    """
    P[n, m] = <m_f| E(|n_i><n_i|) |m_f> for the closed (unitary) or
    pure-dephasing channel E over the protocol window.
    """
    initial, final = measurement_bases(hamiltonian)
    if dephasing is None or dephasing.gamma == 0:
        unitary = time_ordered_propagator(hamiltonian, tol=tol)
        amplitudes = final.conj().T @ unitary @ initial
        return TransitionMatrix(entries=(np.abs(amplitudes) ** 2).T)

    logger.debug(f"{hamiltonian.name}: dephasing channel at gamma = {dephasing.gamma:.4g} 1/s")
    rows = []
    for rho in dephasing_channel(hamiltonian, dephasing, initial):
        rows.append(np.real(np.einsum("im,ij,jm->m", final.conj(), rho, final)))
    return TransitionMatrix(entries=np.array(rows))


def dragged_transition_matrix(alpha: complex, space: FockSpace) -> TransitionMatrix:
    """Analytic P[n, m] = |<m|D(alpha)|n>|^2 in the bare Fock basis"""
    displacement = displacement_matrix(alpha, space)
    return TransitionMatrix(entries=(np.abs(displacement) ** 2).T)


def shot_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(SHOT_STREAM, block)))


def sample_indices(probabilities: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws; rows of a 2-D probability array are sampled per uniform"""
    cdf = np.cumsum(probabilities, axis=-1)
    if cdf.ndim == 1:
        indices = np.searchsorted(cdf, uniforms * cdf[-1], side="right")
    else:
        indices = np.sum(cdf <= (uniforms * cdf[:, -1])[:, None], axis=1)
    return np.minimum(indices, probabilities.shape[-1] - 1)


def run_tpm_montecarlo(
    hamiltonian: TimeDependentHamiltonian,
    thermal: np.ndarray,
    shots: int,
    seed: int,
    transitions: Optional[TransitionMatrix] = None,
    gamma: float = 0.0,
    collapse_distribution: Optional[np.ndarray] = None,
    trajectory_steps: Optional[int] = None,
) -> List[WorkRecord]:
    """
    Sample `shots` two-point measurement records.

    Without dephasing every initial level evolves deterministically, so its
    transition row is computed once and reused. With gamma > 0 each shot runs
    its own noise trajectory, keyed by the shot index. ``collapse_distribution``
    replaces the ideal first projection by a readout outcome distribution over
    n; outcomes outside the basis are discarded.
    """
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    initial_spectrum = hamiltonian.initial_spectrum()
    final_spectrum = hamiltonian.final_spectrum()
    dimension = len(initial_spectrum)
    first = np.asarray(collapse_distribution if collapse_distribution is not None else thermal, dtype=float)

    if gamma > 0:
        initial, final = measurement_bases(hamiltonian)
        noise = default_noise_spec(hamiltonian, gamma, seed=seed, steps=trajectory_steps)
    elif transitions is None:
        transitions = transition_matrix(hamiltonian)

    block = get_settings().shot_block_size
    n_all, m_all = [], []
    for index, (start, stop) in enumerate(batch_bounds(shots, block)):
        rng = shot_rng(seed, index)
        n = sample_indices(first, rng.random(stop - start))
        if gamma > 0:
            valid = n < dimension
            states = initial[:, np.minimum(n, dimension - 1)].T
            evolved = propagate_trajectory_ensemble(
                hamiltonian, noise, hamiltonian.t0, hamiltonian.t1, states, np.arange(start, stop)
            )
            probabilities = np.abs(evolved @ final.conj()) ** 2
        else:
            valid = n < dimension
            probabilities = transitions.entries[np.minimum(n, dimension - 1)]
        m = sample_indices(probabilities, rng.random(stop - start))
        n_all.append(n[valid])
        m_all.append(m[valid])

    n_all = np.concatenate(n_all)
    m_all = np.concatenate(m_all)
    if len(n_all) < shots:
        logger.warning(f"{hamiltonian.name}: {shots - len(n_all)} shots fell outside the measurement basis")
    work = final_spectrum[m_all] - initial_spectrum[n_all]
    logger.info(f"{hamiltonian.name}: sampled {len(n_all)} work records (seed {seed})")
    return [
        WorkRecord(n_initial=int(n), m_final=int(m), work=float(w))
        for n, m, w in zip(n_all, m_all, work)
    ]


def records_to_frame(records: Sequence[WorkRecord]) -> pd.DataFrame:
    """Records as a DataFrame with columns n_initial, m_final, work, weight"""
    if not records:
        return pd.DataFrame(columns=RECORD_COLUMNS)
    return pd.DataFrame(
        {
            "n_initial": np.fromiter((r.n_initial for r in records), dtype=np.int64, count=len(records)),
            "m_final": np.fromiter((r.m_final for r in records), dtype=np.int64, count=len(records)),
            "work": np.fromiter((r.work for r in records), dtype=float, count=len(records)),
            "weight": np.fromiter((r.weight for r in records), dtype=float, count=len(records)),
        }
    )


def empirical_transition_counts(records: Sequence[WorkRecord], dimension: int) -> np.ndarray:
    counts = np.zeros((dimension, dimension), dtype=np.int64)
    frame = records_to_frame(records)
    np.add.at(counts, (frame["n_initial"].to_numpy(), frame["m_final"].to_numpy()), 1)
    return counts
