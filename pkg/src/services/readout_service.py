"""
Simulated phonon readout: blue-sideband signals and their inversion,
iterative fluorescence / no-fluorescence projections and heating
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import curve_fit, nnls
from scipy.stats import linregress

from src.core.exceptions import IllConditionedError
from src.models.hamiltonian import ModelVariant
from src.models.measurement import (
    BsbSignal,
    DetectionErrorModel,
    DetectionStep,
    DetectionTrace,
    HeatingFit,
    PopulationEstimate,
    PulseKind,
    ThermalSpec,
)
from src.models.quantum import FockSpace, StateVector
from src.services.hamiltonian_service import build_sideband
from src.services.tpm_service import sample_indices, thermal_distribution

logger = logging.getLogger(__name__)

IDEAL = DetectionErrorModel()

# Largest condition number accepted by the sideband inversion
MAX_CONDITION = 1e8

# Extra loop iterations beyond the input support when pulses are imperfect
EXTRA_DETECTIONS = 64

FLUORESCENCE_LOOP = [PulseKind.CARRIER, PulseKind.BLUE_SIDEBAND]

PopulationInput = Union[np.ndarray, Sequence[float], StateVector]


class FluorescenceOutcome(BaseModel):
    """First-fluorescence distribution: populations[n] = P(first bright at detection n+1)"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    populations: np.ndarray
    never: float
    conditional_dark: np.ndarray

    @property
    def total(self) -> float:
        return float(self.populations.sum() + self.never)

    def as_collapse(self) -> np.ndarray:
        """Outcome vector with the no-fluorescence mass appended as the last entry"""
        return np.append(self.populations, self.never)


def bsb_signal(populations: Sequence[float], rabi: float, times: Sequence[float]) -> BsbSignal:
    """P_up(t) = (1 - sum_n p_n cos(sqrt(n+1) rabi t)) / 2"""
    populations = np.asarray(populations, dtype=float)
    times = np.asarray(times, dtype=float)
    frequencies = np.sqrt(np.arange(1, len(populations) + 1)) * rabi
    p_up = 0.5 * (1.0 - np.cos(np.outer(times, frequencies)) @ populations)
    return BsbSignal(times=times, p_up=np.clip(p_up, 0.0, 1.0), rabi=rabi)


def invert_bsb_signal(signal: BsbSignal, n_max: int) -> PopulationEstimate:
    """
    Nonnegative least squares for p_0..p_n_max on the comb sqrt(n+1) rabi,
    with a weighted row pinning sum(p) = 1.
    """
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    times = signal.times
    span = float(times.max() - times.min()) if times.size else 0.0
    slowest_period = 2.0 * math.pi / signal.rabi
    if span < 3.0 * slowest_period:
        raise IllConditionedError(f"Time span {span:.3e} s shorter than 3 periods ({3 * slowest_period:.3e} s)")
    if times.size < n_max + 2:
        raise IllConditionedError(f"{times.size} samples cannot resolve {n_max + 1} components")

    frequencies = np.sqrt(np.arange(1, n_max + 2)) * signal.rabi
    design = np.cos(np.outer(times, frequencies))
    condition = float(np.linalg.cond(design))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise IllConditionedError(f"Design condition number {condition:.3e} exceeds {MAX_CONDITION:.0e}")

    target = 1.0 - 2.0 * signal.p_up
    weight = math.sqrt(times.size)
    system = np.vstack([design, weight * np.ones(n_max + 1)])
    rhs = np.append(target, weight)
    solution, _ = nnls(system, rhs)
    residual = float(np.linalg.norm(design @ solution - target) / math.sqrt(times.size))
    total = solution.sum()
    populations = solution / total if total > 0 else solution
    return PopulationEstimate(populations=populations, residual=residual, condition_number=condition)


def simulate_bsb_signal(
    populations: Sequence[float],
    omega_eff: float,
    eta: float,
    times: Sequence[float],
    space: FockSpace,
) -> BsbSignal:
    """Blue-sideband signal by exact propagation of |down, n> for each populated n"""
    populations = np.asarray(populations, dtype=float)
    times = np.asarray(times, dtype=float)
    H = build_sideband(ModelVariant.BLUE_SIDEBAND, omega_eff, eta, 0.0, space)
    energies, vectors = np.linalg.eigh(H)
    dimension = space.cutoff
    up_rows = np.arange(dimension, 2 * dimension)
    p_up = np.zeros_like(times)
    for n, weight in enumerate(populations):
        if weight == 0:
            continue
        # |down, n> sits at index n in the spin-major layout
        coefficients = vectors[n].conj()
        amplitudes = (vectors[up_rows] * coefficients) @ np.exp(-1j * np.outer(energies, times))
        p_up += weight * np.sum(np.abs(amplitudes) ** 2, axis=0)
    return BsbSignal(times=times, p_up=np.clip(p_up, 0.0, 1.0), rabi=eta * omega_eff)


def _phonon_populations(state: PopulationInput) -> np.ndarray:
    if isinstance(state, StateVector):
        populations = state.populations
        if state.spin_dim == 2:
            half = populations.size // 2
            populations = populations[:half] + populations[half:]
        return populations
    return np.asarray(state, dtype=float)


def _apply_pulse(grid: np.ndarray, pulse: PulseKind, error: float) -> np.ndarray:
    """
    Population map of an adiabatic transfer on grid[spin, n] (row 0 down, row 1 up).

    Carrier swaps (down, n) with (up, n); the blue sideband swaps (down, n-1)
    with (up, n); the red sideband swaps (down, n) with (up, n-1). A fraction
    `error` of every swapped pair stays put.
    """
    swapped = grid.copy()
    if pulse == PulseKind.CARRIER:
        swapped = grid[::-1].copy()
    elif pulse == PulseKind.BLUE_SIDEBAND:
        swapped[0, :-1] = grid[1, 1:]
        swapped[1, 1:] = grid[0, :-1]
    else:
        swapped[0, 1:] = grid[1, :-1]
        swapped[1, :-1] = grid[0, 1:]
    if error == 0:
        return swapped
    moved = swapped != grid
    return np.where(moved, (1.0 - error) * swapped + error * grid, grid)


def _dark_outcome(grid: np.ndarray, errors: DetectionErrorModel) -> Tuple[np.ndarray, float]:
    """Unnormalized state after a dark detection, and the bright probability"""
    bright = grid[1].sum() * (1.0 - errors.bright_infidelity) + grid[0].sum() * errors.dark_count
    if errors.is_ideal:
        dark = np.vstack([grid[0], np.zeros_like(grid[1])])
    else:
        dark = np.vstack([grid[0] * (1.0 - errors.dark_count), grid[1] * errors.bright_infidelity])
    return dark, float(bright)


def _initial_grid(populations: np.ndarray, extra: int) -> np.ndarray:
    grid = np.zeros((2, populations.size + extra))
    grid[0, : populations.size] = populations
    return grid


def fluorescence_outcome_distribution(
    state: PopulationInput,
    errors: DetectionErrorModel = IDEAL,
) -> FluorescenceOutcome:
    """
    Exact distribution of the first fluorescence in the carrier + blue-sideband
    loop; with ideal pulses it reproduces the input phonon populations.
    """
    populations = _phonon_populations(state)
    extra = 1 if errors.is_ideal else EXTRA_DETECTIONS
    grid = _initial_grid(populations, extra)
    detections = grid.shape[1] if errors.is_ideal else grid.shape[1] + EXTRA_DETECTIONS
    outcomes = np.zeros(detections)
    conditional_dark = np.ones(detections)
    for k in range(detections):
        for pulse in FLUORESCENCE_LOOP:
            grid = _apply_pulse(grid, pulse, errors.transfer_error)
        before = grid.sum()
        grid, bright = _dark_outcome(grid, errors)
        outcomes[k] = bright
        if before > 0:
            conditional_dark[k] = min(max(1.0 - bright / before, 0.0), 1.0)
    return FluorescenceOutcome(populations=outcomes, never=float(grid.sum()), conditional_dark=conditional_dark)


def fluorescence_projective_measurement(
    state: PopulationInput,
    rng: np.random.Generator,
    errors: DetectionErrorModel = IDEAL,
) -> DetectionTrace:
    """
    One run of the fluorescence loop. First fluorescence at detection k + 1
    projects on |k>, which is also the re-prepared post-measurement state.
    """
    outcome = fluorescence_outcome_distribution(state, errors)
    collapse = outcome.as_collapse()
    index = int(sample_indices(collapse, rng.random(1))[0])
    fluoresced = index < outcome.populations.size
    dark_steps = index if fluoresced else outcome.populations.size
    steps: List[DetectionStep] = [
        DetectionStep(pulses=FLUORESCENCE_LOOP, fluorescence=False, probability=float(outcome.conditional_dark[k]))
        for k in range(dark_steps)
    ]
    if fluoresced:
        steps.append(
            DetectionStep(
                pulses=FLUORESCENCE_LOOP,
                fluorescence=True,
                probability=float(1.0 - outcome.conditional_dark[index]),
            )
        )
    return DetectionTrace(
        steps=steps,
        projected_n=index if fluoresced else -1,
        probability=float(np.prod([step.probability for step in steps])) if steps else 1.0,
    )


def _nofluorescence_chain(target_n: int) -> List[List[PulseKind]]:
    """Pulse groups preceding each detection: (red, carrier) x target, then red"""
    return [[PulseKind.RED_SIDEBAND, PulseKind.CARRIER]] * target_n + [[PulseKind.RED_SIDEBAND]]


def _nofluorescence_acceptance(populations: np.ndarray, target_n: int, errors: DetectionErrorModel) -> float:
    grid = _initial_grid(populations, 1)
    for group in _nofluorescence_chain(target_n):
        for pulse in group:
            grid = _apply_pulse(grid, pulse, errors.transfer_error)
        grid, _ = _dark_outcome(grid, errors)
    return float(grid.sum())


def nofluorescence_acceptance_probabilities(
    state: PopulationInput,
    errors: DetectionErrorModel = IDEAL,
    max_target: Optional[int] = None,
) -> np.ndarray:
    """Acceptance probability of the dark chain for each target n"""
    populations = _phonon_populations(state)
    top = populations.size - 1 if max_target is None else max_target
    return np.array([_nofluorescence_acceptance(populations, target, errors) for target in range(top + 1)])


def nofluorescence_projective_measurement(
    state: PopulationInput,
    target_n: int,
    rng: np.random.Generator,
    errors: DetectionErrorModel = IDEAL,
) -> Tuple[bool, float]:
    """
    Post-selective projection on |target_n>: accepted when all target_n + 1
    detections stay dark. Returns (accepted, acceptance probability).
    """
    if target_n < 0:
        raise ValueError(f"target_n must be >= 0, got {target_n}")
    populations = _phonon_populations(state)
    probability = _nofluorescence_acceptance(populations, target_n, errors)
    return bool(rng.random() < probability), probability


def heating_wait(populations: Sequence[float], rate: float, duration: float) -> np.ndarray:
    """Re-thermalize at nbar + rate * duration (input assumed thermal)"""
    if rate < 0:
        raise ValueError(f"Heating rate must be >= 0, got {rate}")
    populations = np.asarray(populations, dtype=float)
    nbar = float(np.dot(np.arange(populations.size), populations))
    return thermal_distribution(ThermalSpec(nbar=nbar + rate * duration), populations.size)


def fit_heating_rate(wait_times: Sequence[float], nbars: Sequence[float]) -> HeatingFit:
    """Linear fit of mean phonon number against waiting time"""
    fit = linregress(np.asarray(wait_times, dtype=float), np.asarray(nbars, dtype=float))
    return HeatingFit(rate=float(fit.slope), intercept=float(fit.intercept), rate_stderr=float(fit.stderr))


def _geometric(n: np.ndarray, nbar: float) -> np.ndarray:
    return nbar**n / (nbar + 1.0) ** (n + 1)


def fit_thermal_nbar(populations: Sequence[float]) -> float:
    """Least-squares mean phonon number of a measured distribution"""
    populations = np.asarray(populations, dtype=float)
    levels = np.arange(populations.size, dtype=float)
    guess = max(float(np.dot(levels, populations)), 1e-3)
    (nbar,), _ = curve_fit(_geometric, levels, populations, p0=[guess], bounds=(0.0, np.inf))
    return float(nbar)
