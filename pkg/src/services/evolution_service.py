"""
Propagators: analytic drag displacement, time-ordered unitary integration,
stochastic noise trajectories and the pure-dephasing master equation
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from src.core.config import get_settings
from src.core.exceptions import ConvergenceError, StepTooLargeError
from src.models.evolution import DephasingSpec, EnsembleAverage, NoiseSpec
from src.models.quantum import DensityMatrix, StateVector
from src.services.fock_service import MAX_STEP_PHASE, check_hermitian, spin_operators
from src.services.hamiltonian_service import EigenbasisTracker, TimeDependentHamiltonian

logger = logging.getLogger(__name__)

_GAUSS_OFFSET = math.sqrt(3.0) / 6.0
_MAGNUS_COMMUTATOR = math.sqrt(3.0) / 12.0

# First spawn-key entry separating noise streams from other per-run streams
TRAJECTORY_STREAM = 0


def drag_displacement_alpha(drive_amplitude: float, nu: float, tau: float, ramp_down: float) -> complex:
    """
    Phase-space displacement left by ramping the drag force up over tau and
    down over ramp_down, for a drive of peak drive_amplitude (rad/s).
    """
    if tau <= 0 or ramp_down <= 0:
        raise ValueError(f"tau and ramp_down must be positive, got {tau}, {ramp_down}")
    up = tau * nu
    down = ramp_down * nu
    e_up = np.exp(1j * up)
    bracket = (e_up * (1.0 - 1j * up) - 1.0) / (tau * nu**2) + e_up * (
        1.0 - np.exp(1j * down) + 1j * down
    ) / (ramp_down * nu**2)
    return complex(-0.5j * drive_amplitude * bracket)


def adiabatic_ramp_down_duration(nu: float, periods: int = 1) -> float:
    """Ramp-down lasting whole oscillator periods acts like an infinitely slow one"""
    if periods < 1:
        raise ValueError(f"periods must be >= 1, got {periods}")
    return periods * 2.0 * math.pi / nu


def calibrate_drive_amplitude(target_alpha: float, nu: float, tau: float, ramp_down: float) -> float:
    """Drive amplitude A giving |alpha| = target_alpha (alpha is linear in A)"""
    unit = abs(drag_displacement_alpha(1.0, nu, tau, ramp_down))
    if unit < 1e-300:
        raise ValueError(f"Protocol (tau={tau}, ramp_down={ramp_down}) cannot displace the oscillator")
    return target_alpha / unit


def _magnus_step(hamiltonian: TimeDependentHamiltonian, t: float, h: float) -> np.ndarray:
    a1 = -1j * hamiltonian(t + (0.5 - _GAUSS_OFFSET) * h)
    a2 = -1j * hamiltonian(t + (0.5 + _GAUSS_OFFSET) * h)
    generator = 0.5 * h * (a1 + a2) + _MAGNUS_COMMUTATOR * h * h * (a2 @ a1 - a1 @ a2)
    return expm(generator)


def _propagator_on_grid(hamiltonian: TimeDependentHamiltonian, steps: List[int]) -> np.ndarray:
    unitary = np.eye(hamiltonian.dimension, dtype=complex)
    for (start, stop), count in zip(hamiltonian.segments, steps):
        h = (stop - start) / count
        for k in range(count):
            unitary = _magnus_step(hamiltonian, start + k * h, h) @ unitary
    return unitary


def _phase_insensitive_distance(u: np.ndarray, v: np.ndarray) -> float:
    overlap = np.trace(u.conj().T @ v)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(v - phase * u, 2))


def time_ordered_propagator(
    hamiltonian: TimeDependentHamiltonian,
    tol: Optional[float] = None,
    max_halvings: Optional[int] = None,
) -> np.ndarray:
    """
    Propagator over the whole protocol window by fourth-order Magnus steps.

    Step counts double until the Richardson estimate ||U_2n - U_n||/15 falls
    below tol. Raises ConvergenceError when an estimate fails to shrink or the
    allowed halvings run out.
    """
    settings = get_settings()
    tol = tol or settings.integrator_tol
    max_halvings = max_halvings or settings.max_step_halvings

    check_hermitian(hamiltonian(hamiltonian.t0))
    phase = hamiltonian.duration * hamiltonian.max_norm()
    total = max(1, math.ceil(phase / MAX_STEP_PHASE))
    steps = [max(1, math.ceil(total * (stop - start) / hamiltonian.duration)) for start, stop in hamiltonian.segments]

    coarse = _propagator_on_grid(hamiltonian, steps)
    previous_error = math.inf
    for halving in range(1, max_halvings + 1):
        steps = [2 * count for count in steps]
        fine = _propagator_on_grid(hamiltonian, steps)
        error = _phase_insensitive_distance(coarse, fine) / 15.0
        logger.debug(f"{hamiltonian.name}: halving {halving}, {sum(steps)} steps, error {error:.3e}")
        if error <= tol:
            return fine
        if error >= previous_error:
            raise ConvergenceError(
                f"{hamiltonian.name}: step halving stalled at error {error:.3e} (previous {previous_error:.3e})"
            )
        previous_error = error
        coarse = fine
    raise ConvergenceError(f"{hamiltonian.name}: error {previous_error:.3e} above {tol:.1e} after {max_halvings} halvings")


def propagate_unitary(
    hamiltonian: TimeDependentHamiltonian,
    t0: float,
    t1: float,
    state: StateVector,
    tol: Optional[float] = None,
) -> StateVector:
    if t1 <= t0:
        raise ValueError(f"Need t1 > t0, got [{t0}, {t1}]")
    window = _restricted(hamiltonian, t0, t1)
    unitary = time_ordered_propagator(window, tol=tol)
    return StateVector(amplitudes=unitary @ state.amplitudes, spin_dim=state.spin_dim)


def _restricted(hamiltonian: TimeDependentHamiltonian, t0: float, t1: float) -> TimeDependentHamiltonian:
    if t0 == hamiltonian.t0 and t1 == hamiltonian.t1:
        return hamiltonian
    return TimeDependentHamiltonian(
        hamiltonian,
        dimension=hamiltonian.dimension,
        t0=t0,
        t1=t1,
        quantum=hamiltonian.quantum,
        name=hamiltonian.name,
        spin_dim=hamiltonian.spin_dim,
        breakpoints=hamiltonian.breakpoints,
        axis=hamiltonian.axis,
        envelope=hamiltonian.envelope,
        max_norm=hamiltonian.max_norm(),
    )


# Noise and dephasing


def noise_sigma_for_gamma(gamma: float, rabi_0: float) -> float:
    """sigma such that gamma = sigma^2 Omega0^2 / 2"""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return math.sqrt(2.0 * gamma) / rabi_0


def gamma_for_noise_sigma(sigma: float, rabi_0: float) -> float:
    return 0.5 * sigma**2 * rabi_0**2


def default_noise_spec(
    hamiltonian: TimeDependentHamiltonian, gamma: float, seed: int = 0, steps: Optional[int] = None
) -> NoiseSpec:
    """Noise with the given dephasing rate on the finest step the trajectory contract needs"""
    sigma = noise_sigma_for_gamma(gamma, hamiltonian.quantum)
    dt = hamiltonian.duration / max(steps or 0, get_settings().trajectory_min_steps)
    if sigma > 0:
        dt = min(dt, 0.1 / (sigma**2 * hamiltonian.quantum**2))
    return NoiseSpec(sigma=sigma, dt=dt, seed=seed)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory `index` of run `seed`"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(TRAJECTORY_STREAM, index)))


def _pauli_stack() -> np.ndarray:
    spins = spin_operators()
    return np.stack([spins.sx, spins.sy, spins.sz])


def _pauli_vector(matrix: np.ndarray, paulis: np.ndarray) -> np.ndarray:
    return 0.5 * np.real(np.einsum("ij,aji->a", matrix, paulis))


def _check_trajectory_step(hamiltonian: TimeDependentHamiltonian, noise: NoiseSpec, duration: float) -> int:
    if hamiltonian.dimension != 2 or hamiltonian.axis is None:
        raise ValueError(f"Noise trajectories need a two-level model, got {hamiltonian.name}")
    steps = max(1, math.ceil(duration / noise.dt * (1 - 1e-12)))
    limit = duration / get_settings().trajectory_min_steps
    if noise.sigma > 0:
        limit = min(limit, 0.1 / (noise.sigma**2 * hamiltonian.quantum**2))
    if duration / steps > limit * (1 + 1e-9):
        raise StepTooLargeError(f"Trajectory step {duration / steps:.3e} s exceeds {limit:.3e} s")
    return steps


def propagate_trajectory_ensemble(
    hamiltonian: TimeDependentHamiltonian,
    noise: NoiseSpec,
    t0: float,
    t1: float,
    states: np.ndarray,
    indices: np.ndarray,
) -> np.ndarray:
    """
    Evolve a batch of two-level states, one noise realization each.

    Row k uses the stream of trajectory indices[k], so any batch layout gives
    the same per-trajectory result. The drive plus piecewise-constant noise is
    integrated by fourth-order Magnus steps in closed Pauli form.
    """
    duration = t1 - t0
    steps = _check_trajectory_step(hamiltonian, noise, duration)
    states = np.array(states, dtype=complex, copy=True).reshape(-1, 2)
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if len(indices) != len(states):
        raise ValueError(f"{len(states)} states but {len(indices)} trajectory indices")

    block = get_settings().shot_block_size
    for start, stop in batch_bounds(len(states), block):
        states[start:stop] = _trajectory_block(
            hamiltonian, noise, t0, steps, duration / steps, states[start:stop], indices[start:stop]
        )
    return states


def _trajectory_block(
    hamiltonian: TimeDependentHamiltonian,
    noise: NoiseSpec,
    t0: float,
    steps: int,
    h: float,
    states: np.ndarray,
    indices: np.ndarray,
) -> np.ndarray:
    paulis = _pauli_stack()
    starts = t0 + h * np.arange(steps)
    early = starts + (0.5 - _GAUSS_OFFSET) * h
    late = starts + (0.5 + _GAUSS_OFFSET) * h
    drive_early = np.array([_pauli_vector(hamiltonian(t), paulis) for t in early])
    drive_late = np.array([_pauli_vector(hamiltonian(t), paulis) for t in late])

    if noise.sigma > 0:
        axis_early = np.array([_pauli_vector(hamiltonian.axis(t), paulis) for t in early])
        axis_late = np.array([_pauli_vector(hamiltonian.axis(t), paulis) for t in late])
        scale = 0.5 * hamiltonian.quantum * noise.sigma / math.sqrt(h)
        kicks = np.stack([trajectory_rng(noise.seed, int(i)).standard_normal(steps) for i in indices]) * scale
    else:
        kicks = None

    for s in range(steps):
        a1 = np.broadcast_to(drive_early[s], (len(states), 3))
        a2 = np.broadcast_to(drive_late[s], (len(states), 3))
        if kicks is not None:
            a1 = a1 + kicks[:, s, None] * axis_early[s]
            a2 = a2 + kicks[:, s, None] * axis_late[s]
        vector = 0.5 * h * (a1 + a2) + 2.0 * _MAGNUS_COMMUTATOR * h * h * np.cross(a2, a1)
        angle = np.linalg.norm(vector, axis=1)
        generator = np.einsum("ka,aij->kij", vector, paulis)
        rotated = np.einsum("kij,kj->ki", generator, states)
        states = np.cos(angle)[:, None] * states - 1j * np.sinc(angle / np.pi)[:, None] * rotated
    return states


def propagate_trajectory(
    hamiltonian: TimeDependentHamiltonian,
    noise: NoiseSpec,
    t0: float,
    t1: float,
    state: StateVector,
    index: int = 0,
) -> StateVector:
    """One noise realization, deterministic in (noise.seed, index)"""
    final = propagate_trajectory_ensemble(hamiltonian, noise, t0, t1, state.amplitudes[None, :], np.array([index]))
    return StateVector(amplitudes=final[0], spin_dim=state.spin_dim)


def ensemble_density_matrix(states: np.ndarray, seed: Optional[int] = None) -> EnsembleAverage:
    """Mean |psi><psi| over trajectories with standard errors of each element"""
    states = np.asarray(states, dtype=complex)
    count = states.shape[0]
    outer = np.einsum("ki,kj->kij", states, states.conj())
    ddof = 1 if count > 1 else 0
    return EnsembleAverage(
        mean=outer.mean(axis=0),
        stderr_real=outer.real.std(axis=0, ddof=ddof) / math.sqrt(count),
        stderr_imag=outer.imag.std(axis=0, ddof=ddof) / math.sqrt(count),
        trajectories=count,
        seed=seed,
    )


def propagate_dephasing(
    hamiltonian: TimeDependentHamiltonian,
    spec: DephasingSpec,
    t0: float,
    t1: float,
    rho: DensityMatrix,
) -> DensityMatrix:
    """
    Integrate drho/dt = -i[H, rho] - gamma (rho - sum_i P_i rho P_i).

    P_i project on the tracked instantaneous eigenbasis, so coherences decay
    at gamma while instantaneous populations only feel the Hamiltonian.
    """
    settings = get_settings()
    dimension = rho.dimension
    tracker = EigenbasisTracker(hamiltonian)
    gamma = spec.gamma

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        current = y.reshape(dimension, dimension)
        H = hamiltonian(t)
        derivative = -1j * (H @ current - current @ H)
        if gamma > 0:
            basis = tracker.basis(t)
            diagonal = np.einsum("im,ij,jm->m", basis.conj(), current, basis)
            derivative -= gamma * (current - (basis * diagonal) @ basis.conj().T)
        return derivative.reshape(-1)

    edges = [t0, *[t for t in hamiltonian.breakpoints if t0 < t < t1], t1]
    y = rho.elements.reshape(-1).astype(complex)
    for start, stop in zip(edges[:-1], edges[1:]):
        solution = solve_ivp(
            rhs,
            (start, stop),
            y,
            method=settings.dephasing_method,
            rtol=settings.dephasing_rtol,
            atol=settings.dephasing_atol,
        )
        if not solution.success:
            logger.error(f"{hamiltonian.name}: dephasing integration failed on [{start}, {stop}]")
            raise ConvergenceError(f"Master equation solver failed: {solution.message}")
        y = solution.y[:, -1]

    final = y.reshape(dimension, dimension)
    final = 0.5 * (final + final.conj().T)
    final = final / np.trace(final).real
    return DensityMatrix(elements=final, spin_dim=rho.spin_dim)


def dephasing_channel(
    hamiltonian: TimeDependentHamiltonian,
    spec: DephasingSpec,
    inputs: np.ndarray,
) -> List[np.ndarray]:
    """Propagate each column |k><k| of `inputs` through the dephasing channel"""
    outputs = []
    for k in range(inputs.shape[1]):
        rho = DensityMatrix.diagonal([1.0], basis=inputs[:, [k]], spin_dim=hamiltonian.spin_dim)
        outputs.append(propagate_dephasing(hamiltonian, spec, hamiltonian.t0, hamiltonian.t1, rho).elements)
    return outputs


def frozen_protocol(H: np.ndarray, duration: float, name: str = "frozen") -> TimeDependentHamiltonian:
    """Constant Hamiltonian wrapped as a protocol on [0, duration]"""
    H = np.asarray(H, dtype=complex)
    return TimeDependentHamiltonian(
        lambda t: H,
        dimension=H.shape[0],
        t0=0.0,
        t1=duration,
        quantum=max(float(np.linalg.norm(H, 2)), 1.0),
        name=name,
        max_norm=float(np.linalg.norm(H, 2)),
    )


def batch_bounds(total: int, block: int) -> List[Tuple[int, int]]:
    return [(start, min(start + block, total)) for start in range(0, total, block)]
