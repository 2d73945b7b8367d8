"""
Hamiltonian builders for the trapped-ion models and instantaneous eigenbases
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.core.exceptions import DomainError
from src.models.hamiltonian import ModelSpec, ModelVariant, RampSchedule
from src.models.quantum import FockSpace
from src.services.fock_service import (
    check_displacement_fits,
    displacement_matrix,
    embed,
    ladder_operators,
    spin_operators,
)

logger = logging.getLogger(__name__)

PHASE_RULE = "largest-magnitude component (first within 1e-10) made real-positive"

# Eigenvalues closer than this (relative) are treated as one degenerate block
DEGENERACY_TOL = 1e-12

_PHASE_TIE_TOL = 1e-10


class TimeDependentHamiltonian:
    """
    H(t) in rad/s on [t0, t1], with the metadata propagators need.

    ``quantum`` is the angular frequency work and spectra are quoted in.
    ``axis`` (two-level models only) returns the unit Pauli direction of the
    drive at t, which is the direction multiplicative noise couples along.
    """

    def __init__(
        self,
        function: Callable[[float], np.ndarray],
        dimension: int,
        t0: float,
        t1: float,
        quantum: float,
        name: str,
        spin_dim: int = 1,
        breakpoints: Sequence[float] = (),
        axis: Optional[Callable[[float], np.ndarray]] = None,
        envelope: Optional[Callable[[float], float]] = None,
        max_norm: Optional[float] = None,
    ):
        self._function = function
        self.dimension = dimension
        self.t0 = t0
        self.t1 = t1
        self.quantum = quantum
        self.name = name
        self.spin_dim = spin_dim
        self.breakpoints = [t for t in breakpoints if t0 < t < t1]
        self.axis = axis
        self.envelope = envelope
        self._max_norm = max_norm

    def __call__(self, t: float) -> np.ndarray:
        return self._function(t)

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @property
    def segments(self) -> List[Tuple[float, float]]:
        """[t0, t1] split at the ramp breakpoints"""
        edges = [self.t0, *self.breakpoints, self.t1]
        return list(zip(edges[:-1], edges[1:]))

    def max_norm(self, samples: int = 33) -> float:
        """Upper estimate of max_t ||H(t)||_2"""
        if self._max_norm is not None:
            return self._max_norm
        times = np.linspace(self.t0, self.t1, samples)
        return max(float(np.linalg.norm(self(t), 2)) for t in times)

    def spectrum(self, t: float) -> np.ndarray:
        """Instantaneous eigenvalues in units of the quantum"""
        return np.linalg.eigvalsh(self(t)) / self.quantum

    def initial_spectrum(self) -> np.ndarray:
        return self.spectrum(self.t0)

    def final_spectrum(self) -> np.ndarray:
        return self.spectrum(self.t1)


def build_free_ion(atomic_frequency: float, trap_frequency: float, space: FockSpace) -> np.ndarray:
    """(w0/2) sigma_z + w_t a^dagger a on spin (x) Fock"""
    _, _, number = ladder_operators(space)
    spins = spin_operators()
    return embed(0.5 * atomic_frequency * spins.sz, np.eye(space.cutoff)) + embed(
        spins.identity, trap_frequency * number
    )


def build_sideband(
    variant: ModelVariant,
    omega_eff: float,
    eta: float,
    phase: float,
    space: FockSpace,
) -> np.ndarray:
    """
    Resonant carrier, red or blue sideband coupling on spin (x) Fock.

    Red couples |down, n> to |up, n-1>, blue couples |down, n> to |up, n+1>;
    the carrier carries no eta.
    """
    annihilation, creation, _ = ladder_operators(space)
    spins = spin_operators()
    phasor = np.exp(1j * phase)
    if variant == ModelVariant.CARRIER:
        coupling = 0.5 * omega_eff * phasor * embed(spins.s_plus, np.eye(space.cutoff))
    elif variant == ModelVariant.RED_SIDEBAND:
        coupling = 0.5 * eta * omega_eff * phasor * embed(spins.s_plus, annihilation)
    elif variant == ModelVariant.BLUE_SIDEBAND:
        coupling = 0.5 * eta * omega_eff * phasor * embed(spins.s_plus, creation)
    else:
        raise ValueError(f"Not a sideband variant: {variant}")
    return coupling + coupling.conj().T


def build_bichromatic(nu: float, ramp: RampSchedule, space: FockSpace) -> TimeDependentHamiltonian:
    """nu (a^dagger a + 1/2) + (Omega(t)/2)(a + a^dagger) sigma_x on spin (x) Fock"""
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    peak = max(abs(segment.peak) for segment in ramp.segments)
    check_displacement_fits(peak / (2.0 * nu), space, what="peak drag shift (Omega/2nu)^2")
    annihilation, creation, number = ladder_operators(space)
    spins = spin_operators()
    oscillator = embed(spins.identity, nu * (number + 0.5 * np.eye(space.cutoff)))
    force = embed(spins.sx, 0.5 * (annihilation + creation))

    def hamiltonian(t: float) -> np.ndarray:
        return oscillator + ramp.value(t) * force

    return TimeDependentHamiltonian(
        hamiltonian,
        dimension=2 * space.cutoff,
        t0=0.0,
        t1=ramp.duration,
        quantum=nu,
        name="bichromatic",
        spin_dim=2,
        breakpoints=ramp.breakpoints,
        envelope=ramp.value,
        max_norm=float(nu * (space.cutoff - 0.5) + peak * np.sqrt(space.cutoff)),
    )


def build_dragged(
    nu: float,
    drive_amplitude: float,
    tau: float,
    ramp_down: float,
    space: FockSpace,
) -> TimeDependentHamiltonian:
    """
    Dragged oscillator nu (a^dagger a + 1/2) + Lambda(t)(a + a^dagger)/2.

    Lambda ramps linearly from 0 to the drive amplitude over tau, then back to 0
    over ramp_down. Quantum is nu. The peak equilibrium shift A/2nu must fit
    the cutoff under the same rule as displacement_matrix.
    """
    if tau <= 0 or ramp_down <= 0:
        raise ValueError(f"tau and ramp_down must be positive, got {tau}, {ramp_down}")
    check_displacement_fits(drive_amplitude / (2.0 * nu), space, what="peak drag shift (A/2nu)^2")
    ramp = RampSchedule.up_down(drive_amplitude, tau, ramp_down)
    annihilation, creation, number = ladder_operators(space)
    oscillator = nu * (number + 0.5 * np.eye(space.cutoff))
    force = 0.5 * (annihilation + creation)

    def hamiltonian(t: float) -> np.ndarray:
        return oscillator + ramp.value(t) * force

    return TimeDependentHamiltonian(
        hamiltonian,
        dimension=space.cutoff,
        t0=0.0,
        t1=ramp.duration,
        quantum=nu,
        name="dragged_oscillator",
        breakpoints=ramp.breakpoints,
        envelope=ramp.value,
        max_norm=float(nu * (space.cutoff - 0.5) + abs(drive_amplitude) * np.sqrt(space.cutoff)),
    )


def _tls_axis(t: float, tau: float) -> np.ndarray:
    spins = spin_operators()
    angle = np.pi * t / (2.0 * tau)
    return np.cos(angle) * spins.sx + np.sin(angle) * spins.sy


def build_driven_tls(rabi_0: float, tau: float, reverse: bool = False) -> TimeDependentHamiltonian:
    """
    Driven two-level system (Omega0/2)(1 - t/2tau)[cos(pi t/2tau) sigma_x + sin(pi t/2tau) sigma_y].

    Defined on [0, tau]; evaluating outside raises DomainError. ``reverse``
    returns the time-reversed protocol H(tau - t) used for backward processes.
    Quantum is Omega0.
    """
    if rabi_0 <= 0 or tau <= 0:
        raise ValueError(f"rabi_0 and tau must be positive, got {rabi_0}, {tau}")
    slack = 1e-12 * tau

    def protocol_time(t: float) -> float:
        if t < -slack or t > tau + slack:
            raise DomainError(f"t = {t:.6e} s outside [0, {tau:.6e}] s")
        t = min(max(t, 0.0), tau)
        return tau - t if reverse else t

    def envelope(t: float) -> float:
        return 0.5 * rabi_0 * (1.0 - protocol_time(t) / (2.0 * tau))

    def axis(t: float) -> np.ndarray:
        return _tls_axis(protocol_time(t), tau)

    def hamiltonian(t: float) -> np.ndarray:
        return envelope(t) * axis(t)

    return TimeDependentHamiltonian(
        hamiltonian,
        dimension=2,
        t0=0.0,
        t1=tau,
        quantum=rabi_0,
        name="driven_tls_reversed" if reverse else "driven_tls",
        spin_dim=2,
        axis=axis,
        envelope=envelope,
        max_norm=0.5 * rabi_0,
    )


def driven_tls_reversed(rabi_0: float, tau: float) -> TimeDependentHamiltonian:
    return build_driven_tls(rabi_0, tau, reverse=True)


def build_model(spec: ModelSpec):
    """Dispatch a ModelSpec to its builder"""
    space = FockSpace(cutoff=spec.cutoff) if spec.cutoff else None
    variant = spec.variant
    if variant == ModelVariant.DRIVEN_TLS:
        rabi_0, tau = spec.require("rabi_0", "tau")
        return build_driven_tls(rabi_0, tau)
    if space is None:
        raise ValueError(f"{variant.value} model needs a Fock cutoff")
    if variant == ModelVariant.FREE_ION:
        return build_free_ion(*spec.require("atomic_frequency", "trap_frequency"), space)
    if variant in (ModelVariant.CARRIER, ModelVariant.RED_SIDEBAND, ModelVariant.BLUE_SIDEBAND):
        omega_eff = spec.require("omega_eff")[0]
        eta = spec.parameters.get("eta", 1.0)
        return build_sideband(variant, omega_eff, eta, spec.parameters.get("phase", 0.0), space)
    if variant == ModelVariant.BICHROMATIC:
        nu, peak, tau, ramp_down = spec.require("nu", "drive_amplitude", "tau", "ramp_down")
        return build_bichromatic(nu, RampSchedule.up_down(peak, tau, ramp_down), space)
    nu, peak, tau, ramp_down = spec.require("nu", "drive_amplitude", "tau", "ramp_down")
    return build_dragged(nu, peak, tau, ramp_down, space)


def _fix_phase(vector: np.ndarray) -> np.ndarray:
    magnitudes = np.abs(vector)
    index = int(np.argmax(magnitudes >= magnitudes.max() - _PHASE_TIE_TOL))
    return vector * (np.conj(vector[index]) / magnitudes[index])


def _canonical_block(block: np.ndarray) -> np.ndarray:
    """
    Deterministic basis of a degenerate eigenspace: Gram-Schmidt on the
    columns of its projector, taken in basis-index order.
    """
    k = block.shape[1]
    projector = block @ block.conj().T
    chosen: List[np.ndarray] = []
    for column in projector.T:
        vector = column.copy()
        for previous in chosen:
            vector -= np.vdot(previous, vector) * previous
        norm = np.linalg.norm(vector)
        if norm > 1e-8:
            chosen.append(vector / norm)
        if len(chosen) == k:
            break
    return np.column_stack(chosen)


def instantaneous_eigenbasis(H: np.ndarray) -> Tuple[np.ndarray, np.ndarray, str]:
    """
    Ascending eigenvalues and orthonormal eigenvector columns of Hermitian H.

    Degenerate blocks are resolved deterministically and ordered by the lowest
    basis index they touch; each vector's phase follows PHASE_RULE.
    """
    H = np.asarray(H, dtype=complex)
    energies, vectors = np.linalg.eigh(0.5 * (H + H.conj().T))
    order = np.argsort(energies, kind="stable")
    energies, vectors = energies[order], vectors[:, order]

    scale = max(1.0, float(np.max(np.abs(energies), initial=0.0)))
    start = 0
    while start < len(energies):
        stop = start + 1
        while stop < len(energies) and energies[stop] - energies[start] <= DEGENERACY_TOL * scale:
            stop += 1
        if stop - start > 1:
            vectors[:, start:stop] = _canonical_block(vectors[:, start:stop])
        start = stop

    vectors = np.column_stack([_fix_phase(vectors[:, k]) for k in range(vectors.shape[1])])
    return energies, vectors, PHASE_RULE


def dragged_instantaneous_basis(nu: float, drive: float, space: FockSpace) -> Tuple[np.ndarray, np.ndarray]:
    """
    Analytic eigenbasis of the dragged oscillator at drive Lambda: energies
    (n + 1/2) - Lambda^2/(4 nu^2) in quanta of nu and columns D(-Lambda/2nu)|n>.
    """
    displacement = displacement_matrix(-drive / (2.0 * nu), space)
    energies = np.arange(space.cutoff) + 0.5 - drive**2 / (4.0 * nu**2)
    vectors = np.column_stack([_fix_phase(displacement[:, k]) for k in range(space.cutoff)])
    return energies, vectors


class EigenbasisTracker:
    """
    Follows the instantaneous eigenbasis along a protocol.

    Each update relabels the new eigenvectors by maximal overlap with the
    previous ones and aligns their phases, so projectors never jump branch.
    """

    def __init__(self, hamiltonian: TimeDependentHamiltonian):
        self.hamiltonian = hamiltonian
        self._vectors: Optional[np.ndarray] = None
        self._time: Optional[float] = None

    def basis(self, t: float) -> np.ndarray:
        if self._time is not None and t == self._time:
            return self._vectors
        _, vectors, _ = instantaneous_eigenbasis(self.hamiltonian(t))
        if self._vectors is not None:
            overlaps = np.abs(self._vectors.conj().T @ vectors)
            _, assignment = linear_sum_assignment(-overlaps)
            vectors = vectors[:, assignment]
            phases = np.einsum("ij,ij->j", self._vectors.conj(), vectors)
            magnitudes = np.abs(phases)
            safe = magnitudes > 1e-12
            vectors[:, safe] = vectors[:, safe] * (np.conj(phases[safe]) / magnitudes[safe])
        self._vectors, self._time = vectors, t
        return vectors

    def projectors(self, t: float) -> np.ndarray:
        """Stack of rank-one projectors |i(t)><i(t)|"""
        vectors = self.basis(t)
        return np.einsum("ik,jk->kij", vectors, vectors.conj())
