"""
Truncated Fock-space and two-level linear algebra
"""

import logging
from typing import Literal, Tuple

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln

from src.core.constants import HERMITIAN_TOL
from src.core.exceptions import NonHermitianError, StepTooLargeError, TruncationError
from src.models.quantum import FockSpace, SpinOperatorSet, StateVector

logger = logging.getLogger(__name__)

# Phase limit of a single propagate_step, radians
MAX_STEP_PHASE = 0.5

# Columns whose exact tail mass (levels >= N-1) is below this are treated as resolved
RESOLVED_LEAKAGE = 1e-20


def ladder_operators(space: FockSpace) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Annihilation, creation and number operators on the truncated space.

    Truncation breaks [a, a^dagger] = 1 only in the last diagonal entry,
    where a^dagger a - a a^dagger equals N - 1 instead of -1.
    """
    n = space.cutoff
    annihilation = np.diag(np.sqrt(np.arange(1, n, dtype=float)), k=1).astype(complex)
    creation = annihilation.conj().T.copy()
    number = creation @ annihilation
    return annihilation, creation, number


def spin_operators() -> SpinOperatorSet:
    return SpinOperatorSet.pauli()


def embed(spin_op: np.ndarray, fock_op: np.ndarray) -> np.ndarray:
    """Operator on spin (x) Fock, spin-major"""
    return np.kron(spin_op, fock_op)


def check_displacement_fits(alpha: complex, space: FockSpace, what: str = "|alpha|^2") -> None:
    """TruncationError above |alpha|^2 = N, warning above N/4"""
    magnitude2 = abs(alpha) ** 2
    if magnitude2 > space.cutoff:
        raise TruncationError(f"{what} = {magnitude2:.3f} exceeds cutoff N = {space.cutoff}")
    if magnitude2 > space.cutoff / 4:
        logger.warning(f"{what} = {magnitude2:.3f} > N/4 = {space.cutoff / 4}; edge columns unreliable")


def displacement_matrix(
    alpha: complex,
    space: FockSpace,
    method: Literal["expm", "laguerre"] = "expm",
) -> np.ndarray:
    """
    N x N displacement operator D(alpha) = exp(alpha a^dagger - alpha* a).

    ``expm`` exponentiates the truncated generator, which is exactly unitary on
    the retained space. ``laguerre`` returns the exact matrix elements of the
    untruncated operator, whose edge columns lose norm to the discarded levels.
    """
    alpha = complex(alpha)
    check_displacement_fits(alpha, space)

    if method == "expm":
        annihilation, creation, _ = ladder_operators(space)
        return expm(alpha * creation - np.conj(alpha) * annihilation)
    if method == "laguerre":
        return _laguerre_elements(alpha, np.arange(space.cutoff), np.arange(space.cutoff))
    raise ValueError(f"Unknown displacement method: {method}")


def _laguerre_elements(alpha: complex, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Exact <m|D(alpha)|n> for m in rows, n in cols"""
    m, n = np.meshgrid(rows, cols, indexing="ij")
    x = abs(alpha) ** 2
    lower = np.minimum(m, n)
    upper = np.maximum(m, n)
    order = upper - lower
    # sqrt(lower!/upper!) in log space
    ratio = np.exp(0.5 * (gammaln(lower + 1) - gammaln(upper + 1)))
    phase_base = np.where(m >= n, alpha, -np.conj(alpha))
    with np.errstate(invalid="ignore"):
        power = np.where(order == 0, 1.0 + 0j, np.power(phase_base, order))
    laguerre = eval_genlaguerre(lower, order, x)
    return ratio * power * np.exp(-0.5 * x) * laguerre


def truncation_leakage(alpha: complex, space: FockSpace, extra_levels: int = 0) -> np.ndarray:
    """
    Per-column mass of the exact D(alpha)|n> on levels >= N - 1.

    Shrinks as N grows at fixed column; zero only in the alpha -> 0 limit.
    """
    n = space.cutoff
    extra = extra_levels or int(n + 8 * abs(alpha) ** 2 + 60)
    rows = np.arange(n - 1, n + extra)
    tail = _laguerre_elements(alpha, rows, np.arange(n))
    return np.sum(np.abs(tail) ** 2, axis=0)


def displacement_cross_check(alpha: complex, space: FockSpace) -> float:
    """
    Largest element deviation between the two displacement paths over the
    columns the truncation leaves resolved (returns 0.0 when none are).
    """
    resolved = truncation_leakage(alpha, space) < RESOLVED_LEAKAGE
    if not np.any(resolved):
        logger.debug(f"No resolved columns for alpha={alpha} at N={space.cutoff}")
        return 0.0
    numeric = displacement_matrix(alpha, space, method="expm")
    exact = displacement_matrix(alpha, space, method="laguerre")
    return float(np.max(np.abs(numeric[:, resolved] - exact[:, resolved])))


def check_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
    deviation = float(np.max(np.abs(matrix - matrix.conj().T), initial=0.0))
    if deviation > tol * scale:
        raise NonHermitianError(f"max |H - H^dagger| = {deviation:.3e} (scale {scale:.3e})")


def unitary_step(H: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i H dt) for Hermitian H via spectral decomposition"""
    energies, vectors = np.linalg.eigh(0.5 * (H + H.conj().T))
    return (vectors * np.exp(-1j * energies * dt)) @ vectors.conj().T


def propagate_step(H: np.ndarray, dt: float, state: StateVector) -> StateVector:
    """
    One short-time step state <- exp(-i H dt) state, H in rad/s.

    Raises StepTooLargeError when dt * ||H|| exceeds the phase limit; callers
    subdivide longer intervals (see propagate_constant).
    """
    H = np.asarray(H, dtype=complex)
    check_hermitian(H)
    phase = abs(dt) * float(np.linalg.norm(H, 2))
    if phase > MAX_STEP_PHASE:
        raise StepTooLargeError(f"dt*||H|| = {phase:.3f} rad exceeds {MAX_STEP_PHASE}")
    amplitudes = unitary_step(H, dt) @ state.amplitudes
    return StateVector(amplitudes=amplitudes, spin_dim=state.spin_dim)


def propagate_constant(H: np.ndarray, duration: float, state: StateVector) -> StateVector:
    """Evolve under a constant H, split into admissible propagate_step calls"""
    H = np.asarray(H, dtype=complex)
    phase = abs(duration) * float(np.linalg.norm(H, 2))
    steps = max(1, int(np.ceil(phase / MAX_STEP_PHASE * 1.0000001)))
    dt = duration / steps
    for _ in range(steps):
        state = propagate_step(H, dt, state)
    return state
