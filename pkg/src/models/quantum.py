"""
State and operator containers for truncated Fock and two-level spaces
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.core.constants import HERMITIAN_TOL, NORM_TOL


class FockSpace(BaseModel):
    """Truncated single-mode Fock space |0>..|N-1>"""

    model_config = ConfigDict(frozen=True)

    cutoff: int = Field(..., ge=1, description="Number of retained number states N")

    @property
    def dimension(self) -> int:
        return self.cutoff


class StateVector(BaseModel):
    """Normalized pure state over spin (x) Fock, spin-major ordering"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    amplitudes: np.ndarray
    spin_dim: int = Field(default=1, ge=1, le=2)

    @field_validator("amplitudes", mode="before")
    @classmethod
    def _as_complex_vector(cls, value):
        array = np.asarray(value, dtype=complex).reshape(-1)
        return array

    @model_validator(mode="after")
    def _check_normalized(self):
        if self.amplitudes.size % self.spin_dim:
            raise ValueError(
                f"Amplitude count {self.amplitudes.size} not divisible by spin dimension {self.spin_dim}"
            )
        if abs(self.norm - 1.0) > NORM_TOL:
            raise ValueError(f"State not normalized: norm = {self.norm:.3e}")
        return self

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def dimension(self) -> int:
        return int(self.amplitudes.size)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @classmethod
    def basis(cls, index: int, dimension: int, spin_dim: int = 1) -> "StateVector":
        amplitudes = np.zeros(dimension, dtype=complex)
        amplitudes[index] = 1.0
        return cls(amplitudes=amplitudes, spin_dim=spin_dim)

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


class DensityMatrix(BaseModel):
    """Hermitian, unit-trace, positive semidefinite density operator"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    elements: np.ndarray
    spin_dim: int = Field(default=1, ge=1, le=2)

    @field_validator("elements", mode="before")
    @classmethod
    def _as_complex_square(cls, value):
        array = np.asarray(value, dtype=complex)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise ValueError(f"Density matrix must be square, got shape {array.shape}")
        return array

    @model_validator(mode="after")
    def _check_physical(self):
        rho = self.elements
        if np.max(np.abs(rho - rho.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValueError("Density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > HERMITIAN_TOL:
            raise ValueError(f"Density matrix trace {np.trace(rho).real:.12f} != 1")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -1e-9:
            raise ValueError("Density matrix has negative eigenvalues")
        return self

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(elements=np.outer(psi, psi.conj()), spin_dim=state.spin_dim)

    @classmethod
    def diagonal(cls, populations, basis: Optional[np.ndarray] = None, spin_dim: int = 1) -> "DensityMatrix":
        """Mixture of basis columns (standard basis when omitted)"""
        weights = np.asarray(populations, dtype=float)
        if basis is None:
            return cls(elements=np.diag(weights).astype(complex), spin_dim=spin_dim)
        return cls(elements=(basis * weights) @ basis.conj().T, spin_dim=spin_dim)

    @property
    def dimension(self) -> int:
        return int(self.elements.shape[0])

    def populations(self, basis: Optional[np.ndarray] = None) -> np.ndarray:
        """Diagonal in the given orthonormal basis (columns)"""
        if basis is None:
            return np.real(np.diag(self.elements)).copy()
        return np.real(np.einsum("im,ij,jm->m", basis.conj(), self.elements, basis))


class SpinOperatorSet(BaseModel):
    """Pauli operators in the (|down>, |up>) basis with sigma_z|up> = +|up>"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    identity: np.ndarray

    @classmethod
    def pauli(cls) -> "SpinOperatorSet":
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        sy = np.array([[0, 1j], [-1j, 0]], dtype=complex)
        sz = np.array([[-1, 0], [0, 1]], dtype=complex)
        s_plus = 0.5 * (sx + 1j * sy)
        return cls(sx=sx, sy=sy, sz=sz, s_plus=s_plus, s_minus=s_plus.conj().T, identity=np.eye(2, dtype=complex))
