"""Reduced qubit density matrix and the expectation values reported per sample."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError
from .fock import SystemState
from .hamiltonian import HamiltonianModel, Schedule, qubit_hamiltonian

__all__ = [
    "ReducedDensity",
    "reduce",
    "average",
    "energy_partition",
    "instantaneous_eigenbasis",
    "residual_energy",
    "qubit_observer",
    "energy_observer",
    "ground_population",
]

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1j], [1j, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class ReducedDensity:
    """2x2 qubit density matrix in the (z;+, z;-) basis."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise DomainError(f"reduced density must be 2x2, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_bloch(cls, sx: float, sy: float, sz: float) -> "ReducedDensity":
        return cls(0.5 * (np.eye(2) + sx * SX + sy * SY + sz * SZ))

    @classmethod
    def pure(cls, c_plus: complex, c_minus: complex) -> "ReducedDensity":
        v = np.array([c_plus, c_minus], dtype=complex)
        return cls(np.outer(v, v.conj()))

    @property
    def sigma_x(self) -> float:
        return float(2.0 * self.matrix[1, 0].real)

    @property
    def sigma_y(self) -> float:
        return float(2.0 * self.matrix[1, 0].imag)

    @property
    def sigma_z(self) -> float:
        return float((self.matrix[0, 0] - self.matrix[1, 1]).real)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    def population(self, vector: np.ndarray) -> float:
        """<v| rho |v> for a normalized qubit vector."""
        v = np.asarray(vector, dtype=complex)
        return float(np.real(v.conj() @ self.matrix @ v))

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(op @ self.matrix)))

    def check(self, tol_trace: float = 1e-12, tol_eig: float = 1e-10) -> None:
        """Raise :class:`DomainError` unless Hermitian, unit trace and positive."""
        m = self.matrix
        herm = float(np.max(np.abs(m - m.conj().T)))
        if herm > tol_eig:
            raise DomainError(f"reduced density is not Hermitian (defect {herm:.2e})")
        tr = abs(self.trace - 1.0)
        if tr > tol_trace:
            raise DomainError(f"reduced density trace deviates from 1 by {tr:.2e}")
        ev = self.eigenvalues()
        if ev[0] < -tol_eig or ev[1] > 1.0 + tol_eig:
            raise DomainError(f"reduced density eigenvalues {ev} outside [0, 1]")


def reduce(psi) -> ReducedDensity:
    """Trace out the bath: rho[a, b] = sum_p psi(a, p) conj(psi(b, p)).

    Accepts a :class:`SystemState` or a raw amplitude vector in the
    interleaved (pattern, qubit) layout.
    """
    vec = psi.amplitudes if isinstance(psi, SystemState) else np.asarray(psi)
    x = vec.reshape(-1, 2)
    rho = x.T @ x.conj()
    return ReducedDensity(rho)


def average(densities: Iterable[ReducedDensity]) -> ReducedDensity:
    """Ensemble mean of reduced densities (thermal sampling)."""
    mats = [d.matrix for d in densities]
    if not mats:
        raise DomainError("cannot average an empty ensemble")
    return ReducedDensity(np.mean(mats, axis=0))


def energy_partition(model: HamiltonianModel, t: float, psi) -> tuple[float, float, float, float]:
    """(<H_S>, <H_B>, <V>, <H>) at time ``t``."""
    vec = psi.amplitudes if isinstance(psi, SystemState) else np.asarray(psi)
    hs, hb, v = model.parts(t, vec)
    e_s = float(np.vdot(vec, hs).real)
    e_b = float(np.vdot(vec, hb).real)
    e_v = float(np.vdot(vec, v).real)
    return e_s, e_b, e_v, e_s + e_b + e_v


def instantaneous_eigenbasis(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of a real symmetric 2x2 H_S.

    Columns are normalized eigenvectors; each has a real nonnegative first
    component (the second component decides the sign when the first vanishes).
    """
    w, u = np.linalg.eigh(np.asarray(h))
    u = u.astype(complex)
    for j in range(2):
        ref = u[0, j] if abs(u[0, j]) > 1e-14 else u[1, j]
        u[:, j] *= np.conj(ref) / abs(ref)
    return w, u


def residual_energy(schedule: Schedule, rho: ReducedDensity) -> float:
    """Excess energy tr[H_S(t_f) rho] - E_gs at the end of an anneal."""
    if schedule.is_constant:
        raise DomainError("residual energy is defined for a linear-anneal schedule at theta = 1")
    h = qubit_hamiltonian(schedule, schedule.t_f)
    w, _ = np.linalg.eigh(h)
    return rho.expectation(h) - float(w[0])


def qubit_observer(t: float, psi: np.ndarray) -> dict:
    rho = reduce(psi)
    return {"sigma_x": rho.sigma_x, "sigma_z": rho.sigma_z, "rho": rho}


def energy_observer(model: HamiltonianModel):
    """Observer factory recording the four energy contributions."""

    def observe(t: float, psi: np.ndarray) -> dict:
        e_s, e_b, e_v, e = energy_partition(model, t, psi)
        return {"H_S": e_s, "H_B": e_b, "V": e_v, "H": e}

    return observe


def ground_population(schedule: Schedule, t: float, rho: ReducedDensity) -> float:
    """Population of the instantaneous qubit ground state."""
    _, u = instantaneous_eigenbasis(qubit_hamiltonian(schedule, t))
    return rho.population(u[:, 0])

