"""Qubit schedules and the qubit-bath Hamiltonian as a linear operator.

H(t) = -Gamma(t) sigma_x - eps(t) sigma_z + sum_k w_k b_k^+ b_k
       + sigma_z sum_k g_k (b_k + b_k^+)

Only the time-independent bath coupling B = sum_k g_k (b_k + b_k^+) is held
as a sparse operator on bath patterns (half the full dimension); the qubit
factors and H_B are applied on the fly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bath import DiscreteBath
from .errors import DomainError
from .fock import FockBasis, SystemState

__all__ = ["Schedule", "HamiltonianModel", "spectral_gap", "qubit_hamiltonian"]

_TIME_SLACK = 1e-9

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


@dataclass(frozen=True)
class Schedule:
    """Transverse field Gamma(t) and bias eps(t).

    ``kind="constant"`` holds both fixed. ``kind="linear-anneal"`` ramps
    Gamma(t) = (1 - t/t_f) Gamma and eps(t) = (t/t_f) eps over [0, t_f].
    """

    kind: str = "constant"
    gamma0: float = 1.0
    epsilon0: float = 0.0
    t_f: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "linear-anneal"):
            raise DomainError(f"unknown schedule kind {self.kind!r}")
        if not (math.isfinite(self.gamma0) and math.isfinite(self.epsilon0)):
            raise DomainError("schedule amplitudes must be finite")
        if self.kind == "linear-anneal":
            if self.t_f is None or not self.t_f > 0:
                raise DomainError(f"linear-anneal schedule needs t_f > 0, got {self.t_f}")

    @classmethod
    def constant(cls, gamma0: float, epsilon0: float = 0.0) -> "Schedule":
        return cls("constant", gamma0, epsilon0)

    @classmethod
    def linear_anneal(cls, gamma0: float, epsilon0: float, t_f: float) -> "Schedule":
        return cls("linear-anneal", gamma0, epsilon0, t_f)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def theta(self, t: float) -> float:
        if self.is_constant:
            raise DomainError("a constant schedule has no dimensionless time")
        th = t / self.t_f
        if th < -_TIME_SLACK or th > 1.0 + _TIME_SLACK:
            raise DomainError(f"t = {t} lies outside the anneal window [0, {self.t_f}]")
        return min(max(th, 0.0), 1.0)

    def fields(self, t: float) -> tuple[float, float]:
        """(Gamma(t), eps(t))."""
        if self.is_constant:
            return self.gamma0, self.epsilon0
        th = self.theta(t)
        return (1.0 - th) * self.gamma0, th * self.epsilon0

    def gamma(self, t: float) -> float:
        return self.fields(t)[0]

    def epsilon(self, t: float) -> float:
        return self.fields(t)[1]


def spectral_gap(schedule: Schedule, t: float) -> float:
    """Instantaneous qubit gap 2 sqrt(eps(t)^2 + Gamma(t)^2)."""
    g, e = schedule.fields(t)
    return 2.0 * math.hypot(g, e)


def qubit_hamiltonian(schedule: Schedule, t: float) -> np.ndarray:
    """2x2 H_S(t) in the (z;+, z;-) basis."""
    g, e = schedule.fields(t)
    return -g * SIGMA_X - e * SIGMA_Z


class HamiltonianModel:
    """Schedule + discrete bath + truncated basis, applied matrix-free.

    Args:
        schedule: qubit fields.
        bath: discretized modes; size must match ``basis.m_modes``.
        basis: truncated Fock basis.
    """

    def __init__(self, schedule: Schedule, bath: DiscreteBath, basis: FockBasis):
        if bath.n_modes != basis.m_modes:
            raise DomainError(f"bath has {bath.n_modes} modes but basis was built for {basis.m_modes}")
        self.schedule = schedule
        self.bath = bath
        self.basis = basis
        self.bath_energies = np.ascontiguousarray(basis.energies(bath.frequencies))
        self.coupling = self._build_coupling()

    def _build_coupling(self) -> sp.csr_matrix:
        n = self.basis.n_patterns
        lower, upper, mode, n_up = self.basis.raising_pairs
        val = np.asarray(self.bath.couplings)[mode] * np.sqrt(n_up.astype(float))
        keep = val != 0.0
        lower, upper, val = lower[keep], upper[keep], val[keep]
        rows = np.concatenate([lower, upper])
        cols = np.concatenate([upper, lower])
        data = np.concatenate([val, val])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    @property
    def dimension(self) -> int:
        return self.basis.dimension

    def _vector(self, psi) -> np.ndarray:
        if isinstance(psi, SystemState):
            if psi.basis is not self.basis:
                raise DomainError("state belongs to a different basis than the Hamiltonian")
            psi = psi.amplitudes
        psi = np.asarray(psi)
        if psi.shape != (self.dimension,):
            raise DomainError(f"vector of shape {psi.shape} does not match basis dimension {self.dimension}")
        return psi

    def couple(self, x: np.ndarray) -> np.ndarray:
        """B acting on an (n_patterns, 2) complex block."""
        n = self.basis.n_patterns
        xr = np.ascontiguousarray(x).view(np.float64).reshape(n, 4)
        return np.ascontiguousarray(self.coupling @ xr).view(np.complex128).reshape(n, 2)

    def apply(self, t: float, psi) -> np.ndarray:
        """H(t) |psi>, returned as a new complex vector (not normalized)."""
        v = self._vector(psi)
        g, e = self.schedule.fields(t)
        x = v.reshape(-1, 2)
        out = self.couple(x)
        out[:, 1] *= -1.0
        out += self.bath_energies[:, None] * x
        out[:, 0] += -e * x[:, 0] - g * x[:, 1]
        out[:, 1] += e * x[:, 1] - g * x[:, 0]
        return out.reshape(-1)

    __call__ = apply

    def parts(self, t: float, psi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(H_S psi, H_B psi, V psi) as separate vectors."""
        v = self._vector(psi)
        g, e = self.schedule.fields(t)
        x = v.reshape(-1, 2)
        hs = np.empty_like(x)
        hs[:, 0] = -e * x[:, 0] - g * x[:, 1]
        hs[:, 1] = e * x[:, 1] - g * x[:, 0]
        hb = self.bath_energies[:, None] * x
        vv = self.couple(x)
        vv[:, 1] *= -1.0
        return hs.reshape(-1), hb.reshape(-1), vv.reshape(-1)

    def dense(self, t: float) -> np.ndarray:
        """Full matrix built column by column from :meth:`apply` (small bases only)."""
        d = self.dimension
        if d > 4096:
            raise DomainError(f"refusing to densify a {d}-dimensional operator")
        eye = np.eye(d, dtype=np.complex128)
        return np.stack([self.apply(t, eye[i]) for i in range(d)], axis=1)

    def norm_bound(self, t: float) -> float:
        """Cheap upper bound on ||H(t)||_2."""
        g, e = self.schedule.fields(t)
        eb = float(np.max(np.abs(self.bath_energies))) if self.bath_energies.size else 0.0
        row = abs(self.coupling).sum(axis=1)
        cb = float(row.max()) if row.size else 0.0
        return eb + cb + math.hypot(g, e)

    def spectral_width(self, t: float) -> tuple[float, float]:
        """Gershgorin-style (lower, upper) bounds on the spectrum of H(t)."""
        g, e = self.schedule.fields(t)
        row = np.asarray(abs(self.coupling).sum(axis=1)).ravel()
        qs = math.hypot(g, e)
        lo = float(np.min(self.bath_energies - row)) - qs
        hi = float(np.max(self.bath_energies + row)) + qs
        return lo, hi
