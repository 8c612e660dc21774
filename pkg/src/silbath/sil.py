"""Short-iterative Lanczos propagation.

Each step projects H(t + dt/2) onto the Krylov space of psi(t), diagonalizes
the tridiagonal projection and exponentiates it exactly:

    psi(t + dt) = sum_j exp(-i lambda_j dt) <v_j|psi(t)> |v_j>
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .bath import poincare_time
from .errors import DomainError, RecurrenceWarning, StepRejected
from .fock import SystemState
from .hamiltonian import HamiltonianModel

__all__ = ["SilConfig", "KrylovWorkspace", "StepInfo", "Trajectory", "step", "propagate"]

logger = logging.getLogger(__name__)

Observer = Callable[[float, np.ndarray], dict]


@dataclass(frozen=True)
class SilConfig:
    """Propagator settings.

    Attributes:
        dt: time step; ``None`` resolves to 0.005 / omega_c of the model bath.
        krylov_dim: Krylov dimension n (the cap when ``adaptive`` is set).
        norm_tol: largest tolerated |norm - 1| before renormalization.
        adaptive: stop the Lanczos recursion once the residual estimate
            beta_n |[exp(-i T dt)]_{n,1}| drops below ``adaptive_tol``.
        adaptive_tol: residual threshold for adaptive mode.
        reorth_tol: pairwise overlap above which a second Gram-Schmidt pass runs.
    """

    dt: float | None = None
    krylov_dim: int = 30
    norm_tol: float = 1e-10
    adaptive: bool = False
    adaptive_tol: float = 1e-12
    reorth_tol: float = 1e-8

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if int(self.krylov_dim) != self.krylov_dim or self.krylov_dim < 2:
            raise DomainError(f"krylov_dim must be an integer >= 2, got {self.krylov_dim}")
        if not self.norm_tol > 0:
            raise DomainError("norm_tol must be > 0")

    def resolve_dt(self, model: HamiltonianModel) -> float:
        if self.dt is not None:
            return float(self.dt)
        return 0.005 / model.bath.source.omega_c


class KrylovWorkspace:
    """Preallocated Krylov vectors for one trajectory."""

    def __init__(self, dimension: int, krylov_dim: int):
        self.n_max = int(min(krylov_dim, dimension))
        self.vectors = np.empty((self.n_max, dimension), dtype=np.complex128)
        self.alpha = np.zeros(self.n_max)
        self.beta = np.zeros(self.n_max)
        self.size = 0

    def orthogonality_error(self) -> float:
        """max |<Phi_i|Phi_j> - delta_ij| over the current vectors."""
        v = self.vectors[: self.size]
        gram = v.conj() @ v.T
        return float(np.max(np.abs(gram - np.eye(self.size)))) if self.size else 0.0


@dataclass
class StepInfo:
    krylov_size: int
    norm_drift: float
    residual: float
    breakdown: bool


def _expm_e1(alpha, beta, dt):
    if len(alpha) == 1:
        return np.array([np.exp(-1j * alpha[0] * dt)])
    lam, u = eigh_tridiagonal(alpha, beta)
    return u @ (np.exp(-1j * lam * dt) * u[0, :])


def _lanczos_exp(apply: Callable[[np.ndarray], np.ndarray], psi: np.ndarray, dt: float,
                 cfg: SilConfig, ws: KrylovWorkspace) -> tuple[np.ndarray, StepInfo]:
    norm0 = float(np.linalg.norm(psi))
    V = ws.vectors
    V[0] = psi / norm0
    alpha, beta = ws.alpha, ws.beta
    breakdown = False
    residual = math.nan
    k = 0
    scale = 0.0
    while True:
        w = apply(V[k])
        a = float(np.vdot(V[k], w).real)
        w -= a * V[k]
        if k > 0:
            w -= beta[k - 1] * V[k - 1]
        # full reorthogonalization against every stored vector
        c = np.conj(V[: k + 1] @ np.conj(w))
        w -= V[: k + 1].T @ c
        if np.max(np.abs(c)) > cfg.reorth_tol * max(1.0, abs(a)):
            c2 = np.conj(V[: k + 1] @ np.conj(w))
            w -= V[: k + 1].T @ c2
            c = c + c2
        a += float(c[k].real)
        alpha[k] = a
        b = float(np.linalg.norm(w))
        scale = max(scale, abs(a), b)
        k += 1
        if b <= 1e-13 * max(scale, 1.0):
            breakdown = True
            residual = 0.0
            break
        if cfg.adaptive and k >= 2:
            y = _expm_e1(alpha[:k], beta[: k - 1], dt)
            residual = b * abs(y[-1])
            if residual < cfg.adaptive_tol:
                break
        if k == ws.n_max:
            if not cfg.adaptive:
                y = _expm_e1(alpha[:k], beta[: k - 1], dt)
                residual = b * abs(y[-1])
            break
        beta[k - 1] = b
        V[k] = w / b
    ws.size = k
    y = _expm_e1(alpha[:k], beta[: k - 1], dt) * norm0
    out = V[:k].T @ y
    return out, StepInfo(k, 0.0, residual, breakdown)


def step(model: HamiltonianModel, psi, t: float, cfg: SilConfig,
         workspace: KrylovWorkspace | None = None, *, return_info: bool = False):
    """Advance ``psi`` from ``t`` to ``t + dt`` with the midpoint Hamiltonian.

    Returns a normalized :class:`SystemState` (or ``(state, StepInfo)`` when
    ``return_info`` is set). Raises :class:`StepRejected` if the norm before
    renormalization is off by more than ``cfg.norm_tol``.
    """
    vec = psi.amplitudes if isinstance(psi, SystemState) else np.asarray(psi, dtype=np.complex128)
    out, info = _step_vector(model, vec, t, cfg, workspace)
    state = SystemState(out, model.basis)
    return (state, info) if return_info else state


def _step_vector(model, vec, t, cfg, workspace):
    dt = cfg.resolve_dt(model)
    if workspace is None:
        workspace = KrylovWorkspace(model.dimension, cfg.krylov_dim)
    tm = t + 0.5 * dt
    model.schedule.fields(tm)
    model.schedule.fields(t + dt)
    out, info = _lanczos_exp(lambda x: model.apply(tm, x), vec, dt, cfg, workspace)
    nrm = float(np.linalg.norm(out))
    drift = abs(nrm - 1.0)
    info.norm_drift = drift
    if drift > cfg.norm_tol:
        raise StepRejected(f"norm drift {drift:.3e} at t = {t} exceeds {cfg.norm_tol:.1e}", drift)
    out /= nrm
    return out, info


@dataclass
class Trajectory:
    """Observer records collected during :func:`propagate`."""

    records: list[dict] = field(default_factory=list)
    final: SystemState | None = None
    steps: int = 0
    max_norm_drift: float = 0.0
    max_krylov: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def __len__(self) -> int:
        return len(self.records)


def propagate(model: HamiltonianModel, psi0, t0: float, t1: float, cfg: SilConfig,
              observers: Iterable[Observer] = (), *, stride: int = 1) -> Trajectory:
    """Repeated SIL steps from ``t0`` to ``t1``.

    The interval is split into ``ceil((t1 - t0) / dt)`` equal steps. Every
    observer is called as ``observer(t, psi)`` at ``t0`` and after every
    ``stride``-th step (and at ``t1``); each returns a dict merged into one record
    per sample time alongside ``t`` and the step's ``norm_drift``.
    """
    if t1 < t0:
        raise DomainError(f"t1 = {t1} precedes t0 = {t0}")
    if int(stride) != stride or stride < 1:
        raise DomainError(f"stride must be a positive integer, got {stride}")
    observers = list(observers)
    vec = psi0.amplitudes if isinstance(psi0, SystemState) else np.asarray(psi0, dtype=np.complex128)
    vec = vec.copy()
    tp = poincare_time(model.bath)
    if t1 > tp:
        warnings.warn(f"propagating to t = {t1:g} beyond the Poincare recurrence time {tp:g}",
                      RecurrenceWarning, stacklevel=2)
    traj = Trajectory()

    def record(t, drift):
        rec = {"t": t, "norm_drift": drift}
        for obs in observers:
            rec.update(obs(t, vec))
        traj.records.append(rec)

    record(t0, 0.0)
    span = t1 - t0
    if span == 0:
        traj.final = SystemState(vec, model.basis)
        return traj
    dt0 = cfg.resolve_dt(model)
    n_steps = max(1, math.ceil(span / dt0 - 1e-9))
    dt = span / n_steps
    cfg_step = cfg if dt == cfg.dt else _with_dt(cfg, dt)
    ws = KrylovWorkspace(model.dimension, cfg.krylov_dim)
    drift_since = 0.0
    for i in range(n_steps):
        t = t0 + i * dt
        vec, info = _step_vector(model, vec, t, cfg_step, ws)
        drift_since = max(drift_since, info.norm_drift)
        traj.max_norm_drift = max(traj.max_norm_drift, info.norm_drift)
        traj.max_krylov = max(traj.max_krylov, info.krylov_size)
        if (i + 1) % stride == 0 or i + 1 == n_steps:
            record(t0 + (i + 1) * dt, drift_since)
            drift_since = 0.0
    traj.steps = n_steps
    traj.final = SystemState(vec, model.basis)
    logger.debug("propagated %d steps, max Krylov %d, max drift %.2e",
                 n_steps, traj.max_krylov, traj.max_norm_drift)
    return traj


def _with_dt(cfg: SilConfig, dt: float) -> SilConfig:
    from dataclasses import replace

    return replace(cfg, dt=dt)
