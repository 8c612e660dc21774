"""Born-Markov reference dynamics for the qubit alone.

Covers the closed-form unbiased spin-boson solution, the zero-temperature
adiabatic annealing fidelity, and an RK4 integrator for the adiabatic
Lindblad equation with operators rebuilt in the instantaneous eigenbasis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Chebyshev
from scipy import integrate

from .bath import BathSpec, lindblad_gamma, lindblad_lamb_shift
from .errors import DomainError, NumericalError
from .hamiltonian import Schedule, qubit_hamiltonian, spectral_gap
from .observables import SZ, ReducedDensity, instantaneous_eigenbasis

__all__ = [
    "LindbladModel",
    "LindbladTrajectory",
    "relaxation_times",
    "sbm_analytic",
    "pure_decoherence_analytic",
    "anneal_fidelity_analytic",
    "integrate_rk4",
    "schrodinger_rk4",
    "default_rk4_dt",
]

_EYE = np.eye(2, dtype=complex)


def _kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.kron for 2x2 operands without its generic-shape overhead
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(4, 4)


@dataclass
class LindbladModel:
    """Qubit schedule plus bath for the adiabatic master equation."""

    schedule: Schedule
    spec: BathSpec
    include_lamb_shift: bool = True
    _shift_cache: dict = field(default_factory=dict, init=False, repr=False)

    def gamma(self, omega: float) -> float:
        return lindblad_gamma(self.spec, omega)

    def lamb_shift(self, omega: float) -> float:
        """S(omega), tabulated over the gaps the schedule visits."""
        if not self.include_lamb_shift or self.spec.eta == 0.0:
            return 0.0
        if self.schedule.is_constant:
            key = float(omega)
            if key not in self._shift_cache:
                self._shift_cache[key] = lindblad_lamb_shift(self.spec, key)
            return self._shift_cache[key]
        sign = 1 if omega >= 0 else -1
        interp = self._shift_cache.get(sign)
        if interp is None:
            interp = self._shift_cache[sign] = self._tabulate(sign)
        return float(interp(abs(omega)))

    def _tabulate(self, sign: int):
        th = np.linspace(0.0, 1.0, 2001)
        gaps = [spectral_gap(self.schedule, x * self.schedule.t_f) for x in th]
        lo, hi = min(gaps), max(gaps)
        if hi >= self.spec.omega_c:
            raise DomainError("qubit gap reaches the bath cutoff; lamb shift diverges there")
        if hi - lo < 1e-12:
            val = lindblad_lamb_shift(self.spec, sign * lo)
            return lambda w: val
        pad = 1e-6 * (hi - lo)
        return Chebyshev.interpolate(lambda w: np.array([lindblad_lamb_shift(self.spec, sign * x) for x in w]),
                                     48, domain=[lo - pad, hi + pad])

    def generator(self, t: float, previous: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Row-major Liouvillian superoperator at ``t`` and the eigenvectors used.

        ``previous`` (eigenvector matrix of the last call) fixes their signs
        for continuity; the Lindblad operators themselves are sign invariant.
        """
        h = qubit_hamiltonian(self.schedule, t)
        w, u = instantaneous_eigenbasis(h)
        if previous is not None:
            for j in range(2):
                if np.real(np.vdot(previous[:, j], u[:, j])) < 0:
                    u[:, j] = -u[:, j]
        gap = float(w[1] - w[0])
        ket_g, ket_e = u[:, 0], u[:, 1]
        sz_ge = complex(ket_g.conj() @ SZ @ ket_e)
        sz_gg = complex(ket_g.conj() @ SZ @ ket_g)
        sz_ee = complex(ket_e.conj() @ SZ @ ket_e)
        pg = np.outer(ket_g, ket_g.conj())
        pe = np.outer(ket_e, ket_e.conj())
        ops = []
        if gap > 0:
            # omega = +gap lowers e -> g, omega = -gap raises g -> e
            ops.append((gap, sz_ge * np.outer(ket_g, ket_e.conj())))
            ops.append((-gap, np.conj(sz_ge) * np.outer(ket_e, ket_g.conj())))
            l0 = sz_gg * pg + sz_ee * pe
        else:
            l0 = SZ.astype(complex)
        if np.max(np.abs(l0)) > 1e-14:
            ops.append((0.0, l0))
        hh = h.astype(complex)
        sup = np.zeros((4, 4), dtype=complex)
        for om, lop in ops:
            rate = self.gamma(om)
            ldl = lop.conj().T @ lop
            if om != 0.0:
                hh = hh + self.lamb_shift(om) * ldl
            if rate == 0.0:
                continue
            if not math.isfinite(rate):
                raise NumericalError(f"gamma({om}) diverges; dissipator undefined")
            sup += rate * (_kron2(lop, lop.conj()) - 0.5 * _kron2(ldl, _EYE) - 0.5 * _kron2(_EYE, ldl.T))
        sup += -1j * (_kron2(hh, _EYE) - _kron2(_EYE, hh.T))
        return sup, u


def relaxation_times(model: LindbladModel) -> tuple[float, float]:
    """(T1, T2) of the unbiased model; ``inf`` when the bath is decoupled."""
    g0, e0 = model.schedule.fields(0.0)
    if not model.schedule.is_constant or e0 != 0.0:
        raise DomainError("relaxation times are defined for the unbiased constant schedule")
    rate = model.gamma(2.0 * g0) * (1.0 + math.exp(-2.0 * model.spec.beta * g0))
    t1 = math.inf if rate == 0.0 else 1.0 / rate
    return t1, 2.0 * t1


def _to_x_basis(rho: np.ndarray) -> np.ndarray:
    r = 1.0 / math.sqrt(2.0)
    u = np.array([[r, r], [r, -r]], dtype=complex)  # columns |x;+>, |x;->
    return u.conj().T @ rho @ u


def sbm_analytic(model: LindbladModel, rho0: ReducedDensity, t) -> tuple:
    """Closed-form (<sigma_x>, <sigma_z>) of the unbiased spin-boson model.

    sigma_z(t) = 2 Re[rho_{-+}(0) exp(-i (S(2G) - S(-2G) + 2G) t) exp(-t/T2)]
    sigma_x(t) = tanh(beta G) - 2 [rho_{--}(0) - rho_G(-)] exp(-t/T1)

    with the x-basis labels of H_S = -G sigma_x. ``t`` may be an array.
    """
    if not model.schedule.is_constant or model.schedule.epsilon0 != 0.0:
        raise DomainError("the closed-form solution covers the unbiased constant schedule only")
    g = model.schedule.gamma0
    beta = model.spec.beta
    t1, t2 = relaxation_times(model)
    rx = _to_x_basis(rho0.matrix)
    rho_mp = rx[1, 0]
    rho_mm = rx[1, 1].real
    p_excited = 0.5 * (1.0 - math.tanh(beta * g))  # e^{-beta G} / Z
    phase = 2.0 * g + model.lamb_shift(2.0 * g) - model.lamb_shift(-2.0 * g)
    t = np.asarray(t, dtype=float)
    decay2 = np.exp(-t / t2) if math.isfinite(t2) else np.ones_like(t)
    decay1 = np.exp(-t / t1) if math.isfinite(t1) else np.ones_like(t)
    sz = 2.0 * np.real(rho_mp * np.exp(-1j * phase * t)) * decay2
    sx = math.tanh(beta * g) - 2.0 * (rho_mm - p_excited) * decay1
    if t.ndim == 0:
        return float(sx), float(sz)
    return sx, sz


def pure_decoherence_analytic(spec: BathSpec, eps: float, t):
    """<sigma_x(t)>_L = cos(2 eps t) exp(-2 gamma(0) t) from an |x;+> start."""
    g0 = lindblad_gamma(spec, 0.0)
    t = np.asarray(t, dtype=float)
    if math.isinf(g0):
        env = np.where(t > 0, 0.0, 1.0)
    else:
        env = np.exp(-2.0 * g0 * t)
    out = np.cos(2.0 * eps * t) * env
    return float(out) if out.ndim == 0 else out


def anneal_fidelity_analytic(model: LindbladModel, theta: float, t_f: float | None = None,
                             rho0: float = 1.0) -> float:
    """Adiabatic-limit ground-state population rho_{--}(theta) at zero temperature.

    rho(theta) = [rho(0) + int_0^theta F G] / G with G = exp(int_0^theta F),
    F = t_f xi^2 gamma(Delta) and xi = 2 Gamma (1 - theta) / Delta. Because
    F G = dG/dtheta this collapses to 1 - (1 - rho(0)) / G(theta).
    """
    sched = model.schedule
    if sched.is_constant:
        raise DomainError("annealing fidelity needs a linear-anneal schedule")
    if not model.spec.zero_temperature:
        raise DomainError("the closed-form annealing fidelity holds at zero temperature only")
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")
    t_f = sched.t_f if t_f is None else float(t_f)
    if theta == 0.0 or model.spec.eta == 0.0:
        return float(rho0)
    flux = _integrated_rate(model, theta, t_f)
    return float(1.0 - (1.0 - rho0) * math.exp(-flux))


def _anneal_rate(model: LindbladModel, th: float, t_f: float) -> float:
    g, e = model.schedule.gamma0, model.schedule.epsilon0
    gap = 2.0 * math.hypot((1.0 - th) * g, th * e)
    if gap == 0.0:
        return 0.0
    xi = 2.0 * g * (1.0 - th) / gap
    return t_f * xi * xi * lindblad_gamma(model.spec, gap)


def _integrated_rate(model: LindbladModel, theta: float, t_f: float) -> float:
    val, _ = integrate.quad(lambda x: _anneal_rate(model, x, t_f), 0.0, theta,
                            epsabs=0.0, epsrel=1e-10, limit=200)
    return val


def default_rk4_dt(schedule: Schedule) -> float:
    scales = [abs(x) for x in (schedule.gamma0, schedule.epsilon0) if x != 0.0]
    return 1e-3 * min(1.0 / x for x in scales) if scales else 1e-3


@dataclass
class LindbladTrajectory:
    times: np.ndarray
    densities: list[ReducedDensity]

    @property
    def sigma_x(self) -> np.ndarray:
        return np.array([r.sigma_x for r in self.densities])

    @property
    def sigma_z(self) -> np.ndarray:
        return np.array([r.sigma_z for r in self.densities])

    @property
    def final(self) -> ReducedDensity:
        return self.densities[-1]


def _check_density(r: np.ndarray, t: float, tol: float = 1e-8) -> None:
    a, d = r[0].real, r[3].real
    tr = r[0] + r[3]
    if abs(tr - 1.0) > tol:
        raise NumericalError(f"trace drifted to {tr} at t = {t}; reduce dt")
    off = 0.5 * (abs(r[1]) + abs(r[2]))
    lam_min = 0.5 * (a + d) - math.sqrt(0.25 * (a - d) ** 2 + off * off)
    if lam_min < -tol:
        raise NumericalError(f"density acquired eigenvalue {lam_min:.3e} at t = {t}; reduce dt")


def integrate_rk4(model: LindbladModel, rho0: ReducedDensity, t0: float, t1: float,
                  dt: float | None = None, *, stride: int = 1) -> LindbladTrajectory:
    """Fourth-order Runge-Kutta for d rho/dt = -i[H_S + H_LS, rho] + D[rho].

    The generator is rebuilt at every stage time. Samples are kept at ``t0``,
    every ``stride`` steps and ``t1``. Raises :class:`NumericalError` if the
    trace drifts or an eigenvalue goes negative by more than 1e-8.
    """
    if t1 < t0:
        raise DomainError("t1 must not precede t0")
    dt = default_rk4_dt(model.schedule) if dt is None else float(dt)
    if not dt > 0:
        raise DomainError("dt must be > 0")
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9)) if t1 > t0 else 0
    h = (t1 - t0) / n if n else 0.0
    r = np.asarray(rho0.matrix, dtype=complex).reshape(-1).copy()
    times = [t0]
    out = [ReducedDensity(r.reshape(2, 2).copy())]
    if n == 0:
        return LindbladTrajectory(np.array(times), out)
    constant = model.schedule.is_constant
    l_start, u = model.generator(t0)
    l_mid = l_end = l_start
    for i in range(n):
        t = t0 + i * h
        if not constant:
            l_mid, u = model.generator(t + 0.5 * h, u)
            l_end, u = model.generator(min(t + h, t1), u)
        k1 = l_start @ r
        k2 = l_mid @ (r + 0.5 * h * k1)
        k3 = l_mid @ (r + 0.5 * h * k2)
        k4 = l_end @ (r + h * k3)
        r = r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        l_start = l_end
        _check_density(r, t + h)
        if (i + 1) % stride == 0 or i + 1 == n:
            times.append(t0 + (i + 1) * h)
            m = r.reshape(2, 2)
            out.append(ReducedDensity(0.5 * (m + m.conj().T)))
    return LindbladTrajectory(np.array(times), out)


def schrodinger_rk4(schedule: Schedule, psi0, t0: float, t1: float, dt: float) -> np.ndarray:
    """Closed-system qubit state at ``t1`` by RK4 on i d psi/dt = H_S(t) psi."""
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    h = (t1 - t0) / n
    psi = np.asarray(psi0, dtype=complex).copy()
    h_start = qubit_hamiltonian(schedule, t0)
    for i in range(n):
        t = t0 + i * h
        h_mid = qubit_hamiltonian(schedule, t + 0.5 * h)
        h_end = qubit_hamiltonian(schedule, min(t + h, t1))
        k1 = -1j * (h_start @ psi)
        k2 = -1j * (h_mid @ (psi + 0.5 * h * k1))
        k3 = -1j * (h_mid @ (psi + 0.5 * h * k2))
        k4 = -1j * (h_end @ (psi + h * k3))
        psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        h_start = h_end
    return psi
