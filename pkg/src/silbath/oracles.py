"""Closed-form and quadrature reference results.

The pure-decoherence model (Gamma = 0) is exactly solvable:

    <sigma_x(t)> = cos(2 eps t) exp[-eta K(t, beta)]
    eta K(t, beta) = 8 sum_k g_k^2 / w_k^2 sin^2(w_k t / 2) coth(beta w_k / 2)

with the sum replaced by an integral over J(w) for a continuum bath.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, special

from .bath import BathSpec, DiscreteBath, spectral_density
from .errors import DomainError, NumericalError

__all__ = [
    "DecoherenceEval",
    "exact_sigma_x",
    "discrete_decoherence",
    "decoherence_function",
    "decoherence_closed_form",
    "decoherence_finite_T",
    "quality_factor",
    "renormalized_gap",
    "niba_asymptote",
]

_CLOSED_FORM_EXPONENTS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class DecoherenceEval:
    """K(t, beta) split into its zero-temperature part and thermal excess."""

    K: np.ndarray | float
    K_inf: np.ndarray | float
    delta_K: np.ndarray | float


def _as_times(t) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise DomainError("times must be >= 0")
    return np.atleast_1d(arr), arr.ndim == 0


def _unwrap(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


def discrete_decoherence(bath: DiscreteBath, t) -> np.ndarray | float:
    """K(t, beta) as the finite sum over the bath modes."""
    spec = bath.source
    if spec.eta == 0.0:
        ts, scalar = _as_times(t)
        return _unwrap(np.zeros_like(ts), scalar)
    ts, scalar = _as_times(t)
    w = np.asarray(bath.frequencies)
    # g_k^2 / eta from J at unit coupling, so subnormal eta cannot overflow 8 / eta
    weight = spectral_density(replace(spec, eta=1.0), w) * (spec.omega_c / bath.n_modes) / w**2
    if not spec.zero_temperature:
        weight = weight / np.tanh(0.5 * spec.beta * w)
    out = np.empty_like(ts)
    for lo in range(0, ts.size, 256):
        chunk = ts[lo: lo + 256]
        out[lo: lo + 256] = np.sin(0.5 * np.outer(chunk, w)) ** 2 @ weight
    return _unwrap(8.0 * out, scalar)


def _small_x_series(s: float, x: np.ndarray) -> np.ndarray:
    """K(t, inf) = 4 sum_n (-1)^(n+1) x^(2n) / ((2n)! (s + 2n - 1)), x = omega_c t < 1."""
    x2 = np.asarray(x, dtype=float) ** 2
    term = np.ones_like(x2)
    acc = np.zeros_like(x2)
    for n in range(1, 16):
        term = term * x2 / ((2 * n - 1) * (2 * n))
        acc += (-1) ** (n + 1) * term / (s + 2 * n - 1)
    return 4.0 * acc


def decoherence_closed_form(s: float, omega_c: float, t):
    """K(t, inf) for s in {1/2, 1, 2} with a sharp cutoff at ``omega_c``."""
    if s not in _CLOSED_FORM_EXPONENTS:
        raise DomainError(f"closed form exists only for s in {_CLOSED_FORM_EXPONENTS}, got {s}")
    if not omega_c > 0:
        raise DomainError("omega_c must be > 0")
    ts, scalar = _as_times(t)
    x = omega_c * ts
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    if s == 0.5:
        fs, _ = special.fresnel(np.sqrt(2.0 * xp / math.pi))
        out[pos] = 8.0 * (-1.0 + np.cos(xp) + np.sqrt(2.0 * math.pi * xp) * fs)
    elif s == 1.0:
        _, ci = special.sici(xp)
        out[pos] = 4.0 * (np.euler_gamma - ci + np.log(xp))
    else:
        out[pos] = 4.0 - 4.0 * np.sin(xp) / xp
    # the closed forms cancel catastrophically for small x; sum the power series there
    small = pos & (x < 1.0)
    out[small] = _small_x_series(s, x[small])
    return _unwrap(out, scalar)


def _integral(f, omega_c: float, t: float, rtol: float) -> float:
    """int_0^omega_c f(w) dw split into half-periods of the sin^2(w t / 2) factor."""
    n = max(1, int(math.ceil(omega_c * t / math.pi)))
    edges = np.linspace(0.0, omega_c, n + 1)
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            for a, b in zip(edges[:-1], edges[1:]):
                val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=max(0.1 * rtol, 1e-13), limit=200)
                total += val
        except integrate.IntegrationWarning as exc:
            raise NumericalError(f"decoherence quadrature failed at t = {t}: {exc}") from exc
    return total


def _continuum_terms(spec: BathSpec, t: float, rtol: float) -> tuple[float, float]:
    s, wc, beta = spec.s, spec.omega_c, spec.beta
    if t == 0.0:
        return 0.0, 0.0
    pref = 8.0 * wc ** (1.0 - s)
    # for omega_c t < 1 the sin^2 factor is ~ (w t / 2)^2; divide it out so
    # quadrature never sees underflowing integrands
    short = wc * t < 1.0
    norm = 0.25 * t * t if short else 1.0

    def base(w):
        u = 0.5 * w * t
        if short:
            sinc = math.sin(u) / u if u > 0 else 1.0
            return w**s * sinc * sinc
        return w ** (s - 2.0) * math.sin(u) ** 2

    if s in _CLOSED_FORM_EXPONENTS:
        k_inf = float(decoherence_closed_form(s, wc, t))
    elif short:
        k_inf = float(_small_x_series(s, np.array([wc * t]))[0])
    else:
        k_inf = pref * _integral(base, wc, t, rtol)
    if math.isinf(beta):
        return k_inf, 0.0

    def thermal(w):
        return base(w) * 2.0 / math.expm1(beta * w)

    return k_inf, pref * norm * _integral(thermal, wc, t, rtol)


def decoherence_finite_T(spec: BathSpec, t, rtol: float = 1e-8) -> DecoherenceEval:
    """Continuum K(t, beta) by quadrature, returned with its split.

    K_inf uses the closed form where one exists; the thermal excess
    delta_K carries the coth(beta w / 2) - 1 weight and vanishes at beta = inf.
    """
    ts, scalar = _as_times(t)
    k_inf = np.empty_like(ts)
    d_k = np.empty_like(ts)
    for i, ti in enumerate(ts):
        k_inf[i], d_k[i] = _continuum_terms(spec, float(ti), rtol)
    total = k_inf + d_k
    return DecoherenceEval(_unwrap(total, scalar), _unwrap(k_inf, scalar), _unwrap(d_k, scalar))


def decoherence_function(spec: BathSpec, t, rtol: float = 1e-8):
    """Continuum K(t, beta)."""
    return decoherence_finite_T(spec, t, rtol).K


def exact_sigma_x(bath: BathSpec | DiscreteBath, eps: float, t):
    """cos(2 eps t) exp[-eta K(t, beta)] for the pure-decoherence model.

    A :class:`DiscreteBath` gives the finite-mode sum, which the propagator
    must reproduce exactly; a :class:`BathSpec` gives the continuum result.
    """
    if isinstance(bath, DiscreteBath):
        eta = bath.source.eta
        k = discrete_decoherence(bath, t)
    elif isinstance(bath, BathSpec):
        eta = bath.eta
        k = decoherence_function(bath, t)
    else:
        raise DomainError(f"expected BathSpec or DiscreteBath, got {type(bath).__name__}")
    t_arr = np.asarray(t, dtype=float)
    out = np.cos(2.0 * eps * t_arr) * np.exp(-eta * np.asarray(k))
    return float(out) if out.ndim == 0 else out


def quality_factor(eta: float) -> float:
    """Omega / gamma = cot[2 pi eta / (2 (1 - 2 eta))], infinite at eta = 0."""
    if not 0.0 <= eta < 0.5:
        raise DomainError(f"quality factor needs 0 <= eta < 1/2, got {eta}")
    if eta == 0.0:
        return math.inf
    return 1.0 / math.tan(2.0 * math.pi * eta / (2.0 * (1.0 - 2.0 * eta)))


def renormalized_gap(gamma0: float, omega_c: float, eta: float) -> float:
    """Gamma_r = Gamma (2 Gamma / omega_c)^(2 eta / (1 - 2 eta))."""
    if not 0.0 <= eta < 0.5:
        raise DomainError(f"renormalized gap needs 0 <= eta < 1/2, got {eta}")
    if not omega_c > 0 or gamma0 < 0:
        raise DomainError("need omega_c > 0 and gamma0 >= 0")
    if gamma0 == 0.0:
        return 0.0
    return gamma0 * (2.0 * gamma0 / omega_c) ** (2.0 * eta / (1.0 - 2.0 * eta))


def niba_asymptote(eps: float, beta: float) -> float:
    """Long-time <sigma_z> of the biased model in the blip approximation, tanh(beta eps / 2)."""
    if not beta > 0:
        raise DomainError("beta must be > 0")
    if eps == 0.0:
        return 0.0
    if math.isinf(beta):
        return math.copysign(1.0, eps)
    return math.tanh(0.5 * beta * eps)
