"""Continuous bosonic bath, its uniform discretization, and Born-Markov spectral functions.

Energies are in arbitrary units with hbar = k_B = 1. Zero temperature is
represented by ``beta = math.inf``; divergent quantities are reported as
``math.inf`` rather than raised.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericalError

__all__ = [
    "BathSpec",
    "DiscreteBath",
    "spectral_density",
    "discretize",
    "lindblad_gamma",
    "lindblad_lamb_shift",
    "bath_correlation_time",
    "poincare_time",
    "total_weight",
]


@dataclass(frozen=True)
class BathSpec:
    """Power-law bath with a sharp cutoff plus its discretization knobs.

    Attributes:
        s: spectral exponent (sub-Ohmic < 1 < super-Ohmic).
        eta: dimensionless coupling strength.
        omega_c: cutoff frequency.
        beta: inverse temperature, ``math.inf`` at zero temperature.
        n_modes: number of discrete modes M.
        n_ph: maximum total excitation displacement kept in the Fock basis.
    """

    s: float = 1.0
    eta: float = 0.0
    omega_c: float = 10.0
    beta: float = math.inf
    n_modes: int = 200
    n_ph: int = 1

    def __post_init__(self):
        if not self.s > 0:
            raise DomainError(f"spectral exponent s must be > 0, got {self.s}")
        if not self.eta >= 0:
            raise DomainError(f"coupling eta must be >= 0, got {self.eta}")
        if not self.omega_c > 0 or not math.isfinite(self.omega_c):
            raise DomainError(f"cutoff omega_c must be finite and > 0, got {self.omega_c}")
        if not self.beta > 0:
            raise DomainError(f"beta must be > 0 or inf, got {self.beta}")
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise DomainError(f"n_modes must be an integer >= 1, got {self.n_modes}")
        if int(self.n_ph) != self.n_ph or self.n_ph < 0:
            raise DomainError(f"n_ph must be an integer >= 0, got {self.n_ph}")

    @property
    def zero_temperature(self) -> bool:
        return math.isinf(self.beta)


@dataclass(frozen=True)
class DiscreteBath:
    """Mode frequencies and couplings sampled from a :class:`BathSpec`."""

    frequencies: np.ndarray
    couplings: np.ndarray
    source: BathSpec = field(repr=False)

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)


def spectral_density(spec: BathSpec, omega):
    """J(omega) = eta omega^s / omega_c^(s-1) below the cutoff, zero above.

    Accepts scalars or arrays; raises :class:`DomainError` for negative omega.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("spectral density is defined for omega >= 0 only")
    inside = (w > 0) & (w <= spec.omega_c)
    out = np.where(inside, spec.eta * np.power(np.where(inside, w, 1.0), spec.s)
                   / spec.omega_c ** (spec.s - 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


def total_weight(spec: BathSpec) -> float:
    """Integral of J over (0, omega_c]: eta omega_c^2 / (s + 1)."""
    return spec.eta * spec.omega_c ** 2 / (spec.s + 1.0)


def discretize(spec: BathSpec) -> DiscreteBath:
    """Uniform mode grid omega_k = k omega_c / M with mean-value couplings.

    g_k^2 = eta omega_c^2 k^s / M^(s+1), k = 1..M.
    """
    m = spec.n_modes
    k = np.arange(1, m + 1, dtype=float)
    freqs = spec.omega_c * k / m
    freqs[-1] = spec.omega_c  # keep the top mode inside the cutoff despite rounding
    g2 = spec.eta * spec.omega_c ** 2 * k ** spec.s / float(m) ** (spec.s + 1.0)
    freqs.setflags(write=False)
    g = np.sqrt(g2)
    g.setflags(write=False)
    return DiscreteBath(frequencies=freqs, couplings=g, source=spec)


def poincare_time(bath: DiscreteBath | BathSpec) -> float:
    """Recurrence time 2 pi / omega_1 of the discretized bath."""
    if isinstance(bath, BathSpec):
        return 2.0 * math.pi * bath.n_modes / bath.omega_c
    return 2.0 * math.pi / float(bath.frequencies[0])


def _gamma_scalar(spec: BathSpec, w: float) -> float:
    beta = spec.beta
    if w == 0.0:
        if math.isinf(beta):
            return 0.0
        if spec.s > 1.0:
            return 0.0
        if spec.s == 1.0:
            return 2.0 * math.pi * spec.eta / beta
        return math.inf if spec.eta > 0 else 0.0
    a = abs(w)
    if a > spec.omega_c:
        return 0.0
    j = spec.eta * a ** spec.s / spec.omega_c ** (spec.s - 1.0)
    if w > 0:
        if math.isinf(beta):
            return 2.0 * math.pi * j
        return 2.0 * math.pi * j / -math.expm1(-beta * a)
    if math.isinf(beta):
        return 0.0
    return 2.0 * math.pi * j / math.expm1(beta * a)


def lindblad_gamma(spec: BathSpec, omega):
    """Decay-rate spectrum gamma(omega) entering the dissipator.

    gamma(omega) = 2 pi J(omega) / (1 - exp(-beta omega)) for omega >= 0 and
    exp(beta omega) gamma(-omega) for omega < 0. The omega = 0 value is the
    one-sided limit; it is ``inf`` for sub-Ohmic baths at finite temperature.
    """
    if np.ndim(omega) == 0:
        return _gamma_scalar(spec, float(omega))
    w = np.asarray(omega, dtype=float)
    return np.array([_gamma_scalar(spec, float(x)) for x in w.ravel()]).reshape(w.shape)


def lindblad_lamb_shift(spec: BathSpec, omega: float, *, epsabs: float | None = None) -> float:
    """Principal value S(omega) = P int gamma(w') / (omega - w') dw' / 2 pi.

    The pole is removed by subtracting gamma(omega) / (omega - w') and adding
    back its analytic principal value; the smooth remainder goes to QUADPACK.
    """
    omega = float(omega)
    if not math.isfinite(omega):
        raise DomainError("lamb shift requires a finite frequency")
    if spec.eta == 0.0:
        return 0.0
    wc = spec.omega_c
    lo = 0.0 if spec.zero_temperature else -wc
    hi = wc
    if abs(omega) == wc:
        raise NumericalError(f"principal value diverges at omega = {omega} (sharp cutoff)")
    if epsabs is None:
        epsabs = 1e-10 * spec.eta * wc

    def gam(x):
        return _gamma_scalar(spec, x)

    breaks = [p for p in (0.0, omega) if lo < p < hi]
    if lo < omega < hi:
        g0 = gam(omega)
        if not math.isfinite(g0):
            raise NumericalError(f"gamma diverges at omega = {omega}; lamb shift undefined")

        def remainder(x):
            if x == omega:
                return 0.0
            return (gam(x) - g0) / (omega - x)

        val, err = _quad(remainder, lo, hi, breaks, epsabs)
        val += g0 * math.log(abs((omega - lo) / (omega - hi)))
    else:
        val, err = _quad(lambda x: gam(x) / (omega - x), lo, hi, breaks, epsabs)
    return val / (2.0 * math.pi)


def _quad(f, a, b, points, epsabs):
    # integrate piecewise so every breakpoint becomes an interval endpoint
    edges = [a, *sorted(points), b]
    total = 0.0
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for x0, x1 in zip(edges[:-1], edges[1:]):
            if x1 <= x0:
                continue
            try:
                v, e = integrate.quad(f, x0, x1, epsabs=epsabs, epsrel=1e-11, limit=400)
            except integrate.IntegrationWarning as exc:
                raise NumericalError(f"quadrature on [{x0}, {x1}] did not converge: {exc}") from exc
            total += v
            err += e
    return total, err


def bath_correlation_time(spec: BathSpec) -> float:
    """tau_B = beta / pi; infinite at zero temperature."""
    return spec.beta / math.pi
