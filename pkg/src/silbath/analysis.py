"""Least-squares fits and error traces for trajectories.

Two model families are fitted:

    damped cosine           y = A cos(Omega t + mu) exp(-gamma t) [+ c]
    exponential saturation  y = A + B exp(-t / tau)

Both use Levenberg-Marquardt (``scipy.optimize.least_squares``) from
data-driven starting points and analytic Jacobians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DomainError, FitError

__all__ = [
    "FitResult",
    "fit_damped_cosine",
    "fit_exponential_saturation",
    "relative_error",
    "max_relative_error",
    "MASK_THRESHOLD",
]

MASK_THRESHOLD = 1e-3
MAX_ITERATIONS = 500
PARAM_TOL = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Outcome of a fit.

    Attributes:
        model: ``"damped-cosine"`` or ``"exponential-saturation"``.
        params: fitted parameters by name.
        covariance: linearized covariance in the order of ``params``.
        residual_norm: 2-norm of the residual vector over the window.
        window: (t_start, t_end) of the samples used.
        nfev: number of model evaluations.
    """

    model: str
    params: dict
    covariance: np.ndarray
    residual_norm: float
    window: tuple
    nfev: int = 0

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def stderr(self, name: str) -> float:
        i = list(self.params).index(name)
        v = self.covariance[i, i]
        return float(math.sqrt(v)) if v >= 0 else math.nan

    @property
    def quality_factor(self) -> float:
        """Omega / gamma of a damped-cosine fit."""
        if self.model != "damped-cosine":
            raise DomainError("quality factor is defined for damped-cosine fits")
        g = self.params["gamma"]
        return math.inf if g == 0 else self.params["Omega"] / g

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "stderr": {k: self.stderr(k) for k in self.params},
            "residual_norm": float(self.residual_norm),
            "window": [float(self.window[0]), float(self.window[1])],
            "nfev": int(self.nfev),
        }


def _series(t, y, t_start=None, t_end=None) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.ndim != 1 or t.shape != y.shape:
        raise DomainError(f"time and value arrays must be 1-d and equal length, got {t.shape} and {y.shape}")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise DomainError("time grid must be strictly increasing")
    keep = np.ones(t.size, dtype=bool)
    if t_start is not None:
        keep &= t >= t_start
    if t_end is not None:
        keep &= t <= t_end
    if not np.all(np.isfinite(y[keep])):
        raise DomainError("series contains non-finite values")
    return t[keep], y[keep]


def _covariance(res, n: int) -> np.ndarray:
    jac = res.jac
    p = jac.shape[1]
    dof = max(n - p, 1)
    s2 = 2.0 * res.cost / dof
    return np.linalg.pinv(jac.T @ jac) * s2


def _solve(fun, jac, x0):
    return least_squares(fun, x0, jac=jac, method="lm", xtol=PARAM_TOL, ftol=1e-15, gtol=1e-15,
                         max_nfev=MAX_ITERATIONS * (len(x0) + 1))


# ---------------------------------------------------------------- damped cosine

def _dominant_frequency(t: np.ndarray, y: np.ndarray) -> float:
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=0.0):
        grid = np.linspace(t[0], t[-1], t.size)
        y = np.interp(grid, t, y)
        step = grid[1] - grid[0]
    else:
        step = float(dt.mean())
    pad = 8 * t.size
    spec = np.abs(np.fft.rfft((y - y.mean()) * np.hanning(y.size), n=pad))
    freqs = np.fft.rfftfreq(pad, d=step)
    k = int(np.argmax(spec[1:])) + 1
    if 1 <= k < spec.size - 1:
        a, b, c = spec[k - 1], spec[k], spec[k + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    return 2.0 * math.pi * (freqs[k] + shift * (freqs[1] - freqs[0]))


def _extrema(y: np.ndarray) -> np.ndarray:
    d = np.diff(y)
    idx = np.nonzero((d[:-1] > 0) & (d[1:] <= 0) | (d[:-1] < 0) & (d[1:] >= 0))[0] + 1
    return idx


def _cosine_guesses(t, y, offset: bool) -> list[np.ndarray]:
    """Starting points from the spectral peak and from the extrema spacing.

    Extrema of a damped cosine are exactly pi / Omega apart; that estimate
    survives strong damping, where the two Lorentzian peaks of the spectrum
    merge into the zero-frequency bin.
    """
    c0 = float(np.mean(y[len(y) // 2:])) if offset else 0.0
    z = y - c0
    ext = _extrema(z)
    ext = ext[np.abs(z[ext]) > 1e-3 * np.max(np.abs(z))]
    if ext.size >= 2:
        slope = np.polyfit(t[ext], np.log(np.abs(z[ext])), 1)[0]
        gamma = max(-slope, 0.0)
    else:
        gamma = 0.0
    omegas = [_dominant_frequency(t, z)]
    if ext.size >= 3:
        omegas.append(math.pi / float(np.median(np.diff(t[ext]))))
    i0 = int(ext[0]) if ext.size else int(np.argmax(np.abs(z)))
    if abs(z[0]) >= abs(z[i0]) * 0.999:
        i0 = 0
    amp = abs(z[i0]) * math.exp(gamma * t[i0])
    out = []
    for omega in omegas:
        mu = -omega * t[i0] + (math.pi if z[i0] < 0 else 0.0)
        x0 = [amp, omega, math.remainder(mu, 2 * math.pi), gamma]
        if offset:
            x0.append(c0)
        out.append(np.array(x0))
    return out


def fit_damped_cosine(t, y, *, offset: bool = False, t_start: float | None = None,
                      t_end: float | None = None) -> FitResult:
    """Fit A cos(Omega t + mu) exp(-gamma t), optionally plus a constant c.

    Args:
        t, y: samples (at least 20, spanning at least two periods).
        offset: also fit an equilibrium value ``c`` the oscillation settles to.
        t_start, t_end: restrict the fit window.

    Raises:
        DomainError: too few samples or periods.
        FitError: no convergence, or a negative damping rate; ``best`` holds
            the last iterate.
    """
    t, y = _series(t, y, t_start, t_end)
    if t.size < 20:
        raise DomainError(f"damped-cosine fit needs >= 20 samples, got {t.size}")
    guesses = _cosine_guesses(t, y, offset)

    def model(p):
        a, om, mu, g = p[:4]
        env = np.exp(-g * t)
        ph = om * t + mu
        return a * np.cos(ph) * env, a * np.sin(ph) * env, env, ph

    def fun(p):
        val = model(p)[0] - y
        return val + p[4] if offset else val

    def jac(p):
        a, om, mu, g = p[:4]
        cosv, sinv, env, ph = model(p)
        cols = [np.cos(ph) * env, -t * sinv, -sinv, -t * cosv]
        if offset:
            cols.append(np.ones_like(t))
        return np.stack(cols, axis=1)

    res = min((_solve(fun, jac, x0) for x0 in guesses), key=lambda r: r.cost)
    a, om, mu, g = (float(v) for v in res.x[:4])
    span = t[-1] - t[0]
    if abs(om) * span < 4.0 * math.pi * (1 - 1e-3):
        raise DomainError(f"series spans {abs(om) * span / (2 * math.pi):.2f} periods; need >= 2")
    if a < 0:
        a, mu = -a, mu + math.pi
    if om < 0:
        om, mu = -om, -mu
    params = {"A": a, "Omega": om, "mu": math.remainder(mu, 2 * math.pi), "gamma": g}
    if offset:
        params["c"] = float(res.x[4])
    result = FitResult("damped-cosine", params, _covariance(res, t.size),
                       float(np.linalg.norm(res.fun)), (float(t[0]), float(t[-1])), int(res.nfev))
    if res.status <= 0:
        raise FitError(f"damped-cosine fit did not converge: {res.message}", result)
    # a decay rate at round-off level is an undamped signal, not a failure
    if g < -1e-8 * max(om, 1.0):
        raise FitError(f"fitted damping rate {g:.3e} is negative", result)
    return result


# ------------------------------------------------------- exponential saturation

def _linear_ab(t, y, tau):
    e = np.exp(-t / tau)
    m = np.stack([np.ones_like(t), e], axis=1)
    coef, *_ = np.linalg.lstsq(m, y, rcond=None)
    r = m @ coef - y
    return coef, float(r @ r)


def fit_exponential_saturation(t, y, *, t_start: float | None = None, t_end: float | None = None,
                               gap: float | None = None) -> FitResult:
    """Fit A + B exp(-t / tau); ``A`` is the extrapolated equilibrium value.

    The window starts at ``t_start``, or at 5 / ``gap`` when only the qubit
    gap is given, which clears the short-time transient.

    Raises:
        DomainError: fewer than four samples in the window.
        FitError: no convergence; ``best`` holds the last iterate.
    """
    if t_start is None and gap is not None:
        if not gap > 0:
            raise DomainError("gap must be > 0")
        t_start = 5.0 / gap
    t, y = _series(t, y, t_start, t_end)
    if t.size < 4:
        raise DomainError(f"saturation fit needs >= 4 samples in the window, got {t.size}")
    t0 = float(t[0])
    u = t - t0
    span = float(u[-1]) if u[-1] > 0 else 1.0
    best = None
    for tau in np.geomspace(span / 200.0, span * 50.0, 80):
        coef, cost = _linear_ab(u, y, tau)
        if best is None or cost < best[0]:
            best = (cost, coef, tau)
    _, (a0, b0), tau0 = best
    x0 = np.array([a0, b0, math.log(tau0)])

    def fun(p):
        return p[0] + p[1] * np.exp(-u * math.exp(-p[2])) - y

    def jac(p):
        k = math.exp(-p[2])
        e = np.exp(-u * k)
        return np.stack([np.ones_like(u), e, p[1] * e * u * k], axis=1)

    res = _solve(fun, jac, x0)
    a, b_local, log_tau = (float(v) for v in res.x)
    tau = math.exp(log_tau)
    # express B for the original time origin: B exp(-t/tau) = B_local exp(-(t - t0)/tau)
    grow = math.exp(min(t0 / tau, 700.0))
    b = b_local * grow
    cov = _covariance(res, t.size)
    jt = np.array([[1.0, 0.0, 0.0], [0.0, grow, b * t0 / tau], [0.0, 0.0, tau]])
    cov = jt @ cov @ jt.T
    result = FitResult("exponential-saturation", {"A": a, "B": b, "tau": tau}, cov,
                       float(np.linalg.norm(res.fun)), (t0, float(t[-1])), int(res.nfev))
    if res.status <= 0:
        raise FitError(f"saturation fit did not converge: {res.message}", result)
    return result


# -------------------------------------------------------------- relative error

def relative_error(sim, ref, t_sim=None, t_ref=None, *, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    """delta(t) = (sim - ref) / ref, NaN wherever |ref| < ``threshold``.

    Raises:
        DomainError: the series (or their time grids, when given) do not align.
    """
    sim = np.asarray(sim, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if sim.shape != ref.shape:
        raise DomainError(f"series shapes differ: {sim.shape} vs {ref.shape}")
    if (t_sim is None) != (t_ref is None):
        raise DomainError("give both time grids or neither")
    if t_sim is not None:
        ts, tr = np.asarray(t_sim, dtype=float), np.asarray(t_ref, dtype=float)
        if ts.shape != sim.shape or tr.shape != ref.shape:
            raise DomainError("time grid length does not match its series")
        scale = max(float(np.max(np.abs(tr))) if tr.size else 0.0, 1.0)
        if np.max(np.abs(ts - tr), initial=0.0) > 1e-9 * scale:
            raise DomainError("time grids are not aligned")
    out = np.full(sim.shape, np.nan)
    keep = np.abs(ref) >= threshold
    out[keep] = (sim[keep] - ref[keep]) / ref[keep]
    return out


def max_relative_error(delta: np.ndarray) -> float:
    """Largest |delta| over the unmasked points (NaN when everything is masked)."""
    d = np.abs(np.asarray(delta, dtype=float))
    return float(np.nanmax(d)) if np.any(np.isfinite(d)) else math.nan
