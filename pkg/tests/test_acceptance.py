"""Acceptance criteria 1-11 at their stated tolerances.

Every test records a pass/fail line through the ``criterion`` fixture, and the
table is printed at the end of the run. Sizes that do not fit in memory on one
core run at M = 100; see the README.
"""
from __future__ import annotations

import functools
import math
import time
import warnings

import numpy as np
import pytest

from silbath.analysis import fit_damped_cosine, fit_exponential_saturation, max_relative_error, relative_error
from silbath.bath import BathSpec, discretize, lindblad_gamma
from silbath.errors import DomainError, RecurrenceWarning
from silbath.fock import enumerate_basis, initial_state
from silbath.hamiltonian import HamiltonianModel, Schedule
from silbath.lindblad import (LindbladModel, anneal_fidelity_analytic, integrate_rk4, relaxation_times,
                              sbm_analytic, schrodinger_rk4)
from silbath.observables import (ReducedDensity, energy_observer, ground_population, qubit_observer, reduce,
                                 residual_energy)
from silbath.oracles import decoherence_function, exact_sigma_x, niba_asymptote, quality_factor
from silbath.sil import SilConfig, propagate

pytestmark = pytest.mark.slow

OMEGA_C = 10.0
SIL = SilConfig(dt=0.1, krylov_dim=40, adaptive=True)
# every SIL and Lindblad run made by this module, audited by criterion 11
AUDIT: list[dict] = []


def _audit_densities(label, densities, constant, energies=None, norm_drift=0.0, omega_c=OMEGA_C):
    bad = 0
    for rho in densities:
        try:
            rho.check()
        except DomainError:
            bad += 1
    entry = {"label": label, "norm_drift": norm_drift, "bad_densities": bad, "samples": len(densities),
             "energy_drift": None, "omega_c": omega_c}
    if constant and energies is not None:
        entry["energy_drift"] = float(np.max(np.abs(energies - energies[0])))
    AUDIT.append(entry)


def run_sil(label, spec, schedule, prep, t_final, *, cfg=SIL, stride=1):
    """SIL run with qubit and (for constant H) energy observers, audited for criterion 11."""
    m = spec.n_modes
    model = HamiltonianModel(schedule, discretize(spec), enumerate_basis(m, spec.n_ph))
    observers = [qubit_observer]
    if schedule.is_constant:
        observers.append(energy_observer(model))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RecurrenceWarning)
        traj = propagate(model, initial_state(model.basis, prep), 0.0, t_final, cfg, observers, stride=stride)
    energies = traj.column("H") if schedule.is_constant else None
    _audit_densities(label, traj.column("rho"), schedule.is_constant, energies, traj.max_norm_drift,
                     spec.omega_c)
    return model, traj


def run_lindblad(label, model, rho0, t_final, dt, stride=1):
    traj = integrate_rk4(model, rho0, 0.0, t_final, dt, stride=stride)
    _audit_densities(label, traj.densities, False)
    return traj


@functools.cache
def pure_decoherence_error(s, eta, m, n_ph, t_final=40.0):
    spec = BathSpec(s=s, eta=eta, omega_c=OMEGA_C, n_modes=m, n_ph=n_ph)
    _, traj = run_sil(f"pure s={s} eta={eta} M={m} N_ph={n_ph}", spec, Schedule.constant(0.0, 1.0), "x+",
                      t_final)
    ref = exact_sigma_x(discretize(spec), 1.0, traj.times)
    return max_relative_error(relative_error(traj.column("sigma_x"), ref))


@functools.cache
def unbiased_run(eta, m, n_ph, prep, t_final):
    spec = BathSpec(eta=eta, omega_c=OMEGA_C, n_modes=m, n_ph=n_ph)
    _, traj = run_sil(f"sbm eta={eta} M={m} N_ph={n_ph} {prep}", spec, Schedule.constant(1.0, 0.0), prep,
                      t_final)
    return traj


def cosine_fit(eta, m, n_ph, t_final):
    traj = unbiased_run(eta, m, n_ph, "z+", t_final)
    return fit_damped_cosine(traj.times, traj.column("sigma_z"), offset=True)


SIGMA_X_ETAS = (5e-4, 5e-3, 1e-2, 5e-2)


@functools.cache
def sigma_x_equilibrium(eta):
    traj = unbiased_run(eta, 100, 3, "x+", 20.0)
    return fit_exponential_saturation(traj.times, traj.column("sigma_x"), gap=2.0)["A"]


R = 2 ** -0.5


def closed_residual(t_f, dt=1e-3):
    sched = Schedule.linear_anneal(1.0, 1.0, t_f)
    psi = schrodinger_rk4(sched, [R, R], 0.0, t_f, dt)
    return residual_energy(sched, ReducedDensity(np.outer(psi, psi.conj())))


@functools.cache
def sil_residual(eta, m, n_ph, t_f, dt=0.1):
    spec = BathSpec(eta=eta, omega_c=OMEGA_C, n_modes=m, n_ph=n_ph)
    sched = Schedule.linear_anneal(1.0, 1.0, t_f)
    cfg = SIL if dt == SIL.dt else SilConfig(dt=dt, krylov_dim=12)
    _, traj = run_sil(f"anneal eta={eta} M={m} N_ph={n_ph} t_f={t_f}", spec, sched, "x+", t_f, cfg=cfg,
                      stride=max(1, round(1.0 / dt)))
    return residual_energy(sched, reduce(traj.final))


def lindblad_residual(eta, t_f, dt=2e-2):
    spec = BathSpec(eta=eta, omega_c=OMEGA_C)
    sched = Schedule.linear_anneal(1.0, 1.0, t_f)
    model = LindbladModel(sched, spec)
    traj = run_lindblad(f"lindblad anneal eta={eta} t_f={t_f}", model, ReducedDensity.pure(R, R), t_f, dt,
                        stride=50)
    return residual_energy(sched, traj.final), ground_population(sched, t_f, traj.final), model


def local_maxima(y):
    y = np.asarray(y)
    return np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] > y[2:])) + 1


# 1 ---------------------------------------------------------------------------

def test_criterion_01_basis_dimensions(criterion):
    enumerate_basis(200, 1)  # warm-up
    dims, seconds = [], []
    for n_ph in (1, 2, 3):
        t0 = time.perf_counter()
        dims.append(enumerate_basis(200, n_ph).dimension)
        seconds.append(time.perf_counter() - t0)
    ok = dims == [402, 40602, 2747402] and max(seconds) < 1.0
    assert criterion(1, ok, f"dims {dims}, slowest {max(seconds):.2f} s"), dims


# 2 ---------------------------------------------------------------------------

def test_criterion_02_pure_decoherence_accuracy(criterion):
    delta = pure_decoherence_error(1.0, 1e-4, 200, 1)
    assert criterion(2, delta <= 1e-4, f"max delta {delta:.2e} (M=200, N_ph=1)")


# 3 ---------------------------------------------------------------------------

@pytest.mark.parametrize("s", [1.0, 2.0])
def test_criterion_03_truncation_hierarchy(criterion, s):
    d = [pure_decoherence_error(s, 1e-2, 100, n) for n in (1, 2, 3)]
    ok = d[0] >= d[1] >= d[2] and d[0] >= 2 * d[2]
    detail = "max delta " + " / ".join(f"{x:.2e}" for x in d) + " for N_ph 1/2/3 (M=100)"
    assert criterion(3, ok, detail, part=f"s={s:g}")


# 4 ---------------------------------------------------------------------------

def test_criterion_04_lindblad_closed_form(criterion):
    worst, ratios = 0.0, []
    for eta, beta in ((1e-2, math.inf), (5e-2, math.inf), (1e-2, 2.0), (5e-2, 0.5)):
        model = LindbladModel(Schedule.constant(1.0, 0.0), BathSpec(eta=eta, omega_c=OMEGA_C, beta=beta))
        t1, t2 = relaxation_times(model)
        ratios.append(t2 / t1)
        rho0 = ReducedDensity.pure(1.0, 0.0)
        traj = run_lindblad(f"lindblad sbm eta={eta} beta={beta}", model, rho0, 10 * t1, dt=1e-2)
        sx, sz = sbm_analytic(model, rho0, traj.times)
        worst = max(worst, float(np.max(np.abs(traj.sigma_x - sx))), float(np.max(np.abs(traj.sigma_z - sz))))
    ok = worst <= 1e-6 and all(r == 2.0 for r in ratios)
    assert criterion(4, ok, f"max deviation {worst:.1e} over 10 T1, T2/T1 = {sorted(set(ratios))}")


# 5 ---------------------------------------------------------------------------

def test_criterion_05_thermal_decoherence_slope(criterion):
    spec = BathSpec(s=1, eta=0.01, omega_c=OMEGA_C, beta=10.0)
    t = np.linspace(20.0, 40.0, 81)
    slope = np.polyfit(t, spec.eta * decoherence_function(spec, t), 1)[0]
    target = 2 * lindblad_gamma(spec, 0.0)
    rel = abs(slope / target - 1)
    assert criterion(5, rel < 0.10, f"slope {slope:.5f} vs 2 gamma(0) = {target:.5f} ({rel:.1%})")


# 6, 7 ------------------------------------------------------------------------

def test_criterion_06_quality_factor(criterion):
    parts = []
    for eta, t_final in ((5e-3, 60.0), (5e-2, 40.0)):
        q, ref = cosine_fit(eta, 300, 2, t_final).quality_factor, quality_factor(eta)
        parts.append((abs(q / ref - 1), f"eta={eta:g}: Q {q:.3f} vs {ref:.3f}"))
    q2 = cosine_fit(5e-2, 100, 2, 40.0).quality_factor
    q3 = cosine_fit(5e-2, 100, 3, 40.0).quality_factor
    ref = quality_factor(5e-2)
    improves = abs(q3 - ref) < abs(q2 - ref)
    ok = all(rel < 0.15 for rel, _ in parts) and improves
    detail = "; ".join(d for _, d in parts) + f" (M=300, N_ph=2); M=100 N_ph 2 -> 3: {q2:.3f} -> {q3:.3f}"
    assert criterion(6, ok, detail)


def test_criterion_07_unbiased_equilibrium(criterion):
    cs = {eta: cosine_fit(eta, 300, 2, t)["c"] for eta, t in ((5e-3, 60.0), (5e-2, 40.0))}
    ok = all(abs(c) < 0.02 for c in cs.values())
    assert criterion(7, ok, ", ".join(f"eta={k:g}: sigma_z_eq {v:+.4f}" for k, v in cs.items()))


# 8 ---------------------------------------------------------------------------

def test_criterion_08_sigma_x_departure(criterion):
    model = LindbladModel(Schedule.constant(1.0, 0.0), BathSpec(eta=5e-2, omega_c=OMEGA_C))
    lindblad_eq = sbm_analytic(model, ReducedDensity.pure(R, R), 1e4)[0]
    a = [sigma_x_equilibrium(eta) for eta in SIGMA_X_ETAS]
    departs = all(x < 1 - 5e-3 for eta, x in zip(SIGMA_X_ETAS, a) if eta >= 5e-3)
    ok = departs and all(np.diff(a) < 0) and abs(lindblad_eq - 1) < 1e-9
    detail = ", ".join(f"{eta:g}: {x:.5f}" for eta, x in zip(SIGMA_X_ETAS, a))
    assert criterion(8, ok, f"sigma_x_eq {detail} (M=100, N_ph=3); Lindblad {lindblad_eq:.6f}")


# 9 ---------------------------------------------------------------------------

def test_criterion_09_biased_departs_from_niba(criterion):
    spec = BathSpec(eta=5e-3, omega_c=20.0, n_modes=200, n_ph=2)
    _, traj = run_sil("biased sbm", spec, Schedule.constant(1.0, -1.0), "z+", 60.0)
    fit = fit_damped_cosine(traj.times, traj.column("sigma_z"), offset=True)
    niba = niba_asymptote(-1.0, math.inf)
    gap = abs(fit["c"] - niba)
    assert criterion(9, gap > 0.05, f"long-time sigma_z {fit['c']:+.4f} vs NIBA {niba:+.1f}")


# 10 --------------------------------------------------------------------------

GRID_A = np.arange(1.0, 12.01, 0.25)


def test_criterion_10a_closed_system_anneal(criterion):
    sil = np.array([sil_residual(0.0, 4, 1, float(tf), dt=1e-3) for tf in GRID_A])
    ref = np.array([closed_residual(float(tf)) for tf in GRID_A])
    dev = float(np.max(np.abs(sil - ref)))
    n_max = len(local_maxima(ref))
    ok = dev <= 1e-6 and n_max >= 2 and len(local_maxima(sil)) == n_max
    assert criterion(10, ok, f"eta=0 max |diff| {dev:.1e}, {n_max} maxima over t_f in [1, 12]", part="a")


GRID_B = np.arange(2.0, 50.01, 0.5)


def test_criterion_10b_lindblad_anneal(criterion):
    closed = np.array([closed_residual(float(tf), dt=1e-2) for tf in GRID_B])
    eps, rel = [], 0.0
    for tf in GRID_B:
        e, p, model = lindblad_residual(1e-2, float(tf))
        eps.append(e)
        if tf >= 30:
            target = anneal_fidelity_analytic(model, 1.0)
            rel = max(rel, abs(p / target - 1))
    eps = np.array(eps)
    peaks = local_maxima(eps)
    oscillates = len(peaks) >= 3
    # the Lamb shift moves the phase, so compare against the closed-system peak envelope
    cpeaks = local_maxima(closed)
    envelope = np.interp(GRID_B[peaks], GRID_B[cpeaks], closed[cpeaks])
    damped = bool(np.all(eps[peaks] < envelope)) and eps[peaks][-1] < eps[peaks][0]
    ok = oscillates and damped and rel <= 0.02
    detail = (f"eta=1e-2: {len(peaks)} maxima, peaks {eps[peaks][0]:.1e} -> {eps[peaks][-1]:.1e} "
              f"below the closed envelope, rho_gs vs closed form {rel:.1e} for t_f >= 30")
    assert criterion(10, ok, detail, part="b")


def test_criterion_10c_intermediate_plateau(criterion):
    rows = []
    for tf in (10.0, 20.0):
        rows.append((tf, sil_residual(1e-2, 100, 3, tf), lindblad_residual(1e-2, tf)[0]))
    ok = any(s > 1.1 * lb for _, s, lb in rows)
    detail = ", ".join(f"t_f={tf:g}: SIL {s:.2e} vs Lindblad {lb:.2e}" for tf, s, lb in rows)
    assert criterion(10, ok, detail + " (M=100, N_ph=3)", part="c")


# closed-system maxima of the residual energy in the long-time window
LONG_T_F = (152.9, 156.8)


def test_criterion_10d_partial_speed_up(criterion):
    # eta = 0 reference from both the exact qubit integration and SIL at the same dt
    rows = [(tf, sil_residual(1e-2, 300, 2, tf), min(closed_residual(tf), sil_residual(0.0, 4, 1, tf)))
            for tf in LONG_T_F]
    ok = any(s < c for _, s, c in rows)
    detail = ", ".join(f"t_f={tf:g}: SIL {s:.2e} vs eta=0 {c:.2e}" for tf, s, c in rows)
    assert criterion(10, ok, detail + " (M=300, N_ph=2)", part="d")


# 11 --------------------------------------------------------------------------

def test_criterion_11_conservation(criterion):
    # a short run of its own, so the criterion is meaningful when run alone
    run_sil("conservation probe", BathSpec(eta=5e-2, omega_c=OMEGA_C, n_modes=40, n_ph=2),
            Schedule.constant(1.0, 0.5), "x+", 10.0)
    norm = max(a["norm_drift"] for a in AUDIT)
    energy = [a["energy_drift"] / a["omega_c"] for a in AUDIT if a["energy_drift"] is not None]
    bad = sum(a["bad_densities"] for a in AUDIT)
    samples = sum(a["samples"] for a in AUDIT)
    ok = norm < 1e-10 and max(energy) < 1e-8 and bad == 0
    detail = (f"{len(AUDIT)} runs: norm drift/step {norm:.1e}, energy drift/omega_c {max(energy):.1e}, "
              f"{bad}/{samples} invalid densities")
    assert criterion(11, ok, detail)
