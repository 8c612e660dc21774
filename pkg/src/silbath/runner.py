"""Execution of validated experiment configs: sweep dispatch and output files."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracles
from .analysis import fit_damped_cosine, fit_exponential_saturation, max_relative_error, relative_error
from .bath import BathSpec, discretize
from .config import ExperimentConfig, SweepPoint
from .errors import DomainError, FitError, NumericalError
from .fock import enumerate_basis, initial_state, qubit_amplitudes, sample_thermal_occupations
from .hamiltonian import HamiltonianModel, Schedule, qubit_hamiltonian, spectral_gap
from .lindblad import (LindbladModel, anneal_fidelity_analytic, integrate_rk4, pure_decoherence_analytic,
                       sbm_analytic)
from .observables import (ReducedDensity, energy_observer, ground_population, instantaneous_eigenbasis,
                          qubit_observer, residual_energy)
from .sil import propagate

__all__ = ["TRAJECTORY_COLUMNS", "PointResult", "run_point", "run_experiment", "oracle_table",
           "worker_count", "WORKERS_ENV"]

logger = logging.getLogger(__name__)

WORKERS_ENV = "SILBATH_WORKERS"
TRAJECTORY_COLUMNS = ("t", "sigma_x", "sigma_z", "H_S", "H_B", "V", "H", "norm_drift")


@dataclass
class PointResult:
    label: str
    columns: np.ndarray  # (n_samples, len(TRAJECTORY_COLUMNS))
    summary: dict


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise DomainError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _initial_prep(cfg: ExperimentConfig, schedule: Schedule):
    if cfg.initial is not None or cfg.kind != "anneal":
        return cfg.initial_prep()
    # annealing starts in the instantaneous ground state of H_S(0)
    _, u = instantaneous_eigenbasis(qubit_hamiltonian(schedule, 0.0))
    return complex(u[0, 0]), complex(u[1, 0])


def _end_time(cfg: ExperimentConfig, schedule: Schedule) -> float:
    return schedule.t_f if cfg.kind == "anneal" else cfg.t_final


def _check_densities(rhos, label):
    for i, rho in enumerate(rhos):
        try:
            rho.check(tol_trace=1e-10, tol_eig=1e-10)
        except DomainError as exc:
            raise NumericalError(f"{label}: sample {i}: {exc}") from None


def _sil_point(cfg: ExperimentConfig, p: SweepPoint) -> tuple[np.ndarray, dict]:
    spec, sched = p.spec, p.schedule
    bath = discretize(spec)
    t1 = _end_time(cfg, sched)
    prep = _initial_prep(cfg, sched)
    if spec.zero_temperature:
        refs = [None]
    else:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, p.index]))
        refs = [sample_thermal_occupations(bath.frequencies, spec.beta, rng) for _ in range(cfg.thermal_samples)]
    runs = []
    info = {"dimension": [], "steps": 0, "max_norm_drift": 0.0, "max_krylov": 0}
    for ref in refs:
        basis = enumerate_basis(spec.n_modes, spec.n_ph, ref, cap=cfg.max_dimension)
        model = HamiltonianModel(sched, bath, basis)
        psi = initial_state(basis, prep)
        traj = propagate(model, psi, 0.0, t1, cfg.sil, [qubit_observer, energy_observer(model)],
                         stride=cfg.stride)
        rhos = [r["rho"] for r in traj.records]
        _check_densities(rhos, p.label)
        mats = np.array([r.matrix for r in rhos])
        energies = np.array([[r["H_S"], r["H_B"], r["V"], r["H"]] for r in traj.records])
        runs.append((traj.times, mats, energies, traj.column("norm_drift")))
        info["dimension"].append(basis.dimension)
        info["steps"] = traj.steps
        info["max_norm_drift"] = max(info["max_norm_drift"], traj.max_norm_drift)
        info["max_krylov"] = max(info["max_krylov"], traj.max_krylov)
    t = runs[0][0]
    mats = np.mean([r[1] for r in runs], axis=0)
    energies = np.mean([r[2] for r in runs], axis=0)
    drift = np.max([r[3] for r in runs], axis=0)
    sx = 2.0 * mats[:, 1, 0].real
    sz = (mats[:, 0, 0] - mats[:, 1, 1]).real
    cols = np.column_stack([t, sx, sz, energies, drift])
    summary = {
        "dimension": max(info["dimension"]),
        "steps": info["steps"],
        "max_norm_drift": info["max_norm_drift"],
        "max_krylov": info["max_krylov"],
        "final_rho": mats[-1],
    }
    if len(runs) > 1:
        n = len(runs)
        per_x = np.array([2.0 * r[1][:, 1, 0].real for r in runs])
        per_z = np.array([(r[1][:, 0, 0] - r[1][:, 1, 1]).real for r in runs])
        summary["thermal_samples"] = n
        summary["stderr_max"] = {
            "sigma_x": float(np.max(per_x.std(axis=0, ddof=1) / math.sqrt(n))),
            "sigma_z": float(np.max(per_z.std(axis=0, ddof=1) / math.sqrt(n))),
        }
    if sched.is_constant:
        summary["energy_drift"] = float(np.max(np.abs(energies[:, 3] - energies[0, 3])))
    if cfg.kind == "pure-decoherence":
        ref = oracles.exact_sigma_x(bath, sched.epsilon0, t)
        summary["max_relative_error"] = max_relative_error(relative_error(sx, ref))
    return cols, summary


def _lindblad_point(cfg: ExperimentConfig, p: SweepPoint) -> tuple[np.ndarray, dict]:
    sched = p.schedule
    model = LindbladModel(sched, p.spec, cfg.include_lamb_shift)
    rho0 = ReducedDensity.pure(*qubit_amplitudes(_initial_prep(cfg, sched)))
    traj = integrate_rk4(model, rho0, 0.0, _end_time(cfg, sched), cfg.lindblad_dt, stride=cfg.stride)
    _check_densities(traj.densities, p.label)
    hs = np.array([r.expectation(qubit_hamiltonian(sched, min(tt, sched.t_f or tt)))
                   for tt, r in zip(traj.times, traj.densities)])
    drift = np.array([abs(r.trace - 1.0) for r in traj.densities])
    nan = np.full_like(hs, np.nan)
    cols = np.column_stack([traj.times, traj.sigma_x, traj.sigma_z, hs, nan, nan, hs, drift])
    summary = {"final_rho": traj.final.matrix, "steps": len(traj.times) - 1}
    if cfg.kind == "pure-decoherence":
        ref = pure_decoherence_analytic(p.spec, sched.epsilon0, traj.times)
        summary["max_relative_error"] = max_relative_error(relative_error(traj.sigma_x, ref))
    elif cfg.kind == "spin-boson" and sched.epsilon0 == 0.0:
        ref_x, ref_z = sbm_analytic(model, rho0, traj.times)
        summary["closed_form_deviation"] = float(max(np.max(np.abs(traj.sigma_x - ref_x)),
                                                     np.max(np.abs(traj.sigma_z - ref_z))))
    elif cfg.kind == "anneal" and p.spec.zero_temperature:
        rho_gs0 = ground_population(sched, 0.0, rho0)
        summary["fidelity_adiabatic_limit"] = anneal_fidelity_analytic(model, 1.0, rho0=rho_gs0)
    return cols, summary


def _fit_summary(cfg: ExperimentConfig, sched: Schedule, cols: np.ndarray) -> dict:
    t, sx, sz = cols[:, 0], cols[:, 1], cols[:, 2]
    out = {}
    try:
        fit = fit_damped_cosine(t, sz, offset=True, t_start=cfg.fit.get("cosine_start"))
        out["sigma_z_fit"] = fit.to_dict()
        out["quality_factor"] = fit.quality_factor
        out["sigma_z_eq"] = fit["c"]
    except (FitError, DomainError) as exc:
        out["sigma_z_fit"] = {"error": str(exc)}
    start = cfg.fit.get("saturation_start")
    gap = spectral_gap(sched, 0.0)
    try:
        fit = fit_exponential_saturation(t, sx, t_start=start, gap=gap if start is None and gap > 0 else None)
        out["sigma_x_fit"] = fit.to_dict()
        out["sigma_x_eq"] = fit["A"]
    except (FitError, DomainError) as exc:
        out["sigma_x_fit"] = {"error": str(exc)}
    return out


def run_point(cfg: ExperimentConfig, p: SweepPoint) -> PointResult:
    """Compute one sweep point; pure apart from logging, safe to run in a worker."""
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.method == "sil":
            cols, summary = _sil_point(cfg, p)
        else:
            cols, summary = _lindblad_point(cfg, p)
    sched = p.schedule
    rho = ReducedDensity(summary.pop("final_rho"))
    if cfg.kind == "spin-boson":
        summary.update(_fit_summary(cfg, sched, cols))
    elif cfg.kind == "anneal":
        summary["eps_res"] = residual_energy(sched, rho)
        summary["rho_gs"] = ground_population(sched, sched.t_f, rho)
    summary = {
        "index": p.index,
        "label": p.label,
        "method": cfg.method,
        "kind": cfg.kind,
        "values": p.values,
        **summary,
        "warnings": sorted({str(w.message) for w in caught}),
        "wall_time": time.perf_counter() - start,
    }
    return PointResult(p.label, cols, summary)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


_SCALARS = ("dimension", "max_norm_drift", "energy_drift", "max_relative_error", "closed_form_deviation",
            "quality_factor", "sigma_z_eq", "sigma_x_eq", "eps_res", "rho_gs", "fidelity_adiabatic_limit")


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> dict:
    """Run every sweep point and write one CSV per point plus the summaries.

    Points go to a process pool of ``workers`` (default from the
    ``SILBATH_WORKERS`` variable); this process alone writes files.
    """
    if cfg.kind == "oracle-table":
        return oracle_table(cfg)
    workers = worker_count() if workers is None else workers
    points = cfg.points()
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    if workers == 1 or len(points) == 1:
        results = [run_point(cfg, p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(points))) as pool:
            results = list(pool.map(run_point, [cfg] * len(points), points))
    summaries = []
    for res in results:
        write_csv(out / f"{res.label}.csv", TRAJECTORY_COLUMNS, res.columns)
        summaries.append(_jsonable(res.summary))
        logger.info("%s done in %.1f s", res.label, res.summary["wall_time"])
    axes = list(points[0].values)
    present = [k for k in _SCALARS if any(k in s for s in summaries)]
    rows = []
    for p, s in zip(points, summaries):
        rows.append([p.index, *(p.values[a] for a in axes),
                     *(s.get(k, math.nan) if not isinstance(s.get(k), str) else float(s[k]) for k in present)])
    write_csv(out / "sweep.csv", ["index", *axes, *present], rows)
    summary = {"kind": cfg.kind, "method": cfg.method, "points": summaries,
               "wall_time": time.perf_counter() - start}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


# ---------------------------------------------------------------- oracle tables

def _oracle_columns(cfg: ExperimentConfig) -> tuple[list[str], np.ndarray]:
    name, grid = cfg.oracle, cfg.grid
    spec = BathSpec(**cfg.bath)
    g = cfg.schedule.get("gamma", 1.0)
    eps = cfg.schedule.get("epsilon", 1.0)
    if name == "decoherence-closed-form":
        t = np.array(grid["t"])
        ss = grid.get("s", [0.5, 1.0, 2.0])
        return ["t", *(f"K_s={s:g}" for s in ss)], np.column_stack(
            [t, *(oracles.decoherence_closed_form(s, spec.omega_c, t) for s in ss)])
    if name == "decoherence-finite-T":
        t = np.array(grid["t"])
        ev = oracles.decoherence_finite_T(spec, t)
        return ["t", "K", "K_inf", "delta_K"], np.column_stack([t, ev.K, ev.K_inf, ev.delta_K])
    if name == "exact-sigma-x":
        t = np.array(grid["t"])
        cont = oracles.exact_sigma_x(spec, eps, t)
        disc = oracles.exact_sigma_x(discretize(spec), eps, t)
        lind = pure_decoherence_analytic(spec, eps, t)
        return ["t", "sigma_x_continuum", "sigma_x_discrete", "sigma_x_lindblad"], np.column_stack(
            [t, cont, disc, lind])
    if name == "lindblad-pure-decoherence":
        t = np.array(grid["t"])
        return ["t", "sigma_x"], np.column_stack([t, pure_decoherence_analytic(spec, eps, t)])
    if name == "quality-factor":
        eta = np.array(grid["eta"])
        return ["eta", "quality_factor"], np.column_stack([eta, [oracles.quality_factor(e) for e in eta]])
    if name == "renormalized-gap":
        eta = np.array(grid["eta"])
        return ["eta", "gamma_r"], np.column_stack(
            [eta, [oracles.renormalized_gap(g, spec.omega_c, e) for e in eta]])
    if name == "niba":
        e = np.array(grid["epsilon"])
        return ["epsilon", "sigma_z"], np.column_stack([e, [oracles.niba_asymptote(x, spec.beta) for x in e]])
    if name == "sbm-lindblad":
        t = np.array(grid["t"])
        model = LindbladModel(Schedule.constant(g, cfg.schedule.get("epsilon", 0.0)), spec, cfg.include_lamb_shift)
        rho0 = ReducedDensity.pure(*qubit_amplitudes(cfg.initial or "z+"))
        sx, sz = sbm_analytic(model, rho0, t)
        return ["t", "sigma_x", "sigma_z"], np.column_stack([t, sx, sz])
    if name == "anneal-fidelity":
        tfs = np.array(grid["t_f"])
        etas = grid.get("eta", [spec.eta])
        header, cols = ["t_f"], [tfs]
        for e in etas:
            sub = BathSpec(**{**cfg.bath, "eta": e})
            rho = []
            for tf in tfs:
                sched = Schedule.linear_anneal(g, eps, tf)
                model = LindbladModel(sched, sub, cfg.include_lamb_shift)
                r0 = 1.0
                if cfg.initial is not None:
                    r0 = ground_population(sched, 0.0, ReducedDensity.pure(*qubit_amplitudes(cfg.initial)))
                rho.append(anneal_fidelity_analytic(model, 1.0, rho0=r0))
            rho = np.array(rho)
            header += [f"rho_gs_eta={e:g}", f"eps_res_eta={e:g}"]
            cols += [rho, 2.0 * eps * (1.0 - rho)]
        return header, np.column_stack(cols)
    raise DomainError(f"unknown oracle {name!r}")


def oracle_table(cfg: ExperimentConfig) -> dict:
    """Tabulate a closed-form oracle over its grid into ``<output>/<oracle>.csv``."""
    header, table = _oracle_columns(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.oracle}.csv"
    write_csv(path, header, table)
    return {"kind": "oracle-table", "oracle": cfg.oracle, "rows": int(table.shape[0]), "path": str(path)}
