"""Declarative experiment configuration.

A config is one UTF-8 JSON document. A minimal spin-boson run::

    {
      "kind": "spin-boson",
      "bath": {"s": 1, "eta": 0.05, "omega_c": 10, "n_modes": 100, "n_ph": 2},
      "schedule": {"gamma": 1, "epsilon": 0},
      "t_final": 30,
      "output": "out/sbm"
    }

Every field is checked against the invariants of the object it builds
before anything is computed; errors carry the JSON path of the offending
field so the command line can point at its line.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .bath import BathSpec
from .errors import DomainError, ResourceError
from .fock import DEFAULT_DIMENSION_CAP, qubit_amplitudes, vacuum_dimension
from .hamiltonian import Schedule
from .sil import SilConfig

__all__ = ["ConfigError", "ExperimentConfig", "SweepPoint", "load_config", "parse_config", "locate"]

KINDS = ("pure-decoherence", "spin-boson", "anneal", "oracle-table")
METHODS = ("sil", "lindblad")
SWEEP_AXES = ("eta", "t_f", "n_ph", "s")
# oracle name -> (required grid axis, optional extra axes)
ORACLE_AXES = {
    "decoherence-closed-form": ("t", ("s",)),
    "decoherence-finite-T": ("t", ()),
    "exact-sigma-x": ("t", ()),
    "quality-factor": ("eta", ()),
    "renormalized-gap": ("eta", ()),
    "niba": ("epsilon", ()),
    "anneal-fidelity": ("t_f", ("eta",)),
    "sbm-lindblad": ("t", ()),
    "lindblad-pure-decoherence": ("t", ()),
}
ORACLES = tuple(ORACLE_AXES)

_TOP_KEYS = {
    "kind", "method", "bath", "schedule", "sil", "lindblad", "initial", "t_final", "stride",
    "sweep", "seed", "thermal_samples", "output", "max_dimension", "fit", "oracle", "grid",
}
_BATH_KEYS = {"s", "eta", "omega_c", "beta", "n_modes", "n_ph"}
_SCHEDULE_KEYS = {"gamma", "epsilon", "t_f"}
_SIL_KEYS = {"dt", "krylov_dim", "norm_tol", "adaptive", "adaptive_tol", "reorth_tol"}
_LINDBLAD_KEYS = {"dt", "include_lamb_shift"}
_FIT_KEYS = {"saturation_start", "cosine_start"}


class ConfigError(DomainError):
    """Invalid configuration; ``path`` names the offending JSON field."""

    def __init__(self, message: str, path: tuple = (), line: int | None = None):
        super().__init__(message)
        self.path = tuple(path)
        self.line = line


@dataclass(frozen=True)
class SweepPoint:
    index: int
    values: dict
    spec: BathSpec
    schedule: Schedule

    @property
    def label(self) -> str:
        return f"point_{self.index:04d}"


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    method: str = "sil"
    bath: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    sil: SilConfig = field(default_factory=SilConfig)
    lindblad_dt: float | None = None
    include_lamb_shift: bool = True
    initial: object = None
    t_final: float | None = None
    stride: int = 1
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    thermal_samples: int = 64
    output: Path = Path("out")
    max_dimension: int = DEFAULT_DIMENSION_CAP
    fit: dict = field(default_factory=dict)
    oracle: str | None = None
    grid: dict = field(default_factory=dict)

    def points(self) -> list[SweepPoint]:
        """Cartesian product of the sweep axes in a fixed order (one point if empty)."""
        axes = [a for a in SWEEP_AXES if a in self.sweep]
        out = []
        for i, combo in enumerate(itertools.product(*(self.sweep[a] for a in axes))):
            values = dict(zip(axes, combo))
            out.append(SweepPoint(i, values, self._spec(values), self._schedule(values)))
        return out

    def _spec(self, values: dict) -> BathSpec:
        kw = dict(self.bath)
        kw.update({k: v for k, v in values.items() if k in _BATH_KEYS})
        return BathSpec(**kw)

    def _schedule(self, values: dict) -> Schedule:
        g = self.schedule.get("gamma", 0.0 if self.kind == "pure-decoherence" else 1.0)
        e = self.schedule.get("epsilon", 1.0 if self.kind in ("pure-decoherence", "anneal") else 0.0)
        if self.kind == "anneal":
            return Schedule.linear_anneal(g, e, values.get("t_f", self.schedule.get("t_f")))
        return Schedule.constant(g, e)

    def initial_prep(self):
        if self.initial is not None:
            return self.initial
        return "z+" if self.kind == "spin-boson" else "x+"


def locate(text: str, path: tuple) -> int | None:
    """1-based line of the JSON key reached by ``path`` (best effort)."""
    pos = 0
    found = None
    for key in path:
        if isinstance(key, int):
            continue
        idx = text.find(json.dumps(key), pos)
        if idx < 0:
            break
        pos = idx + 1
        found = idx
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


def _section(raw: dict, name: str, allowed: set) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object", (name,))
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"unknown field '{name}.{key}'; allowed: {sorted(allowed)}", (name, key))
    return dict(sec)


def _beta(value, path):
    if value is None or value == "inf":
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("beta must be a number, null or \"inf\"", path)
    return float(value)


def _number(value, path, *, positive=False, integer=False, optional=False):
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if positive and not value > 0:
        raise ConfigError(f"expected a value > 0, got {value!r}", path)
    return int(value) if integer else float(value)


def _check(builder, path):
    try:
        return builder()
    except ConfigError:
        raise
    except (DomainError, TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc), path) from None


def _grid_values(spec, path) -> list:
    if isinstance(spec, list):
        vals = [_number(v, path + (i,)) for i, v in enumerate(spec)]
    elif isinstance(spec, dict):
        for key in spec:
            if key not in ("start", "stop", "num", "log"):
                raise ConfigError(f"unknown grid field '{key}'", path + (key,))
        start = _number(spec.get("start"), path + ("start",))
        stop = _number(spec.get("stop"), path + ("stop",))
        num = _number(spec.get("num"), path + ("num",), positive=True, integer=True)
        if spec.get("log"):
            if start <= 0 or stop <= 0:
                raise ConfigError("log grid needs positive bounds", path)
            ratio = (stop / start) ** (1.0 / (num - 1)) if num > 1 else 1.0
            vals = [start * ratio ** i for i in range(num)]
        else:
            vals = [start + (stop - start) * i / (num - 1) for i in range(num)] if num > 1 else [start]
    else:
        raise ConfigError("grid axis must be a list or {start, stop, num}", path)
    if not vals:
        raise ConfigError("grid axis is empty", path)
    return vals


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a decoded JSON document and build an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown field '{key}'; allowed: {sorted(_TOP_KEYS)}", (key,))
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"'kind' must be one of {list(KINDS)}, got {kind!r}", ("kind",))
    method = raw.get("method", "sil")
    if method not in METHODS:
        raise ConfigError(f"'method' must be one of {list(METHODS)}, got {method!r}", ("method",))

    bath = _section(raw, "bath", _BATH_KEYS)
    for key, val in bath.items():
        if key == "beta":
            bath[key] = _beta(val, ("bath", key))
        else:
            _number(val, ("bath", key))
        _check(lambda: BathSpec(**{key: bath[key]}), ("bath", key))
    schedule = _section(raw, "schedule", _SCHEDULE_KEYS)
    for key, val in schedule.items():
        schedule[key] = _number(val, ("schedule", key), positive=key == "t_f")
    if kind == "pure-decoherence" and schedule.get("gamma", 0.0) != 0.0:
        raise ConfigError("pure-decoherence requires schedule.gamma = 0", ("schedule", "gamma"))

    sil_raw = _section(raw, "sil", _SIL_KEYS)
    sil = _check(lambda: SilConfig(**sil_raw), ("sil",))
    lind = _section(raw, "lindblad", _LINDBLAD_KEYS)
    lindblad_dt = _number(lind.get("dt"), ("lindblad", "dt"), positive=True, optional=True)
    include_ls = lind.get("include_lamb_shift", True)
    if not isinstance(include_ls, bool):
        raise ConfigError("include_lamb_shift must be true or false", ("lindblad", "include_lamb_shift"))

    initial = raw.get("initial")
    if initial is not None:
        if not isinstance(initial, (str, dict)):
            raise ConfigError("initial must be a named state or {xi, phi}", ("initial",))
        _check(lambda: qubit_amplitudes(initial), ("initial",))

    sweep = _section(raw, "sweep", set(SWEEP_AXES))
    for axis, vals in sweep.items():
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"sweep axis '{axis}' must be a non-empty list", ("sweep", axis))
        sweep[axis] = [_number(v, ("sweep", axis, i), integer=axis == "n_ph") for i, v in enumerate(vals)]

    t_final = _number(raw.get("t_final"), ("t_final",), optional=True)
    if t_final is not None and t_final < 0:
        raise ConfigError("t_final must be >= 0", ("t_final",))
    stride = _number(raw.get("stride", 1), ("stride",), positive=True, integer=True)
    seed = _number(raw.get("seed", 0), ("seed",), integer=True)
    samples = _number(raw.get("thermal_samples", 64), ("thermal_samples",), positive=True, integer=True)
    cap = _number(raw.get("max_dimension", DEFAULT_DIMENSION_CAP), ("max_dimension",), positive=True,
                  integer=True)
    fit = _section(raw, "fit", _FIT_KEYS)
    for key, val in fit.items():
        fit[key] = _number(val, ("fit", key), optional=True)
    out = raw.get("output", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output must be a non-empty path string", ("output",))
    output = Path(out)
    if base_dir is not None and not output.is_absolute():
        output = base_dir / output

    oracle = raw.get("oracle")
    grid = {}
    if kind == "oracle-table":
        if oracle not in ORACLES:
            raise ConfigError(f"unknown oracle {oracle!r}; choose from {list(ORACLES)}", ("oracle",))
        graw = raw.get("grid", {})
        if not isinstance(graw, dict) or not graw:
            raise ConfigError("oracle-table needs a non-empty 'grid' object", ("grid",))
        main, extra = ORACLE_AXES[oracle]
        for k in graw:
            if k != main and k not in extra:
                raise ConfigError(f"oracle {oracle} takes grid axes {[main, *extra]}, not '{k}'", ("grid", k))
        if main not in graw:
            raise ConfigError(f"oracle {oracle} needs grid axis '{main}'", ("grid",))
        grid = {k: _grid_values(v, ("grid", k)) for k, v in graw.items()}
        _check(lambda: BathSpec(**bath), ("bath",))
    elif oracle is not None or "grid" in raw:
        raise ConfigError("'oracle' and 'grid' apply to oracle-table configs only", ("oracle",) if oracle else ("grid",))
    elif kind == "anneal":
        if "t_f" not in schedule and "t_f" not in sweep:
            raise ConfigError("anneal needs schedule.t_f or a t_f sweep axis", ("schedule",))
    elif t_final is None:
        raise ConfigError(f"{kind} needs 't_final'", ("t_final",))

    cfg = ExperimentConfig(kind=kind, method=method, bath=bath, schedule=schedule, sil=sil,
                           lindblad_dt=lindblad_dt, include_lamb_shift=include_ls, initial=initial,
                           t_final=t_final, stride=stride, sweep=sweep, seed=seed, thermal_samples=samples,
                           output=output, max_dimension=cap, fit=fit, oracle=oracle, grid=grid)
    if kind != "oracle-table":
        _validate_points(cfg)
    return cfg


def _validate_points(cfg: ExperimentConfig) -> None:
    axes = [a for a in SWEEP_AXES if a in cfg.sweep]
    for axis in axes:
        for i, v in enumerate(cfg.sweep[axis]):
            values = {axis: v}
            if axis in _BATH_KEYS:
                _check(lambda: cfg._spec(values), ("sweep", axis, i))
            else:
                _check(lambda: cfg._schedule(values), ("sweep", axis, i))
    points = _check(cfg.points, ("bath",))
    if cfg.method == "sil":
        for p in points:
            dim = vacuum_dimension(p.spec.n_modes, p.spec.n_ph)
            if dim > cfg.max_dimension:
                raise ResourceError(
                    f"{p.label} needs a basis of dimension {dim} > max_dimension {cfg.max_dimension}", dim)


def load_config(path: str | Path) -> tuple[ExperimentConfig, str]:
    """Read and validate a config file; returns the config and its raw text."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    try:
        return parse_config(raw, base_dir=None), text
    except ConfigError as exc:
        if exc.line is None and exc.path:
            exc.line = locate(text, exc.path)
        raise
