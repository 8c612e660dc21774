from __future__ import annotations

import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from silbath.cli import main
from silbath.config import ConfigError, load_config, parse_config
from silbath.errors import ResourceError
from silbath.runner import TRAJECTORY_COLUMNS, run_experiment


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


PURE = {
    "kind": "pure-decoherence",
    "bath": {"s": 1, "eta": 1e-4, "omega_c": 10, "n_modes": 40, "n_ph": 1},
    "schedule": {"epsilon": 1},
    "sil": {"dt": 0.05},
    "t_final": 5,
    "stride": 5,
}


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({"kind": "spin-boson", "t_final": 3})
        (p,) = cfg.points()
        assert p.schedule.fields(0.0) == (1.0, 0.0)
        assert cfg.initial_prep() == "z+"
        assert math.isinf(p.spec.beta)

    def test_sweep_product_order(self):
        cfg = parse_config({"kind": "anneal", "sweep": {"t_f": [1, 2], "eta": [0.1, 0.2, 0.3]}})
        pts = cfg.points()
        assert [(p.values["eta"], p.values["t_f"]) for p in pts][:3] == [(0.1, 1), (0.1, 2), (0.2, 1)]
        assert pts[-1].label == "point_0005"
        assert pts[3].schedule.t_f == 2 and pts[3].spec.eta == 0.2

    @pytest.mark.parametrize("raw, path", [
        ({"kind": "spin-boson", "t_final": 1, "colour": 1}, ("colour",)),
        ({"kind": "spin-boson", "t_final": 1, "bath": {"eta": 0.7, "x": 1}}, ("bath", "x")),
        ({"kind": "spin-boson", "t_final": 1, "bath": {"eta": -1}}, ("bath", "eta")),
        ({"kind": "spin-boson"}, ("t_final",)),
        ({"kind": "anneal"}, ("schedule",)),
        ({"kind": "anneal", "sweep": {"t_f": [1, -2]}}, ("sweep", "t_f", 1)),
        ({"kind": "pure-decoherence", "t_final": 1, "schedule": {"gamma": 1}}, ("schedule", "gamma")),
        ({"kind": "spin-boson", "t_final": 1, "sil": {"dt": 0}}, ("sil",)),
        ({"kind": "spin-boson", "t_final": 1, "initial": "y+"}, ("initial",)),
        ({"kind": "oracle-table", "oracle": "niba"}, ("grid",)),
        ({"kind": "oracle-table", "oracle": "niba", "grid": {"t": [1]}}, ("grid", "t")),
        ({"kind": "spin-boson", "t_final": 1, "method": "redfield"}, ("method",)),
    ])
    def test_errors_carry_path(self, raw, path):
        with pytest.raises(ConfigError) as info:
            parse_config(raw)
        assert info.value.path == path

    def test_resource_cap(self):
        with pytest.raises(ResourceError) as info:
            parse_config({"kind": "spin-boson", "t_final": 1, "bath": {"n_modes": 400, "n_ph": 3},
                          "max_dimension": 10**6})
        assert info.value.dimension > 10**6

    def test_lindblad_skips_cap(self):
        parse_config({"kind": "spin-boson", "method": "lindblad", "t_final": 1,
                      "bath": {"n_modes": 400, "n_ph": 3}, "max_dimension": 10})

    def test_line_numbers(self, tmp_path):
        p = write(tmp_path, '{\n  "kind": "spin-boson",\n  "t_final": 1,\n  "bath": {\n    "eta": -1\n  }\n}')
        with pytest.raises(ConfigError) as info:
            load_config(p)
        assert info.value.line == 5
        p = write(tmp_path, '{"kind":\n  "x",', "broken.json")
        with pytest.raises(ConfigError) as info:
            load_config(p)
        assert info.value.line == 2


class TestCommands:
    def test_validate(self, tmp_path, capsys):
        assert main(["validate", str(write(tmp_path, PURE))]) == 0
        assert capsys.readouterr().out.startswith("ok: pure-decoherence, 1 sweep point(s)")

    def test_exit_domain(self, tmp_path, capsys):
        p = write(tmp_path, '{\n  "kind": "spin-boson",\n  "t_final": 3,\n  "bath": {"eta": -1}\n}')
        assert main(["validate", str(p)]) == 1
        err = capsys.readouterr().err
        assert f"{p}:4: error:" in err and "[bath.eta]" in err

    def test_exit_resource(self, tmp_path, capsys):
        p = write(tmp_path, {"kind": "spin-boson", "t_final": 1, "bath": {"n_modes": 400, "n_ph": 3},
                             "max_dimension": 10**6})
        assert main(["run", str(p)]) == 2
        assert "resource error" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.json")]) == 1

    def test_oracle_command_needs_oracle_kind(self, tmp_path):
        assert main(["oracle", str(write(tmp_path, PURE))]) == 1

    def test_run_pure_decoherence(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(["run", str(write(tmp_path, {**PURE, "output": "out"}))]) == 0
        header, data = read_csv(tmp_path / "out" / "point_0000.csv")
        assert tuple(header) == TRAJECTORY_COLUMNS
        np.testing.assert_allclose(data[:, 0], np.linspace(0, 5, 21))
        assert data[0, 1] == pytest.approx(1.0)
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        (point,) = summary["points"]
        assert point["max_relative_error"] < 1e-4
        assert point["energy_drift"] < 1e-8 * 10
        assert (tmp_path / "out" / "sweep.csv").exists()

    def test_console_script(self, tmp_path):
        p = write(tmp_path, PURE)
        out = subprocess.run([sys.executable, "-m", "silbath.cli", "validate", str(p)], capture_output=True,
                             text=True)
        assert out.returncode == 0 and out.stdout.startswith("ok:")

    def test_lindblad_run(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = {"kind": "spin-boson", "method": "lindblad", "bath": {"eta": 0.05, "beta": 2.0},
               "lindblad": {"dt": 0.01}, "t_final": 20, "stride": 10, "output": "lb"}
        assert main(["run", str(write(tmp_path, cfg))]) == 0
        point = json.loads((tmp_path / "lb" / "summary.json").read_text())["points"][0]
        assert point["closed_form_deviation"] < 1e-6
        _, data = read_csv(tmp_path / "lb" / "point_0000.csv")
        assert np.all(np.isnan(data[:, 4]))

    def test_oracle_table(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = {"kind": "oracle-table", "oracle": "anneal-fidelity", "initial": "z+",
               "grid": {"t_f": {"start": 1, "stop": 50, "num": 5}, "eta": [1e-3, 1e-2]}, "output": "tab"}
        assert main(["oracle", str(write(tmp_path, cfg))]) == 0
        header, data = read_csv(tmp_path / "tab" / "anneal-fidelity.csv")
        assert header == ["t_f", "rho_gs_eta=0.001", "eps_res_eta=0.001", "rho_gs_eta=0.01", "eps_res_eta=0.01"]
        assert data.shape == (5, 5)
        assert np.all(np.diff(data[:, 3]) > 0)

    @pytest.mark.parametrize("oracle, grid", [
        ("decoherence-closed-form", {"t": [0, 1, 2]}),
        ("decoherence-finite-T", {"t": [0, 1]}),
        ("exact-sigma-x", {"t": [0, 1]}),
        ("quality-factor", {"eta": [0.005, 0.05]}),
        ("renormalized-gap", {"eta": [0, 0.05]}),
        ("niba", {"epsilon": [-1, 0, 1]}),
        ("sbm-lindblad", {"t": [0, 1]}),
        ("lindblad-pure-decoherence", {"t": [0, 1]}),
    ])
    def test_every_oracle(self, tmp_path, oracle, grid):
        cfg = parse_config({"kind": "oracle-table", "oracle": oracle, "grid": grid,
                            "bath": {"eta": 0.01, "beta": 10, "n_modes": 20}, "output": str(tmp_path)})
        result = run_experiment(cfg)
        assert result["rows"] == len(next(iter(grid.values())))


class TestDeterminism:
    def test_workers_give_identical_files(self, tmp_path, monkeypatch):
        doc = {"kind": "spin-boson", "bath": {"eta": 0.05, "beta": 2.0, "n_modes": 8, "n_ph": 2},
               "sil": {"dt": 0.1}, "t_final": 2, "thermal_samples": 4, "seed": 7,
               "sweep": {"eta": [0.01, 0.05]}}
        files = {}
        for workers in ("1", "2"):
            monkeypatch.setenv("SILBATH_WORKERS", workers)
            out = tmp_path / f"w{workers}"
            assert main(["run", str(write(tmp_path, {**doc, "output": str(out)}))]) == 0
            files[workers] = {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}
        assert files["1"] == files["2"]
        assert set(files["1"]) == {"point_0000.csv", "point_0001.csv", "sweep.csv"}

    def test_seed_changes_thermal_samples(self, tmp_path):
        base = {"kind": "spin-boson", "bath": {"eta": 0.05, "beta": 1.0, "n_modes": 8, "n_ph": 1},
                "sil": {"dt": 0.1}, "t_final": 1, "thermal_samples": 3}
        a = run_experiment(parse_config({**base, "seed": 1, "output": str(tmp_path / "a")}))
        b = run_experiment(parse_config({**base, "seed": 1, "output": str(tmp_path / "b")}))
        c = run_experiment(parse_config({**base, "seed": 2, "output": str(tmp_path / "c")}))
        read = lambda d: (tmp_path / d / "point_0000.csv").read_bytes()  # noqa: E731
        assert read("a") == read("b") != read("c")
        assert a["points"][0]["thermal_samples"] == 3

    def test_bad_worker_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SILBATH_WORKERS", "zero")
        assert main(["run", str(write(tmp_path, {**PURE, "output": str(tmp_path / "o")}))]) == 1
