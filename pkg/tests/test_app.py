"""Tests for the command line front door."""

import json

import pandas as pd
import pytest

from app import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main, parse_until
from utils.exceptions import ConfigError
from utils.model import SECONDS_PER_YEAR

SMALL_BOX = """
name = "cli-box"
description = "Small HRL box"

[domain]
extents = [20.0, 10.0]
resolution = [16, 8]

[params]
k = 1e-16
phi = 0.1
mu = 1.1e-3
rho0 = 1000.0
alpha = 0.7
omega_max = 0.1
g = 9.81
D = 1e-9

[bc.flow.default]
type = "neumann"

[bc.transport.default]
type = "neumann"

[[bc.transport.rules]]
side = "top"
type = "dirichlet"
value = "omega_max"

[[bc.transport.rules]]
side = "bottom"
type = "dirichlet"
value = 0.0

[initial]
kind = "diffusive-steady+perturbation"

[eig]
k = 3
m = 24
"""


@pytest.fixture
def box_file(tmp_path):
    path = tmp_path / "cli-box.toml"
    path.write_text(SMALL_BOX)
    return str(path)


class TestParseUntil:
    def test_values(self):
        assert parse_until(None) is None
        assert parse_until("steady") == "steady"
        assert parse_until("1e9") == 1e9
        assert parse_until("2yr") == pytest.approx(2 * SECONDS_PER_YEAR)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            parse_until("soon")


class TestCatalog:
    def test_list(self, capsys):
        assert main(["catalog", "list"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "hrl-D11" in out
        assert "elder" in out

    def test_show(self, capsys):
        assert main(["catalog", "show", "hrl-A1"]) == EXIT_OK
        assert '"hrl-A1"' in capsys.readouterr().out

    def test_show_needs_name(self):
        assert main(["catalog", "show"]) == EXIT_CONFIG


class TestMethods:
    def test_eig_writes_outputs(self, box_file, tmp_path, capsys):
        out = tmp_path / "eig"
        assert main(["eig", box_file, "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out / "eigenvalues.csv")
        assert len(frame) == 3
        report = json.loads((out / "report.json").read_text())
        assert report["method"] == "eig"
        assert report["results"]["verdict"] == "stable"
        assert str(out / "eigenvalues.csv") in report["manifest"]
        assert "cli-box: stable" in capsys.readouterr().out

    def test_eig_with_modes(self, box_file, tmp_path):
        out = tmp_path / "modes"
        assert main(["eig", box_file, "-k", "2", "--vtk", "--out", str(out)]) == EXIT_OK
        assert (out / "mode_1_2d.vtk").exists()
        assert (out / "mode_2_2d.vtk").exists()

    def test_run_writes_outputs(self, box_file, tmp_path):
        out = tmp_path / "run"
        assert main(["run", box_file, "--until", "1e9", "--out", str(out), "--seed", "3"]) == EXIT_OK
        steps = pd.read_csv(out / "steps.csv")
        assert steps["t"].iloc[-1] == pytest.approx(1e9)
        assert (out / "sherwood.csv").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["results"]["stop_reason"] == "end_time"
        assert report["metadata"]["seed"] == 3

    def test_elder_level_run_with_projections(self, tmp_path):
        out = tmp_path / "elder"
        argv = ["run", "elder-nogravity", "--level", "2", "--project", "2", "--out", str(out)]
        assert main(argv) == EXIT_OK
        steps = pd.read_csv(out / "steps.csv")
        projections = pd.read_csv(out / "projections.csv")
        assert len(projections) == len(steps)
        report = json.loads((out / "report.json").read_text())
        assert report["grid"]["2d"] == 32

    def test_compare_runs(self, box_file, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["eig", box_file, "--out", str(a)]) == EXIT_OK
        assert main(["eig", box_file, "--out", str(b), "--seed", "9"]) == EXIT_OK
        capsys.readouterr()
        assert main(["compare", str(a), str(b)]) == EXIT_OK
        comparison = json.loads(capsys.readouterr().out)
        assert comparison["eigenvalues"]["same_sign_leading"] is True
        assert max(abs(d) for d in comparison["eigenvalues"]["delta"]) < 1e-3


class TestExitCodes:
    def test_unknown_scenario(self):
        assert main(["eig", "no-such-scenario"]) == EXIT_CONFIG

    def test_invalid_until(self, box_file, tmp_path):
        assert main(["run", box_file, "--until", "soon", "--out", str(tmp_path / "x")]) == EXIT_CONFIG

    def test_basis_too_small(self, box_file, tmp_path):
        assert main(["eig", box_file, "-k", "40", "--out", str(tmp_path / "x")]) == EXIT_CONFIG

    def test_bracket_without_crossing(self, box_file, tmp_path):
        args = ["critical-ra", box_file, "--lo", "1", "--hi", "5", "--max-solves", "2",
                "--out", str(tmp_path / "x")]
        assert main(args) == EXIT_SOLVER

    def test_missing_report(self, tmp_path):
        assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == EXIT_CONFIG
