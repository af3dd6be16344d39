"""Tests for phase timers, step logs and run reports."""

import json
import time

import numpy as np
import pandas as pd
import pytest

from utils.exceptions import ConfigError, IoError
from utils.run_monitor import (
    STEP_COLUMNS,
    PhaseTimer,
    RunReport,
    StepLog,
    compare_reports,
    load_report,
    write_frame,
)


def report(**results):
    return RunReport(scenario="box", method="eig", grid={"2d": 128}, rayleigh=6.24, peclet=0.78,
                     results=results)


class TestPhaseTimer:
    def test_accumulates_phases(self):
        timer = PhaseTimer()
        for _ in range(2):
            with timer.phase("lu"):
                time.sleep(0.001)
        timer.add("matvec", 0.5, count=10)
        summary = timer.summary()
        assert summary["lu"]["calls"] == 2
        assert summary["lu"]["seconds"] > 0
        assert summary["matvec"] == pytest.approx({"seconds": 0.5, "calls": 10, "share": summary["matvec"]["share"]})
        assert summary["ortho"]["calls"] == 0

    def test_records_on_error(self):
        timer = PhaseTimer()
        with pytest.raises(RuntimeError):
            with timer.phase("assembly"):
                raise RuntimeError("boom")
        assert timer.counts["assembly"] == 1


class TestStepLog:
    def test_missing_columns_are_nan(self, tmp_path):
        log = StepLog()
        log.append(step=1, t=10.0, dt=10.0)
        log.append(step=2, t=25.0, dt=15.0, sherwood=1.0)
        assert len(log) == 2
        path = log.to_csv(tmp_path / "steps.csv")
        frame = pd.read_csv(path)
        assert list(frame.columns) == STEP_COLUMNS
        assert np.isnan(frame["sherwood"].iloc[0])
        assert frame["t"].tolist() == [10.0, 25.0]

    def test_floats_round_trip(self, tmp_path):
        values = [0.1, 1 / 3, 6.2427e-9]
        path = write_frame(pd.DataFrame({"x": values}), tmp_path / "nested" / "x.csv")
        assert pd.read_csv(path)["x"].tolist() == values

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(IoError):
            write_frame(pd.DataFrame({"x": [1]}), blocker / "x.csv")


class TestReport:
    def test_save_and_load(self, tmp_path):
        data = tmp_path / "eigenvalues.csv"
        data.write_text("index\n1\n")
        rep = report(eigenvalues=[complex(1.5, 2.0), -3.0], errors=np.array([1e-9, 2e-9]))
        rep.add_file(data)
        rep.finalize(PhaseTimer())
        rep.save(tmp_path)
        loaded = load_report(tmp_path)
        assert loaded["results"]["eigenvalues"][0] == {"real": 1.5, "imag": 2.0}
        assert loaded["results"]["errors"] == [1e-9, 2e-9]
        assert loaded["manifest"] == [str(data)]
        assert "lu" in loaded["phases"]
        assert load_report(tmp_path / "report.json") == loaded

    def test_manifest_must_exist(self, tmp_path):
        rep = report()
        rep.add_file(tmp_path / "missing.vtk")
        with pytest.raises(IoError):
            rep.save(tmp_path)

    def test_missing_report(self, tmp_path):
        with pytest.raises(ConfigError):
            load_report(tmp_path)

    def test_corrupt_report(self, tmp_path):
        (tmp_path / "report.json").write_text("{not json")
        with pytest.raises(IoError):
            load_report(tmp_path)


class TestCompare:
    def test_eigenvalue_deltas(self):
        a = json.loads(json.dumps({"scenario": "a", "results": {"eigenvalues": [{"real": 2.0, "imag": 1.0}, -1.0]}}))
        b = {"scenario": "b", "results": {"eigenvalues": [2.5, -1.5, -4.0]}}
        comparison = compare_reports(a, b)
        assert comparison["scenarios"] == ["a", "b"]
        assert comparison["eigenvalues"]["delta"] == pytest.approx([0.5, -0.5])
        assert comparison["eigenvalues"]["same_sign_leading"] is True
        assert "sherwood" not in comparison

    def test_sherwood_delta(self):
        comparison = compare_reports({"results": {"sherwood": 1.2}}, {"results": {"sherwood": 1.5}})
        assert comparison["sherwood"]["delta"] == pytest.approx(0.3)
        assert "eigenvalues" not in comparison
