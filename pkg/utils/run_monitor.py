"""
Run monitoring: per-phase wall-clock timers, the per-step log and the
run report persisted next to the outputs.
"""

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from config.settings import settings
from utils.exceptions import ConfigError, IoError

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

PHASES = ("init", "assembly", "linsolve", "lu", "matvec", "ortho")

STEP_COLUMNS = ["step", "t", "dt", "newton_iterations", "residual", "sherwood",
                "w_min", "w_max", "peclet", "solute_balance"]


class PhaseTimer:
    """Accumulates wall-clock seconds per named phase."""

    def __init__(self):
        self.totals: Dict[str, float] = {name: 0.0 for name in PHASES}
        self.counts: Dict[str, int] = {name: 0 for name in PHASES}
        self._started = time.perf_counter()

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] = self.totals.get(name, 0.0) + time.perf_counter() - start
            self.counts[name] = self.counts.get(name, 0) + 1

    def add(self, name: str, seconds: float, count: int = 1):
        self.totals[name] = self.totals.get(name, 0.0) + seconds
        self.counts[name] = self.counts.get(name, 0) + count

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self._started

    def summary(self) -> Dict[str, Dict[str, float]]:
        total = self.elapsed
        return {
            name: {
                "seconds": secs,
                "calls": self.counts.get(name, 0),
                "share": secs / total if total > 0 else 0.0,
            }
            for name, secs in self.totals.items()
        }


class StepLog:
    """Rows of the per-step log of a direct run."""

    def __init__(self, columns: Optional[List[str]] = None):
        self.columns = list(columns or STEP_COLUMNS)
        self.rows: List[Dict[str, Any]] = []

    def append(self, **row):
        self.rows.append({col: row.get(col, np.nan) for col in self.columns})

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_frame(self.to_frame(), path)


def write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a table as UTF-8 CSV with shortest round-trip floats."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        return path
    except OSError as e:
        logger.error(f"Error writing {path}: {e}")
        raise IoError(f"Failed to write CSV file {path}: {e}")


@dataclass
class RunReport:
    """Summary of one run, saved as report.json."""
    scenario: str
    method: str
    grid: Dict[str, int]
    rayleigh: float
    peclet: float
    results: Dict[str, Any] = field(default_factory=dict)
    phases: Dict[str, Dict[str, float]] = field(default_factory=dict)
    total_seconds: float = 0.0
    manifest: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    created_at: str = field(default_factory=lambda: datetime.now().isoformat())

    def add_file(self, path: Union[str, Path]):
        self.manifest.append(str(path))

    def finalize(self, timer: PhaseTimer):
        self.phases = timer.summary()
        self.total_seconds = timer.elapsed

    def save(self, out_dir: Union[str, Path]) -> Path:
        """Write report.json; every manifest entry must exist."""
        out_dir = Path(out_dir)
        path = out_dir / "report.json"
        missing = [f for f in self.manifest if not Path(f).exists()]
        if missing:
            raise IoError(f"Manifest lists missing files: {missing}")
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(path, "w") as fh:
                json.dump(asdict(self), fh, indent=2, default=_json_default)
            logger.info(f"Saved run report to {path}")
            return path
        except OSError as e:
            logger.error(f"Error saving report to {path}: {e}")
            raise IoError(f"Failed to save report: {e}")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"real": obj.real, "imag": obj.imag}
    return str(obj)


def load_report(path: Union[str, Path]) -> Dict[str, Any]:
    """Load a report.json, given the file or its run directory."""
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"No run report at {path}")
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error reading report {path}: {e}")
        raise IoError(f"Failed to read report {path}: {e}")


def compare_reports(a: Dict[str, Any], b: Dict[str, Any]) -> Dict[str, Any]:
    """
    Differences between two run reports.

    Returns:
        Dictionary with the Sherwood delta (when both runs have one) and the
        per-index eigenvalue deltas over the common leading eigenvalues
    """
    comparison: Dict[str, Any] = {
        "scenarios": [a.get("scenario"), b.get("scenario")],
        "methods": [a.get("method"), b.get("method")],
    }
    sh_a = a.get("results", {}).get("sherwood")
    sh_b = b.get("results", {}).get("sherwood")
    if sh_a is not None and sh_b is not None:
        comparison["sherwood"] = {"a": sh_a, "b": sh_b, "delta": sh_b - sh_a}
    eig_a = a.get("results", {}).get("eigenvalues")
    eig_b = b.get("results", {}).get("eigenvalues")
    if eig_a and eig_b:
        n = min(len(eig_a), len(eig_b))
        ra = np.array([_real(v) for v in eig_a[:n]])
        rb = np.array([_real(v) for v in eig_b[:n]])
        comparison["eigenvalues"] = {
            "a": ra.tolist(),
            "b": rb.tolist(),
            "delta": (rb - ra).tolist(),
            "same_sign_leading": bool(np.sign(ra[0]) == np.sign(rb[0])) if n else None,
        }
    return comparison


def _real(value) -> float:
    if isinstance(value, dict):
        return float(value["real"])
    return float(value)
