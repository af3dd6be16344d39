"""
Scenario definition: geometry, material parameters, boundary conditions and
run controls, loaded from the TOML catalog.
"""

import copy
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # Python 3.10: tomli is the backport of tomllib
    import tomli as tomllib

from config.settings import settings
from utils.cache_manager import cached
from utils.exceptions import ConfigError, MeshError
from utils.mesh import (
    BoundaryConditions,
    BoundaryRule,
    BoundarySpec,
    Fracture,
    MixedDimMesh,
    build_cartesian_mdg,
)

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

SECONDS_PER_YEAR = 365.25 * 86400.0

INITIAL_CONDITIONS = ("zero-solute", "diffusive-steady", "diffusive-steady+perturbation")


@dataclass(frozen=True)
class MaterialParams:
    """Physical parameters (SI units).

    ``k_f`` and ``b`` are the defaults for fractures that do not set their own
    permeability and aperture.
    """
    k: float
    phi: float
    mu: float
    rho0: float
    alpha: float
    omega_max: float
    g: float
    D: float
    k_f: float = 1e-10
    b: float = 1e-4

    def __post_init__(self):
        for name in ("k", "phi", "mu", "rho0", "D", "k_f", "b"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"Parameter {name} must be positive, got {getattr(self, name)}")
        if self.alpha < 0:
            raise ConfigError(f"Parameter alpha must be non-negative, got {self.alpha}")
        if self.g < 0:
            raise ConfigError(f"Parameter g must be non-negative, got {self.g}")
        if not 0 < self.omega_max <= 1:
            raise ConfigError(f"Parameter omega_max must lie in (0, 1], got {self.omega_max}")

    @property
    def mobility(self) -> float:
        """k / (phi mu) of the bulk."""
        return self.k / (self.phi * self.mu)

    @property
    def buoyancy(self) -> float:
        """rho0 alpha g, the density-law factor multiplying omega."""
        return self.rho0 * self.alpha * self.g


@dataclass(frozen=True)
class RunControls:
    """Direct-method controls; times in seconds."""
    dt0: Optional[float] = None
    t_end: Optional[float] = None
    steady: bool = True
    fixed_dt: bool = False
    snapshots: Tuple[float, ...] = ()
    newton_tol: float = settings.NEWTON_TOL
    newton_max_iter: int = settings.NEWTON_MAX_ITER
    max_steps: int = settings.MAX_STEPS
    seed: int = settings.SEED
    perturbation: float = settings.PERTURBATION_AMPLITUDE


@dataclass(frozen=True)
class EigControls:
    """Eigenvalue-method controls."""
    k: int = settings.EIG_K
    tol: float = settings.EIG_TOL
    m: Optional[int] = None
    max_matvecs: int = settings.EIG_MAX_MATVECS
    seed: int = settings.SEED

    @property
    def basis_size(self) -> int:
        return self.m if self.m is not None else max(settings.EIG_BASIS_MIN, 4 * self.k)


@dataclass(frozen=True)
class Scenario:
    """Full input record of a simulation."""
    name: str
    extents: Tuple[float, ...]
    resolution: Tuple[int, ...]
    params: MaterialParams
    bc: BoundaryConditions
    fractures: Tuple[Fracture, ...] = ()
    initial: str = "diffusive-steady+perturbation"
    run: RunControls = RunControls()
    eig: EigControls = EigControls()
    inflow_side: Optional[str] = "top"
    description: str = ""
    provenance: str = "exact"
    reference: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)
    geometry: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.initial not in INITIAL_CONDITIONS:
            raise ConfigError(
                f"Scenario {self.name}: unknown initial condition '{self.initial}', "
                f"expected one of {INITIAL_CONDITIONS}"
            )
        if len(self.extents) != len(self.resolution):
            raise ConfigError(f"Scenario {self.name}: extents and resolution differ in length")

    @property
    def ambient_dim(self) -> int:
        return len(self.extents)

    @property
    def height(self) -> float:
        return float(self.extents[-1])

    @property
    def diffusive_time(self) -> float:
        """T_diff = H^2 / D."""
        return self.height ** 2 / self.params.D

    def build_mesh(self) -> MixedDimMesh:
        return build_cartesian_mdg(self.extents, self.resolution, self.fractures)

    def with_resolution(self, resolution) -> "Scenario":
        return replace(self, resolution=tuple(int(r) for r in resolution))

    def with_params(self, **changes) -> "Scenario":
        return replace(self, params=replace(self.params, **changes))

    def with_apertures(self, aperture: float, cubic_law: bool = True) -> "Scenario":
        """Set every fracture aperture, optionally updating k_f = b^2/12."""
        fractures = tuple(
            replace(f, aperture=aperture,
                    permeability=aperture ** 2 / 12.0 if cubic_law else f.permeability)
            for f in self.fractures
        )
        return replace(self, fractures=fractures)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def fingerprint(self) -> str:
        """Stable hash of the scenario content."""
        payload = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], val)
        else:
            merged[key] = copy.deepcopy(val)
    return merged


def _resolve_value(raw, params: MaterialParams) -> float:
    if isinstance(raw, str):
        if raw == "omega_max":
            return params.omega_max
        raise ConfigError(f"Unknown symbolic boundary value '{raw}'")
    return float(raw)


def _boundary_spec(raw: Dict[str, Any], params: MaterialParams, equation: str) -> BoundarySpec:
    def rule(entry: Dict[str, Any], default: bool = False) -> BoundaryRule:
        if "type" not in entry:
            raise ConfigError(f"{equation} boundary rule is missing 'type': {entry}")
        ranges = tuple((axis, float(lo), float(hi)) for axis, (lo, hi) in entry.get("range", {}).items())
        return BoundaryRule(
            side=entry.get("side", "*" if default else ""),
            kind=entry["type"],
            value=_resolve_value(entry.get("value", 0.0), params),
            ranges=ranges,
        )

    rules = tuple(rule(entry) for entry in raw.get("rules", []))
    default = rule(raw["default"], default=True) if "default" in raw else None
    return BoundarySpec(rules=rules, default=default)


def _time(raw, unit: str) -> Optional[float]:
    if raw is None:
        return None
    scale = SECONDS_PER_YEAR if unit == "yr" else 1.0
    return float(raw) * scale


def scenario_from_dict(data: Dict[str, Any]) -> Scenario:
    """
    Build a Scenario from a parsed (and inheritance-resolved) TOML document.

    Raises:
        ConfigError: missing sections or invalid values
    """
    try:
        name = data["name"]
        domain = data["domain"]
        params = MaterialParams(**{k: float(v) for k, v in data["params"].items()})
        fractures = []
        for i, entry in enumerate(data.get("fractures", [])):
            b = float(entry.get("aperture", params.b))
            k_f = entry.get("permeability", params.k_f)
            k_f = b ** 2 / 12.0 if k_f == "cubic" else float(k_f)
            fractures.append(Fracture(
                points=tuple(tuple(float(c) for c in p) for p in entry["points"]),
                aperture=b,
                permeability=k_f,
                name=entry.get("name", f"f{i}"),
            ))
        bc_raw = data.get("bc", {})
        bc = BoundaryConditions(
            flow=_boundary_spec(bc_raw.get("flow", {}), params, "flow"),
            transport=_boundary_spec(bc_raw.get("transport", {}), params, "transport"),
        )
        run_raw = dict(data.get("run", {}))
        unit = run_raw.pop("time_unit", "s")
        run = RunControls(
            dt0=_time(run_raw.get("dt0"), unit),
            t_end=_time(run_raw.get("t_end"), unit),
            steady=bool(run_raw.get("steady", run_raw.get("t_end") is None)),
            fixed_dt=bool(run_raw.get("fixed_dt", False)),
            snapshots=tuple(_time(t, unit) for t in run_raw.get("snapshots", [])),
            newton_tol=float(run_raw.get("newton_tol", settings.NEWTON_TOL)),
            newton_max_iter=int(run_raw.get("newton_max_iter", settings.NEWTON_MAX_ITER)),
            max_steps=int(run_raw.get("max_steps", settings.MAX_STEPS)),
            seed=int(run_raw.get("seed", settings.SEED)),
            perturbation=float(run_raw.get("perturbation", settings.PERTURBATION_AMPLITUDE)),
        )
        eig_raw = data.get("eig", {})
        eig = EigControls(
            k=int(eig_raw.get("k", settings.EIG_K)),
            tol=float(eig_raw.get("tol", settings.EIG_TOL)),
            m=int(eig_raw["m"]) if "m" in eig_raw else None,
            max_matvecs=int(eig_raw.get("max_matvecs", settings.EIG_MAX_MATVECS)),
            seed=int(eig_raw.get("seed", settings.SEED)),
        )
        return Scenario(
            name=name,
            extents=tuple(float(e) for e in domain["extents"]),
            resolution=tuple(int(r) for r in domain["resolution"]),
            params=params,
            bc=bc,
            fractures=tuple(fractures),
            initial=data.get("initial", {}).get("kind", "diffusive-steady+perturbation"),
            run=run,
            eig=eig,
            inflow_side=data.get("inflow_side", "top") or None,
            description=data.get("description", ""),
            provenance=data.get("provenance", "exact"),
            reference=dict(data.get("reference", {})),
            geometry=dict(data.get("geometry", {})),
        )
    except KeyError as e:
        logger.error(f"Scenario {data.get('name', '?')} is missing {e}")
        raise ConfigError(f"Failed to read scenario {data.get('name', '?')}: missing {e}")
    except (TypeError, ValueError) as e:
        logger.error(f"Scenario {data.get('name', '?')} has invalid values: {e}")
        raise ConfigError(f"Failed to read scenario {data.get('name', '?')}: {e}")


def _read_toml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        logger.error(f"Invalid TOML in {path}: {e}")
        raise ConfigError(f"Failed to parse {path}: {e}")
    except OSError as e:
        logger.error(f"Cannot read {path}: {e}")
        raise ConfigError(f"Failed to read {path}: {e}")


def _resolve_document(path: Path, directory: Path, seen: Tuple[str, ...] = ()) -> Dict[str, Any]:
    data = _read_toml(path)
    parent = data.pop("extends", None)
    if parent is None:
        return data
    if parent in seen:
        raise ConfigError(f"Circular 'extends' chain through {parent}")
    base = _resolve_document(directory / f"{parent}.toml", directory, seen + (parent,))
    base.pop("abstract", None)
    base.pop("name", None)
    merged = _merge(base, data)
    if "fractures" not in data and "fractures" in base:
        merged["fractures"] = copy.deepcopy(base["fractures"])
    return merged


def load_scenario(name_or_path: Union[str, Path], directory: Optional[Path] = None) -> Scenario:
    """
    Load a scenario by catalog name or file path.

    Args:
        name_or_path: catalog name (e.g. ``hrl-D11``) or path to a TOML file
        directory: catalog directory (defaults to settings.SCENARIO_DIR)

    Raises:
        ConfigError: unknown name, unreadable file or invalid content
    """
    directory = Path(directory) if directory is not None else settings.SCENARIO_DIR
    path = Path(name_or_path)
    if path.suffix != ".toml":
        path = directory / f"{name_or_path}.toml"
    if not path.exists():
        raise ConfigError(f"Unknown scenario '{name_or_path}' (looked for {path})")
    data = _resolve_document(path, path.parent)
    if data.get("abstract"):
        raise ConfigError(f"Scenario '{name_or_path}' is an abstract base")
    data.setdefault("name", path.stem)
    return scenario_from_dict(data)


@cached(ttl=settings.CACHE_TTL, key_prefix="catalog")
def list_catalog(directory: Optional[str] = None) -> List[Dict[str, str]]:
    """Names, descriptions and provenance of the concrete catalog entries."""
    root = Path(directory) if directory is not None else settings.SCENARIO_DIR
    entries = []
    for path in sorted(root.glob("*.toml")):
        try:
            data = _resolve_document(path, root)
        except ConfigError as e:
            logger.warning(f"Skipping catalog entry {path.name}: {e}")
            continue
        if data.get("abstract"):
            continue
        entries.append({
            "name": data.get("name", path.stem),
            "description": data.get("description", ""),
            "provenance": data.get("provenance", "exact"),
        })
    return entries


def coarse_resolution(scenario: Scenario, ratio: float) -> Tuple[int, ...]:
    """
    Coarser resolution with about ``ratio`` times fewer cells on which the
    fractures still conform.

    Raises:
        ConfigError: if no conforming coarser grid exists
    """
    n = scenario.ambient_dim
    target = [max(2, int(round(r / ratio ** (1.0 / n)))) for r in scenario.resolution]
    candidates = sorted(
        {tuple(max(2, t - s) for t in target) for s in range(0, max(target))}
        | {tuple(max(2, int(round(r / s))) for r in scenario.resolution) for s in (1.5, 2.0)},
        key=lambda res: abs(np.prod(scenario.resolution) / np.prod(res) - ratio),
    )
    for res in candidates:
        if np.prod(res) >= np.prod(scenario.resolution):
            continue
        try:
            build_cartesian_mdg(scenario.extents, res, scenario.fractures)
            return tuple(int(r) for r in res)
        except MeshError:
            continue
    raise ConfigError(f"No conforming coarse grid found for scenario {scenario.name}")
