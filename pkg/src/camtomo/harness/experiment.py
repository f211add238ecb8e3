"""Experiment driver: round trips and convergence studies."""

import copy
import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from camtomo.conditions.condition_checker import Sampling, ValidationSummary, validate
from camtomo.geometry.builder import Geometry, build_geometry
from camtomo.harness.phantoms import Phantom, evaluation_points, make_phantom
from camtomo.inversion.reconstruction import ReconstructionReport, reconstruct_grid
from camtomo.inversion.singular import RegularizationSchedule
from camtomo.transform.cam_grid import CamGrid
from camtomo.transform.forward import project
from camtomo.transform.sinogram import Sinogram
from camtomo.utils.config import DEFAULT_SEED, SCHEMA_VERSION, Config, canonical_hash, to_builtin
from camtomo.utils.errors import CamtomoError, ConditionViolation, ConfigError, StageError
from camtomo.utils.presets import deep_update

logger = logging.getLogger(__name__)

DEFAULTS: Dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "name": "experiment",
    "geometry": {"metric": {"kind": "induced"}},
    "grids": {"surface": 256, "cam": [128, 256], "cam_slice": 192},
    "schedule": {"eps0": 8.0, "levels": 3, "ratio": 2.0},
    "phantom": {"kind": "radial_bump", "center": [0.0, 0.0], "width": 0.3, "amplitude": 1.0},
    "evaluation": {"points": 11, "margin_cells": 2},
    "sampling": {"pairs": 10000, "directions": 64, "qn_pairs": 20},
    "output": {"directory": None},
    "seed": DEFAULT_SEED,
    "workers": 1,
}

# keys that do not change results
_RUNTIME_KEYS = ("output", "workers", "name")
MIN_GRID = 4


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration (geometry, grids, schedule, phantom, outputs, seed)."""

    data: Dict[str, Any]

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ExperimentConfig":
        """Merge ``mapping`` over the defaults and check the schema.

        Raises:
            ConfigError: Unsupported schema version or missing geometry blocks
        """
        data = copy.deepcopy(DEFAULTS)
        deep_update(data, copy.deepcopy(dict(mapping)))
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"Unsupported schema_version {version} (expected {SCHEMA_VERSION})")
        geometry = data.get("geometry") or {}
        if "cam" not in geometry or "surface" not in geometry:
            raise ConfigError("experiment config needs geometry.cam and geometry.surface")
        if "phantom" in mapping:
            # a phantom block replaces the default one instead of merging into it
            data["phantom"] = copy.deepcopy(dict(mapping["phantom"]))
        return cls(data)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        """Load a YAML experiment file; ``CAMTOMO_*`` environment variables override its keys."""
        return cls.from_mapping(Config(config_file=path).as_dict())

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        deep_update(data, copy.deepcopy(dict(overrides)))
        return ExperimentConfig.from_mapping(data)

    def refined(self, level: int) -> "ExperimentConfig":
        """All grids scaled by 2**level (negative levels coarsen)."""
        factor = 2.0**level
        grids = self.grids

        def scale(value: int) -> int:
            return max(MIN_GRID, int(round(value * factor)))

        return self.with_overrides(
            {
                "grids": {
                    "surface": scale(grids["surface"]),
                    "cam": [scale(r) for r in grids["cam"]],
                    "cam_slice": scale(grids["cam_slice"]),
                }
            }
        )

    @property
    def hash(self) -> str:
        """Canonical hash of everything that influences results."""
        return canonical_hash({k: v for k, v in self.data.items() if k not in _RUNTIME_KEYS})

    @property
    def name(self) -> str:
        return str(self.data.get("name", "experiment"))

    @property
    def grids(self) -> Dict[str, Any]:
        return self.data["grids"]

    @property
    def schedule(self) -> RegularizationSchedule:
        spec = self.data["schedule"]
        return RegularizationSchedule(
            eps0=float(spec.get("eps0", 8.0)), levels=int(spec.get("levels", 3)), ratio=float(spec.get("ratio", 2.0))
        )

    @property
    def sampling(self) -> Sampling:
        spec = self.data["sampling"]
        return Sampling(
            pairs=int(spec.get("pairs", 10000)),
            directions=int(spec.get("directions", 64)),
            qn_pairs=int(spec.get("qn_pairs", 20)),
            seed=int(self.data.get("seed", DEFAULT_SEED)),
        )

    @property
    def output_directory(self) -> Optional[str]:
        return (self.data.get("output") or {}).get("directory")

    @property
    def workers(self) -> int:
        return max(1, int(self.data.get("workers", 1)))

    def build_geometry(self) -> Geometry:
        return build_geometry(self.data["geometry"])

    def build_phantom(self, geometry: Geometry) -> Phantom:
        return make_phantom(self.data["phantom"], geometry.surface, int(self.grids["surface"]))

    def cam_grid(self, dimension: int) -> CamGrid:
        return CamGrid.build(dimension, self.grids["cam"])

    def evaluation_points(self, geometry: Geometry, phantom: Phantom) -> np.ndarray:
        spec = self.data["evaluation"]
        return evaluation_points(
            phantom,
            geometry.surface,
            int(spec.get("points", 11)),
            int(spec.get("margin_cells", 2)),
            int(self.grids["surface"]),
        )


def _stage(name: str, action: Any, *args: Any, **kwargs: Any) -> Any:
    try:
        return action(*args, **kwargs)
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e)


def run_validation(cfg: ExperimentConfig, geometry: Optional[Geometry] = None) -> ValidationSummary:
    geometry = geometry or _stage("build", cfg.build_geometry)
    return _stage("validate", validate, geometry, cfg.sampling, cfg.schedule)


def run_roundtrip(cfg: ExperimentConfig, force: bool = False, check: bool = True) -> ReconstructionReport:
    """Validate, project, reconstruct and score one configuration.

    Writes ``sinogram.json``, ``report.json`` and ``field.csv`` when an output
    directory is configured.

    Args:
        cfg: Experiment configuration
        force: Continue when validation fails
        check: Run the condition validators first

    Raises:
        StageError: Naming the failing stage (build, validate, project, invert, write)
    """
    geometry = _stage("build", cfg.build_geometry)
    phantom = _stage("build", cfg.build_phantom, geometry)
    field_ = phantom.as_field()

    conditions = None
    if check:
        summary = run_validation(cfg, geometry)
        conditions = summary.to_dict()
        if not summary.passed:
            failed = summary.failures()[0]
            if not force:
                raise StageError(
                    "validate",
                    ConditionViolation(failed.condition, f"status {failed.status}", failed.witness),
                )
            logger.warning("Validation failed for condition (%s); continuing because of --force", failed.condition)

    cam_grid = cfg.cam_grid(geometry.dimension)
    sinogram = _stage(
        "project", project, field_, geometry, cam_grid, int(cfg.grids["surface"]), cfg.workers
    )
    points = cfg.evaluation_points(geometry, phantom)
    report = _stage(
        "invert",
        reconstruct_grid,
        sinogram,
        geometry,
        points,
        truth=field_,
        schedule=cfg.schedule,
        cam_slice_resolution=int(cfg.grids["cam_slice"]),
        workers=cfg.workers,
    )
    report.conditions = conditions
    report.extra.update(
        {"experiment": cfg.name, "experiment_hash": cfg.hash, "cam_step": cam_grid.step, "phantom": phantom.spec()}
    )
    if report.metrics is not None:
        logger.info(
            "Round trip %s: L-inf %.3e, L2 %.3e over %d points",
            cfg.name,
            report.metrics["linf"],
            report.metrics["l2"],
            report.metrics["support_points"],
        )

    if cfg.output_directory:
        _stage("write", write_roundtrip, cfg.output_directory, sinogram, report)
    return report


def write_roundtrip(directory: str, sinogram: Sinogram, report: ReconstructionReport) -> Dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = {
        "sinogram": os.path.join(directory, "sinogram.json"),
        "report": os.path.join(directory, "report.json"),
        "field": os.path.join(directory, "field.csv"),
    }
    sinogram.save_json(paths["sinogram"])
    report.save_json(paths["report"])
    report.write_csv(paths["field"])
    return paths


@dataclass
class ConvergenceTable:
    """Error against singular step h across refinement levels."""

    rows: List[Dict[str, Any]]
    config_hash: str
    failures: List[str] = field(default_factory=list)

    @property
    def orders(self) -> List[Optional[float]]:
        """Observed order between consecutive successful levels."""
        orders: List[Optional[float]] = []
        for coarse, fine in zip(self.rows, self.rows[1:]):
            if coarse["linf"] and fine["linf"] and coarse["h"] > fine["h"]:
                orders.append(math.log(coarse["linf"] / fine["linf"]) / math.log(coarse["h"] / fine["h"]))
            else:
                orders.append(None)
        return orders

    @property
    def observed_order(self) -> Optional[float]:
        orders = [o for o in self.orders if o is not None]
        return orders[-1] if orders else None

    def is_monotone(self, slack: float = 0.1) -> bool:
        """Errors non-increasing up to a relative ``slack``."""
        return all(fine["linf"] <= (1.0 + slack) * coarse["linf"] for coarse, fine in zip(self.rows, self.rows[1:]))

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin(
            {
                "hash": self.config_hash,
                "rows": self.rows,
                "orders": self.orders,
                "observed_order": self.observed_order,
                "monotone": self.is_monotone(),
                "failures": self.failures,
            }
        )

    def save_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["h", "linf", "l2"])
            for row in self.rows:
                writer.writerow([repr(float(row["h"])), repr(float(row["linf"])), repr(float(row["l2"]))])


def run_convergence(cfg: ExperimentConfig, levels: int = 3, force: bool = False) -> ConvergenceTable:
    """Round trips from ``levels - 1`` halvings below the configured grids up to them.

    Validation runs once on the geometry (grids do not change it).

    Raises:
        StageError: Stage "converge" when any level failed, after all levels ran
    """
    if levels < 2:
        raise ConfigError("a convergence study needs at least two levels")
    if not force:
        summary = run_validation(cfg)
        if not summary.passed:
            failed = summary.failures()[0]
            raise StageError(
                "validate", ConditionViolation(failed.condition, f"status {failed.status}", failed.witness)
            )

    rows: List[Dict[str, Any]] = []
    failures: List[str] = []
    for k in range(levels):
        level_cfg = cfg.refined(k - (levels - 1)).with_overrides({"output": {"directory": None}})
        logger.info("Convergence level %d/%d: grids %s", k + 1, levels, level_cfg.grids)
        try:
            report = run_roundtrip(level_cfg, force=True, check=False)
        except CamtomoError as e:
            failures.append(f"level {k}: {e}")
            logger.error("Convergence level %d failed: %s", k, e)
            continue
        metrics = report.metrics or {}
        rows.append(
            {
                "level": k,
                "grids": level_cfg.grids,
                "h": report.extra["cam_step"],
                "linf": metrics.get("linf", 0.0),
                "l2": metrics.get("l2", 0.0),
                "calibration": metrics.get("calibration"),
                "diverged": report.diverged,
            }
        )

    table = ConvergenceTable(rows, cfg.hash, failures)
    if failures:
        raise StageError("converge", CamtomoError("; ".join(failures)))
    if not table.is_monotone():
        logger.warning("Errors are not non-increasing across refinement levels: %s", [r["linf"] for r in rows])
    if cfg.output_directory:
        _stage("write", _write_table, cfg.output_directory, table)
    return table


def _write_table(directory: str, table: ConvergenceTable) -> None:
    os.makedirs(directory, exist_ok=True)
    table.save_json(os.path.join(directory, "convergence.json"))
    table.write_csv(os.path.join(directory, "convergence.csv"))
