"""Sinogram container and its JSON/CSV files."""

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from camtomo.transform.cam_grid import CamGrid
from camtomo.utils.config import to_builtin

logger = logging.getLogger(__name__)

SINOGRAM_VERSION = 1


@dataclass(frozen=True)
class Sinogram:
    """Sampled values of M_Phi f over a cam grid.

    ``meta`` holds n, cam and surface specs, grid resolutions, the geometry
    hash and the file format version.
    """

    grid: CamGrid
    values: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise ValueError(f"sinogram has {values.size} values for {len(self.grid)} cam nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError("sinogram values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    @property
    def config_hash(self) -> str:
        return str(self.meta.get("hash", ""))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "meta": to_builtin(self.meta),
            "nodes": self.grid.nodes.tolist(),
            "weights": self.grid.weights.tolist(),
            "values": self.values.tolist(),
        }

    def save_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
        logger.info("Wrote sinogram with %d values to %s", len(self.grid), path)

    @classmethod
    def load_json(cls, path: str) -> "Sinogram":
        """Read a sinogram file.

        Raises:
            ValueError: If the file is not a sinogram container
        """
        with open(path, "r") as f:
            data = json.load(f)
        try:
            meta = data["meta"]
            version = meta.get("version")
            if version != SINOGRAM_VERSION:
                raise ValueError(f"unsupported sinogram version: {version}")
            grid = CamGrid(
                dimension=int(meta["n"]),
                resolution=tuple(meta["grids"]["cam"]),
                nodes=np.asarray(data["nodes"], dtype=float),
                weights=np.asarray(data["weights"], dtype=float),
                step=float(meta["grids"]["cam_step"]),
            )
            return cls(grid=grid, values=np.asarray(data["values"], dtype=float), meta=meta)
        except (KeyError, TypeError) as e:
            raise ValueError(f"{path} is not a sinogram file: missing {e}")

    def export_csv(self, path: str) -> None:
        """One row per cam node: omega components, weight, value."""
        n = self.grid.dimension
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([f"w{i + 1}" for i in range(n + 1)] + ["weight", "value"])
            for node, weight, value in zip(self.grid.nodes, self.grid.weights, self.values):
                writer.writerow([repr(float(c)) for c in node] + [repr(float(weight)), repr(float(value))])
