"""CSV/JSON series for external plotting; nothing is rendered here."""

import csv
import json
import logging
import os
from typing import Dict, List, Optional

import numpy as np

from camtomo.geometry.builder import Geometry
from camtomo.harness.experiment import ConvergenceTable
from camtomo.inversion.reconstruction import ReconstructionReport
from camtomo.slicing.slice_extractor import slice_on_cam, slice_on_X

logger = logging.getLogger(__name__)

OVERLAY_HYPERPLANES = 4


def _write_normalizer_profile(report: ReconstructionReport, path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"u{i + 1}" for i in range(report.dimension)] + ["normalizer", "h"])
        for point, value, step in zip(report.points, report.normalizers, report.singular_steps):
            writer.writerow([repr(float(c)) for c in point] + [repr(float(value)), repr(float(step))])


def _write_slice_overlay(geometry: Geometry, u: np.ndarray, resolution: int, path: str) -> None:
    """Slices of X by a few hyperplanes through x(u), tangent to the cam."""
    surface, cam = geometry.surface, geometry.cam
    incident = slice_on_cam(surface.points(u), cam)
    picks = np.linspace(0, len(incident) - 1, OVERLAY_HYPERPLANES, endpoint=False).astype(int)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["slice"] + [f"u{i + 1}" for i in range(surface.dimension)] + ["weight"])
        for k, omega in enumerate(incident.nodes[picks]):
            slice_set = slice_on_X(cam.point_at(omega), surface, resolution)
            for node, weight in zip(slice_set.nodes, slice_set.weights):
                writer.writerow([k] + [repr(float(c)) for c in node] + [repr(float(weight))])


def emit_plot_data(
    report: ReconstructionReport,
    directory: str,
    table: Optional[ConvergenceTable] = None,
    geometry: Optional[Geometry] = None,
    overlay_resolution: int = 128,
) -> Dict[str, str]:
    """Write field, normalizer profile, convergence and slice overlay series.

    Args:
        report: Reconstruction report (may have no points)
        directory: Output directory, created when missing
        table: Optional convergence table
        geometry: Needed for the slice overlay; skipped when absent
        overlay_resolution: Surface grid resolution of the overlay slices

    Returns:
        Mapping from series name to written path; also stored in ``index.json``
    """
    os.makedirs(directory, exist_ok=True)
    written: Dict[str, str] = {}

    written["field"] = os.path.join(directory, "field.csv")
    report.write_csv(written["field"])

    written["normalizer"] = os.path.join(directory, "normalizer_profile.csv")
    _write_normalizer_profile(report, written["normalizer"])

    if table is not None:
        written["convergence"] = os.path.join(directory, "convergence.csv")
        table.write_csv(written["convergence"])

    if geometry is not None and len(report.points):
        written["overlay"] = os.path.join(directory, "slice_overlay.csv")
        _write_slice_overlay(geometry, report.points[0], overlay_resolution, written["overlay"])

    files: List[str] = sorted(os.path.basename(path) for path in written.values())
    with open(os.path.join(directory, "index.json"), "w") as f:
        json.dump({"hash": report.config_hash, "files": files}, f, indent=2, sort_keys=True)
    logger.info("Wrote %d plot series to %s", len(written), directory)
    return written
