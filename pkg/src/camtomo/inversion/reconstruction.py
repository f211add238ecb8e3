"""Pointwise inversion of M_Phi by the even/odd reconstruction formulas."""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import gamma

from camtomo.geometry.builder import Geometry
from camtomo.geometry.cam import Cam, grad_x_phi_cotangent_norm, phi_omega_gradient
from camtomo.geometry.surface import Hypersurface
from camtomo.inversion.singular import Extrapolation, RegularizationSchedule, delta_pairing, finite_part
from camtomo.slicing.slice_extractor import SliceSet, incidence_sphere
from camtomo.transform.forward import ScalarField
from camtomo.transform.sinogram import Sinogram
from camtomo.utils.config import to_builtin
from camtomo.utils.errors import ConditionViolation, GeometryError, GeometryMismatchError

logger = logging.getLogger(__name__)

# j in the reconstruction constants
J_CONSTANT = 2j * math.pi
CALIBRATION_TOLERANCE = 0.02
REPORT_VERSION = 1


def sphere_area(dimension: int) -> float:
    """|S^dimension| = 2 pi^{(d+1)/2} / Gamma((d+1)/2)."""
    return float(2.0 * math.pi ** ((dimension + 1) / 2.0) / gamma((dimension + 1) / 2.0))


def inversion_constant(n: int) -> float:
    """Real constant in front of the limit: (n-1)!/j^n (even n), 1/(2 j^{n-1}) (odd n), j = 2 pi i."""
    if n % 2 == 0:
        return math.factorial(n - 1) / (J_CONSTANT**n).real
    return 1.0 / (2.0 * (J_CONSTANT ** (n - 1)).real)


@dataclass(frozen=True)
class IncidenceData:
    """Z(x) on the cam together with the normalizer and singular-layer step."""

    slice_set: SliceSet
    normalizer: float
    singular_step: float


def incidence_data(
    u: np.ndarray, cam: Cam, surface: Hypersurface, resolution: int = 192, cam_step: float = 0.0
) -> IncidenceData:
    """Slice Z(x(u)), Delta_n(x) and h(x) = cam_step * mean |grad_omega Phi| over Z(x)."""
    u = np.asarray(u, dtype=float)
    x = surface.points(u)
    n = surface.dimension
    slice_set = incidence_sphere(x, cam, resolution)
    points = cam.points(slice_set.nodes)

    norms = grad_x_phi_cotangent_norm(u, surface, cam, points)
    if np.any(norms <= 1e-12):
        index = int(np.argmin(norms))
        raise ConditionViolation(
            "E",
            "a hyperplane through x tangent to the cam is tangent to X at x",
            witness={"u": u.tolist(), "omega": slice_set.nodes[index].tolist()},
        )
    normalizer = slice_set.integrate(norms ** (-n)) / sphere_area(n - 1)

    gradients = phi_omega_gradient(x, cam, slice_set.nodes)
    tangential = gradients - np.einsum("ij,ij->i", gradients, slice_set.nodes)[:, None] * slice_set.nodes
    sizes = slice_set.element_sizes
    mean_gradient = float(np.sum(sizes * np.linalg.norm(tangential, axis=1)) / np.sum(sizes))
    return IncidenceData(slice_set, float(normalizer), cam_step * mean_gradient)


def normalizer(u: np.ndarray, cam: Cam, surface: Hypersurface, resolution: int = 192) -> float:
    """D_n(x) = (1/|S^{n-1}|) * Leray integral over Z(x) of |grad_x Phi|_g^{-n}.

    Args:
        u: Surface parameter of x
        cam: The cam
        surface: The hypersurface X with its metric
        resolution: Nodes per circle of the rule on Z(x)

    Raises:
        ConditionViolation: On a vanishing gradient
        GeometryError: x on or inside the cam
    """
    return incidence_data(u, cam, surface, resolution).normalizer


@dataclass(frozen=True)
class PointReconstruction:
    value: float
    extrapolation: Extrapolation
    normalizer: float
    singular_step: float


def reconstruct(
    sinogram: Sinogram,
    u: np.ndarray,
    geometry: Geometry,
    schedule: Optional[RegularizationSchedule] = None,
    cam_slice_resolution: int = 192,
) -> PointReconstruction:
    """f(x(u)) from the sinogram by the parity-dispatched inversion formula.

    even n: f = (n-1)! / (j^n D_n) * finite part of integral M f dSigma / Phi^n
    odd n:  f = 1 / (2 j^{n-1} D_n) * integral delta^{(n-1)}(Phi) M f dSigma
    with j = 2 pi i.

    Raises:
        GeometryMismatchError: Sinogram produced for another geometry
        GeometryError: u outside the chart domain
    """
    if sinogram.config_hash != geometry.config_hash:
        raise GeometryMismatchError(
            f"sinogram geometry {sinogram.config_hash[:12]} does not match {geometry.config_hash[:12]}"
        )
    surface = geometry.surface
    u = np.asarray(u, dtype=float)
    if not surface.domain.contains(u):
        raise GeometryError(f"evaluation point u={u.tolist()} lies outside the chart domain")
    schedule = schedule or RegularizationSchedule()
    n = surface.dimension
    x = surface.points(u)

    incidence = incidence_data(u, geometry.cam, surface, cam_slice_resolution, sinogram.grid.step)
    if n % 2 == 0:
        limit = finite_part(sinogram, x, geometry.cam, n, schedule, incidence.singular_step)
    else:
        limit = delta_pairing(sinogram, x, geometry.cam, n, schedule, incidence.singular_step)
    value = inversion_constant(n) * limit.value / incidence.normalizer
    return PointReconstruction(float(value), limit, incidence.normalizer, incidence.singular_step)


@dataclass
class ReconstructionReport:
    """Reconstructed field at evaluation points with diagnostics."""

    points: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    diverging: np.ndarray
    normalizers: np.ndarray
    singular_steps: np.ndarray
    config_hash: str
    dimension: int
    schedule: Dict[str, Any]
    truth: Optional[np.ndarray] = None
    metrics: Optional[Dict[str, Any]] = None
    conditions: Optional[Dict[str, Any]] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return bool(np.any(self.diverging))

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin(
            {
                "version": REPORT_VERSION,
                "hash": self.config_hash,
                "n": self.dimension,
                "schedule": self.schedule,
                "metrics": self.metrics,
                "conditions": self.conditions,
                "diverged": self.diverged,
                "points": [
                    {
                        "u": point,
                        "value": value,
                        "residual": residual,
                        "diverging": bool(flag),
                        "normalizer": norm,
                        "h": step,
                    }
                    for point, value, residual, flag, norm, step in zip(
                        self.points,
                        self.values,
                        self.residuals,
                        self.diverging,
                        self.normalizers,
                        self.singular_steps,
                    )
                ],
                "extra": self.extra,
            }
        )

    def save_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        logger.info("Wrote reconstruction report to %s", path)

    def write_csv(self, path: str) -> None:
        """Field dump: u1..un, f_rec[, f_true, abs_err]."""
        width = self.points.shape[1] if self.points.ndim == 2 else self.dimension
        header = [f"u{i + 1}" for i in range(width)] + ["f_rec"]
        if self.truth is not None:
            header += ["f_true", "abs_err"]
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for k, point in enumerate(self.points):
                row = [repr(float(c)) for c in point] + [repr(float(self.values[k]))]
                if self.truth is not None:
                    row += [repr(float(self.truth[k])), repr(float(abs(self.values[k] - self.truth[k])))]
                writer.writerow(row)


def error_metrics(values: np.ndarray, truth: np.ndarray, support: np.ndarray, dimension: int) -> Dict[str, Any]:
    """Relative L-infinity and L2 errors over the support plus the calibration constant.

    The calibration c = sum(rec * f) / sum(f^2); a reconstruction off by c
    corresponds to replacing j by j * c^(1/n).
    """
    if not np.any(support):
        support = np.ones_like(truth, dtype=bool)
    rec, ref = values[support], truth[support]
    error = rec - ref
    peak = float(np.max(np.abs(ref)))
    energy = float(np.sum(ref * ref))
    metrics: Dict[str, Any] = {
        "linf": float(np.max(np.abs(error))) / peak if peak > 0 else float(np.max(np.abs(error))),
        "l2": float(np.sqrt(np.sum(error * error) / energy)) if energy > 0 else float(np.sqrt(np.sum(error * error))),
        "support_points": int(np.count_nonzero(support)),
        "calibration": None,
        "implied_j_factor": None,
    }
    if energy > 0:
        calibration = float(np.sum(rec * ref) / energy)
        metrics["calibration"] = calibration
        if calibration > 0:
            metrics["implied_j_factor"] = calibration ** (1.0 / dimension)
        if abs(calibration - 1.0) > CALIBRATION_TOLERANCE:
            logger.warning(
                "Reconstruction is off by a uniform factor %.4f; the constant j would have to be scaled by %.4f",
                calibration,
                metrics["implied_j_factor"] or float("nan"),
            )
    return metrics


def reconstruct_grid(
    sinogram: Sinogram,
    geometry: Geometry,
    points: np.ndarray,
    truth: Optional[ScalarField] = None,
    schedule: Optional[RegularizationSchedule] = None,
    cam_slice_resolution: int = 192,
    workers: int = 1,
) -> ReconstructionReport:
    """Reconstruct at every evaluation point; metrics when ``truth`` is given."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    schedule = schedule or RegularizationSchedule()

    def evaluate(k: int) -> PointReconstruction:
        return reconstruct(sinogram, points[k], geometry, schedule, cam_slice_resolution)

    logger.info("Reconstructing at %d points", len(points))
    indices = range(len(points))
    results: List[PointReconstruction]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(evaluate, indices))
    else:
        results = [evaluate(k) for k in indices]

    report = ReconstructionReport(
        points=points,
        values=np.array([r.value for r in results]),
        residuals=np.array([r.extrapolation.residual for r in results]),
        diverging=np.array([r.extrapolation.diverging for r in results], dtype=bool),
        normalizers=np.array([r.normalizer for r in results]),
        singular_steps=np.array([r.singular_step for r in results]),
        config_hash=geometry.config_hash,
        dimension=geometry.dimension,
        schedule=schedule.spec(),
    )
    if truth is not None:
        report.truth = truth(points)
        report.metrics = error_metrics(
            report.values, report.truth, _support_mask(truth, points), geometry.dimension
        )
    if report.diverged:
        logger.warning("%d evaluation point(s) flagged eps-extrapolation divergence", int(np.sum(report.diverging)))
    return report


def _support_mask(truth: ScalarField, points: np.ndarray) -> np.ndarray:
    if truth.is_zero:
        return np.zeros(len(points), dtype=bool)
    return np.all((points >= truth.support_lo) & (points <= truth.support_hi), axis=-1)
