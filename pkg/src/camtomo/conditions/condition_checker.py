"""Sampling validators for the admissibility conditions (E), (I), (II) and (III).

A pass means no violation was found at the configured sampling resolution.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from camtomo.geometry.builder import Geometry
from camtomo.geometry.cam import Cam, incidence_coefficients, phi_omega_gradient
from camtomo.geometry.surface import Hypersurface
from camtomo.inversion.singular import (
    Extrapolation,
    RegularizationSchedule,
    extrapolate_to_zero,
    pairing_mass,
    regularized_pairing,
)
from camtomo.slicing.slice_extractor import incidence_sphere
from camtomo.utils.config import DEFAULT_SEED
from camtomo.utils.errors import CamtomoError, ConditionViolation, GeometryError

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
INDETERMINATE = "indeterminate"

DETERMINANT_TOL = 1e-3
QN_TOL = 1e-3
CHART_TOL = 1e-6
POLISH_THRESHOLD = 1e-2
CHECK_SLICE_RESOLUTION = 96
# nodes per circle of the Z(y) rule that sets h in q_n_check, by n
QN_RESOLUTION = {2: 512, 3: 128}
QN_OVERSAMPLING = 4
# chord and tangent distances within this fraction of the coordinate scale count as touching
E_TOL = 1e-9


@dataclass(frozen=True)
class Sampling:
    """Deterministic sampling budget shared by all validators."""

    pairs: int = 10_000
    directions: int = 64
    qn_pairs: int = 20
    incidences: int = 128
    nodes_per_incidence: int = 8
    seed: int = DEFAULT_SEED
    angle_tol: float = 1e-6

    def unit_points(self, count: int, dimension: int, stream: int = 0) -> np.ndarray:
        """Scrambled Sobol points in [0, 1)^dimension; ``stream`` decorrelates callers."""
        sampler = qmc.Sobol(d=dimension, scramble=True, seed=self.seed + stream)
        return sampler.random_base2(max(1, math.ceil(math.log2(max(count, 2)))))[:count]

    def directions_on_sphere(self, count: int, dimension: int, stream: int = 0) -> np.ndarray:
        """Unit vectors in R^dimension by Gaussian inverse-CDF normalisation."""
        if dimension == 2:
            angles = np.pi * (np.arange(count) + 0.5) / count
            return np.stack([np.cos(angles), np.sin(angles)], axis=1)
        gaussian = norm.ppf(np.clip(self.unit_points(count, dimension, stream), 1e-12, 1 - 1e-12))
        return gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True)


@dataclass
class ConditionReport:
    """Outcome of one validator."""

    condition: str
    status: str
    margin: float
    witness: Optional[Dict[str, Any]] = None
    samples: int = 0
    notes: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.status == FAIL and self.witness is None:
            raise ValueError(f"failed condition ({self.condition}) report needs a witness")

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> Dict[str, Any]:
        return {
            "condition": self.condition,
            "status": self.status,
            "margin": self.margin,
            "witness": self.witness,
            "samples": self.samples,
            "notes": list(self.notes),
        }


def _status(margin: float, partial_margin: float, tolerance: float = 0.0) -> str:
    """FAIL within ``tolerance`` of zero; INDETERMINATE when half the samples double the margin."""
    if margin <= tolerance:
        return FAIL
    if partial_margin - margin >= margin:
        return INDETERMINATE
    return PASS


def _pair_parameters(surface: Hypersurface, sampling: Sampling, count: int, stream: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pairs (u, v) in the region, from Sobol points of U x U."""
    n = surface.dimension
    unit = sampling.unit_points(count, 2 * n, stream)
    domain = surface.domain
    u = domain.lo + unit[:, :n] * (domain.hi - domain.lo)
    v = domain.lo + unit[:, n:] * (domain.hi - domain.lo)
    keep = domain.contains(u) & domain.contains(v)
    return u[keep], v[keep]


def _cam_coordinates(points: np.ndarray, cam: Cam) -> np.ndarray:
    """W = B^{-1}(x - e): the ellipsoid becomes the unit sphere; identity shift for a point cam."""
    shifted = np.asarray(points, dtype=float) - cam.center
    if cam.is_point:
        return shifted
    return np.linalg.solve(cam.frame, shifted.T).T


def _line_distances(points: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Distance from the origin to the lines p + t d."""
    unit = directions / np.linalg.norm(directions, axis=-1, keepdims=True)
    along = np.einsum("...i,...i->...", points, unit)
    return np.linalg.norm(points - along[..., None] * unit, axis=-1)


def check_E(
    surface: Hypersurface,
    cam: Cam,
    sampling: Sampling = Sampling(),
    extra_pairs: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> ConditionReport:
    """No line meeting X twice or tangent to X touches the cam.

    Distances are measured in cam coordinates, where the cam is the unit
    sphere (ellipsoid) or the point 0 (point cam); margin = min distance - 1
    (resp. min distance). A margin within E_TOL of the coordinate scale fails.
    ``extra_pairs`` = (u, v) arrays of parameter pairs tested in addition to
    the sampled ones.
    """
    n = surface.dimension
    domain = surface.domain
    radius = 0.0 if cam.is_point else 1.0
    candidates: List[Tuple[np.ndarray, str, Dict[str, Any]]] = []

    u, v = _pair_parameters(surface, sampling, sampling.pairs, stream=1)
    if extra_pairs is not None:
        u = np.concatenate([np.atleast_2d(extra_pairs[0]), u])
        v = np.concatenate([np.atleast_2d(extra_pairs[1]), v])
    boundary_count = max(16, sampling.pairs // 8)
    boundary = domain.boundary_sample(sampling.unit_points(boundary_count, n, stream=2))
    boundary_partner = domain.boundary_sample(sampling.unit_points(boundary_count, n, stream=3))
    interior = domain.sample(sampling.unit_points(boundary_count, n, stream=4))
    m = min(len(boundary), len(interior))
    first = np.concatenate([u, boundary, boundary[:m]])
    second = np.concatenate([v, boundary_partner, interior[:m]])
    kinds = np.array(["chord"] * len(u) + ["boundary-chord"] * len(boundary) + ["boundary-interior-chord"] * m)

    x = _cam_coordinates(surface.points(first), cam)
    y = _cam_coordinates(surface.points(second), cam)
    separation = np.linalg.norm(x - y, axis=1)
    valid = separation > 1e-9 * max(1.0, domain.size)
    chord_distances = np.full(len(x), np.inf)
    chord_distances[valid] = _line_distances(x[valid], y[valid] - x[valid])
    k = int(np.argmin(chord_distances))
    candidates.append(
        (
            chord_distances,
            str(kinds[k]),
            {"kind": str(kinds[k]), "u": first[k].tolist(), "v": second[k].tolist()},
        )
    )

    base = np.concatenate([domain.sample(sampling.unit_points(sampling.pairs // 16 + 1, n, stream=5)), boundary])
    directions = sampling.directions_on_sphere(sampling.directions, n, stream=6)
    tangents = np.einsum("mki,di->mdk", surface.jacobian(base), directions)
    if not cam.is_point:
        tangents = np.linalg.solve(cam.frame, tangents.reshape(-1, n + 1).T).T.reshape(tangents.shape)
    anchors = np.broadcast_to(_cam_coordinates(surface.points(base), cam)[:, None, :], tangents.shape)
    tangent_distances = _line_distances(anchors, tangents).min(axis=1)
    t = int(np.argmin(tangent_distances))
    candidates.append(
        (
            tangent_distances,
            "tangent",
            {"kind": "tangent", "u": base[t].tolist()},
        )
    )

    all_distances = np.concatenate([c[0] for c in candidates])
    margin = float(np.min(all_distances)) - radius
    half = np.concatenate([c[0][::2] for c in candidates])
    partial = float(np.min(half)) - radius
    tolerance = E_TOL * max(1.0, float(np.max(np.abs(np.concatenate([x, y])))))
    status = _status(margin, partial, tolerance)

    worst = min(candidates, key=lambda c: float(np.min(c[0])))
    witness = dict(worst[2], distance=float(np.min(worst[0])))
    samples = int(np.count_nonzero(valid)) + tangent_distances.size * directions.shape[0]
    logger.debug("check_E margin %.6f (%s)", margin, status)
    return ConditionReport("E", status, margin, witness if status != PASS else None, samples)


def _tangent_frame(omega: np.ndarray) -> np.ndarray:
    return null_space(omega[None, :])


def incidence_matrix(u: np.ndarray, omega: np.ndarray, surface: Hypersurface, cam: Cam) -> np.ndarray:
    """Row-normalised block matrix [d_xi Phi, d_xi d_tau Phi; 0, d_tau Phi] at (x(u), sigma(omega))."""
    n = surface.dimension
    jacobian = surface.jacobian(u)
    frame = _tangent_frame(omega)
    normal_matrix = cam.normal_matrix
    matrix = np.zeros((n + 1, n + 1))
    matrix[:n, 0] = jacobian.T @ (normal_matrix @ omega)
    matrix[:n, 1:] = jacobian.T @ normal_matrix @ frame
    matrix[n, 1:] = frame.T @ phi_omega_gradient(surface.points(u), cam, omega)
    row_norms = np.linalg.norm(matrix, axis=1)
    if np.any(row_norms == 0.0):
        return np.zeros_like(matrix)
    return matrix / row_norms[:, None]


def _require_off_cam(points: np.ndarray, cam: Cam) -> None:
    if cam.is_point:
        distance = np.linalg.norm(points - cam.center, axis=1)
        if np.any(distance <= 1e-9):
            raise GeometryError("a sampled point of X coincides with the point cam")
        return
    offset = np.abs(cam.q(points) - 1.0)
    if np.any(offset <= 1e-9):
        k = int(np.argmin(offset))
        raise GeometryError(f"sampled point {points[k].tolist()} of X lies on the cam surface")


def check_I(surface: Hypersurface, cam: Cam, sampling: Sampling = Sampling()) -> ConditionReport:
    """Non-degeneracy of the incidence Jacobian at sampled (x, sigma) in Z.

    Raises:
        GeometryError: A sampled point of X lies on the cam (precondition)
    """
    n = surface.dimension
    domain = surface.domain
    u_samples = domain.sample(sampling.unit_points(sampling.incidences, n, stream=7))
    _require_off_cam(surface.points(u_samples), cam)

    worst = (np.inf, None)
    determinants = []
    for u in u_samples:
        slice_set = incidence_sphere(surface.points(u), cam, CHECK_SLICE_RESOLUTION)
        picks = np.linspace(0, len(slice_set) - 1, sampling.nodes_per_incidence).astype(int)
        for omega in slice_set.nodes[picks]:
            value = abs(float(np.linalg.det(incidence_matrix(u, omega, surface, cam))))
            determinants.append(value)
            if value < worst[0]:
                worst = (value, {"u": u.tolist(), "omega": omega.tolist()})

    determinants_array = np.asarray(determinants)
    margin = float(np.min(determinants_array))
    status = PASS if margin > DETERMINANT_TOL else FAIL
    witness = dict(worst[1], det=margin) if status == FAIL else None
    notes = [f"min scaled |det| = {margin:.3e} (threshold {DETERMINANT_TOL:g})"]
    return ConditionReport("I", status, margin, witness, determinants_array.size, notes)


def _common_incidences(a_x: np.ndarray, a_y: np.ndarray, b: float, count: int = 16) -> Optional[np.ndarray]:
    """Unit omega with <a_x, omega> = <a_y, omega> = b; None when empty.

    Returns an empty array when a_x and a_y are parallel (handled by the caller).
    """
    span = np.stack([a_x, a_y], axis=1)
    gram = span.T @ span
    if abs(np.linalg.det(gram)) <= 1e-12 * np.trace(gram) ** 2:
        return np.zeros((0, a_x.size))
    center = span @ np.linalg.solve(gram, np.array([b, b]))
    remaining = 1.0 - float(center @ center)
    if remaining < 0.0:
        return None
    complement = null_space(span.T)
    if complement.shape[1] == 1:
        offsets = np.stack([complement[:, 0], -complement[:, 0]])
    else:
        angles = 2.0 * np.pi * np.arange(count) / count
        offsets = np.cos(angles)[:, None] * complement[:, 0] + np.sin(angles)[:, None] * complement[:, 1]
    return center + math.sqrt(remaining) * offsets


def conjugacy_angle(x: np.ndarray, y: np.ndarray, cam: Cam) -> Tuple[float, Optional[np.ndarray]]:
    """Smallest sine of the angle between d_sigma Phi(x) and d_sigma Phi(y) - d_sigma Phi(x).

    Zero exactly when the two sigma-differentials are parallel at a common
    incident sigma. Returns (1, None) when x and y share no incident sigma.
    """
    a_x, b = incidence_coefficients(x, cam)
    a_y, _ = incidence_coefficients(y, cam)
    omegas = _common_incidences(a_x, a_y, b)
    if omegas is None:
        return 1.0, None
    if omegas.shape[0] == 0:
        if b == 0.0:
            # x, y and the point cam are collinear: every common sigma is conjugate
            omega = null_space(a_x[None, :])[:, 0]
            return 0.0, omega
        return 1.0, None

    g_x = a_x - np.einsum("ij,j->i", omegas, a_x)[:, None] * omegas
    difference = (a_y - a_x) - np.einsum("ij,j->i", omegas, a_y - a_x)[:, None] * omegas
    norm_x = np.linalg.norm(g_x, axis=1)
    norm_d = np.linalg.norm(difference, axis=1)
    cosine = np.abs(np.einsum("ij,ij->i", g_x, difference)) / np.maximum(norm_x * norm_d, 1e-300)
    sine = np.where(norm_d <= 1e-14 * np.maximum(norm_x, 1.0), 0.0, np.sqrt(np.maximum(1.0 - cosine**2, 0.0)))
    k = int(np.argmin(sine))
    return float(sine[k]), omegas[k]


def check_conjugate(
    surface: Hypersurface,
    cam: Cam,
    sampling: Sampling = Sampling(),
    extra_pairs: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> ConditionReport:
    """Search sampled pairs x != y for a common sigma with parallel sigma-differentials.

    The worst pair is polished with Nelder-Mead when its angle is small.
    ``extra_pairs`` are tested in addition to the sampled ones.
    """
    domain = surface.domain
    u, v = _pair_parameters(surface, sampling, max(64, sampling.pairs // 4), stream=8)
    if extra_pairs is not None:
        u = np.concatenate([np.atleast_2d(extra_pairs[0]), u])
        v = np.concatenate([np.atleast_2d(extra_pairs[1]), v])
    x, y = surface.points(u), surface.points(v)
    separation = np.linalg.norm(x - y, axis=1)
    keep = separation > 1e-6 * max(1.0, domain.size)
    u, v, x, y = u[keep], v[keep], x[keep], y[keep]

    angles = np.ones(len(u))
    omegas: List[Optional[np.ndarray]] = []
    for k in range(len(u)):
        angles[k], omega = conjugacy_angle(x[k], y[k], cam)
        omegas.append(omega)
    k = int(np.argmin(angles)) if len(angles) else 0
    best = float(angles[k]) if len(angles) else 1.0
    witness: Dict[str, Any] = {"u": u[k].tolist(), "v": v[k].tolist()} if len(angles) else {}
    if len(angles) and omegas[k] is not None:
        witness["omega"] = omegas[k].tolist()
    notes = [f"angle tolerance {sampling.angle_tol:g} rad"]

    if len(angles) and best < POLISH_THRESHOLD:
        polished, pair = _polish(surface, cam, u[k], v[k])
        notes.append(f"Nelder-Mead polish: {best:.3e} -> {polished:.3e}")
        if polished < best:
            best = polished
            n = surface.dimension
            witness = {"u": pair[:n].tolist(), "v": pair[n:].tolist()}
            _, omega = conjugacy_angle(surface.points(pair[:n]), surface.points(pair[n:]), cam)
            if omega is not None:
                witness["omega"] = omega.tolist()

    margin = best - sampling.angle_tol
    status = PASS if margin > 0.0 else FAIL
    witness["sin_angle"] = best
    return ConditionReport("II", status, margin, witness if status == FAIL else None, len(angles), notes)


def _polish(surface: Hypersurface, cam: Cam, u: np.ndarray, v: np.ndarray) -> Tuple[float, np.ndarray]:
    n = surface.dimension
    domain = surface.domain
    minimal_separation = 1e-6 * max(1.0, domain.size)

    def objective(pair: np.ndarray) -> float:
        first, second = pair[:n], pair[n:]
        if not (domain.contains(first) and domain.contains(second)):
            return 1.0
        x, y = surface.points(first), surface.points(second)
        if np.linalg.norm(x - y) <= minimal_separation:
            return 1.0
        return conjugacy_angle(x, y, cam)[0]

    start = np.concatenate([u, v])
    result = minimize(
        objective, start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400}
    )
    return float(result.fun), np.asarray(result.x)


@dataclass(frozen=True)
class QnValue:
    """Normalised Re i^n Q_n(x, y) with its eps sequence."""

    value: float
    normalized: float
    extrapolation: Extrapolation
    normalized_levels: np.ndarray


def q_n_check(
    u_x: np.ndarray,
    u_y: np.ndarray,
    cam: Cam,
    surface: Hypersurface,
    schedule: Optional[RegularizationSchedule] = None,
    resolution: Optional[int] = None,
) -> QnValue:
    """Re i^n of the regularized integral of (Phi(x, .) - i0)^{-n} over Z(y).

    Normalised by the integral of |(Phi(x, .) - i eps_min)^{-n}|. The eps
    schedule is in units of h = (spacing of the ``resolution`` rule on Z(y))
    * mean |grad_omega Phi(x, .)|; the sums run on a QN_OVERSAMPLING times
    finer rule so the smallest eps is resolved far below the extrapolation
    error.

    Raises:
        ValueError: If x = y
    """
    schedule = schedule or RegularizationSchedule()
    n = surface.dimension
    resolution = resolution or QN_RESOLUTION.get(n, CHECK_SLICE_RESOLUTION)
    x, y = surface.points(np.asarray(u_x, dtype=float)), surface.points(np.asarray(u_y, dtype=float))
    if np.linalg.norm(x - y) <= 1e-12:
        raise ValueError("q_n_check needs x != y")

    a_x, b = incidence_coefficients(x, cam)
    reference = incidence_sphere(y, cam, resolution, axis=a_x)
    gradients = phi_omega_gradient(x, cam, reference.nodes)
    tangential = gradients - np.einsum("ij,ij->i", gradients, reference.nodes)[:, None] * reference.nodes
    h = reference.spacing * float(np.mean(np.linalg.norm(tangential, axis=1)))

    slice_set = incidence_sphere(y, cam, QN_OVERSAMPLING * resolution, axis=a_x)
    phi_values = slice_set.nodes @ a_x - b
    eps = schedule.epsilons(h)
    integrals = regularized_pairing(phi_values, slice_set.weights, n, eps)
    samples = np.real((1j**n) * integrals)
    scale = pairing_mass(phi_values, slice_set.weights, n, eps[-1])
    extrapolation = extrapolate_to_zero(eps, samples, scale=scale)
    return QnValue(
        value=extrapolation.value,
        normalized=abs(extrapolation.value) / scale,
        extrapolation=extrapolation,
        normalized_levels=np.abs(samples) / scale,
    )


def check_III(
    surface: Hypersurface,
    cam: Cam,
    sampling: Sampling = Sampling(),
    schedule: Optional[RegularizationSchedule] = None,
) -> ConditionReport:
    """Median over deterministic pairs of the normalised |Re i^n Q_n(x, y)|."""
    u, v = _pair_parameters(surface, sampling, 4 * sampling.qn_pairs, stream=9)
    separation = np.linalg.norm(surface.points(u) - surface.points(v), axis=1)
    keep = separation > 0.05 * surface.domain.size
    u, v = u[keep][: sampling.qn_pairs], v[keep][: sampling.qn_pairs]

    values = np.array([q_n_check(a, b, cam, surface, schedule).normalized for a, b in zip(u, v)])
    median = float(np.median(values)) if values.size else float("inf")
    status = PASS if median <= QN_TOL else FAIL
    witness = None
    if status == FAIL:
        k = int(np.argmax(values)) if values.size else 0
        witness = {"u": u[k].tolist(), "v": v[k].tolist(), "normalized": float(values[k])} if values.size else {}
    notes = [f"median normalised |Re i^n Q_n| = {median:.3e} over {values.size} pairs"]
    return ConditionReport("III", status, QN_TOL - median, witness, int(values.size), notes)


def verify_chart(surface: Hypersurface, sampling: Sampling = Sampling()) -> ConditionReport:
    """Analytic chart partials against central differences."""
    n = surface.dimension
    u = surface.domain.sample(sampling.unit_points(64, n, stream=10))
    analytic = surface.jacobian(u)
    numeric = surface.finite_difference_jacobian(u)
    scale = max(1.0, float(np.max(np.abs(analytic))))
    error = np.max(np.abs(analytic - numeric), axis=(1, 2)) / scale
    k = int(np.argmax(error))
    margin = CHART_TOL - float(error[k])
    status = PASS if margin > 0.0 else FAIL
    witness = {"u": u[k].tolist(), "error": float(error[k])} if status == FAIL else None
    return ConditionReport("chart", status, margin, witness, len(u))


@dataclass
class ValidationSummary:
    """All condition reports of one geometry."""

    reports: Dict[str, ConditionReport]
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports.values())

    def failures(self) -> List[ConditionReport]:
        return [report for report in self.reports.values() if not report.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "reports": {name: report.to_dict() for name, report in self.reports.items()},
            "notes": list(self.notes),
        }

    def table(self) -> str:
        lines = [f"{'condition':<10} {'status':<14} {'margin':>14} {'samples':>9}"]
        for name, report in self.reports.items():
            lines.append(f"{name:<10} {report.status:<14} {report.margin:>14.6e} {report.samples:>9d}")
        lines.extend(f"note: {note}" for note in self.notes)
        return "\n".join(lines)


def validate(
    geometry: Geometry,
    sampling: Sampling = Sampling(),
    schedule: Optional[RegularizationSchedule] = None,
    strict: bool = False,
) -> ValidationSummary:
    """Run every validator; flag (E)/(II) disagreement.

    Raises:
        ConditionViolation: In strict mode, for the first failed condition
    """
    surface, cam = geometry.surface, geometry.cam
    reports: Dict[str, ConditionReport] = {}
    notes: List[str] = []
    reports["chart"] = verify_chart(surface, sampling)
    reports["E"] = check_E(surface, cam, sampling)
    for name, check in (("I", check_I), ("II", check_conjugate)):
        try:
            reports[name] = check(surface, cam, sampling)
        except CamtomoError as e:
            reports[name] = ConditionReport(name, FAIL, float("-inf"), {"error": str(e)}, 0)
    try:
        reports["III"] = check_III(surface, cam, sampling, schedule)
    except CamtomoError as e:
        reports["III"] = ConditionReport("III", FAIL, float("-inf"), {"error": str(e)}, 0)

    if reports["E"].passed and not reports["II"].passed:
        notes.append("condition (E) passes but a conjugate pair was found: discretization problem")
        logger.warning(notes[-1])

    summary = ValidationSummary(reports, notes)
    if strict:
        for report in summary.failures():
            raise ConditionViolation(report.condition, f"status {report.status}, margin {report.margin:.3e}", report.witness)
    return summary
