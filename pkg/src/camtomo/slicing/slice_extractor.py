"""Level-set extraction with Gelfand-Leray quadrature weights.

Slices Z(sigma) on the hypersurface are extracted in parameter space u, slices
Z(x) on the cam in a stereographic chart of the parameter sphere. Both use
marching squares (n=2) or marching cubes (n=3); element midpoints are pulled
onto the exact level set by Newton steps along the analytic gradient.

Z(x) is also a round sphere in omega, so ``incidence_sphere`` builds it in
closed form with a product Gauss rule; the singular integrals use that rule.
"""

import csv
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.special import roots_legendre
from skimage import measure

from camtomo.geometry.cam import Cam, CamPoint, incidence_coefficients
from camtomo.geometry.surface import Hypersurface
from camtomo.utils.errors import ConditionViolation, GeometryError, SliceError

logger = logging.getLogger(__name__)

ON_X = "on-X"
ON_SIGMA = "on-Sigma"

NODE_TOL = 1e-10
NEWTON_STEPS = 3
MAX_NEWTON_STEPS = 8
CAM_CHART_MARGIN = 1.5

LevelFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SliceSet:
    """Quadrature nodes on a level set with their Leray weights.

    ``nodes`` are parameter points: u in U for slices on X, omega on S^n for
    slices on the cam. ``weights = element_sizes * leray_densities``.
    ``spacing`` is the largest element diameter (in u, or on S^n for cam slices).
    """

    ambient: str
    nodes: np.ndarray
    element_sizes: np.ndarray
    leray_densities: np.ndarray
    source: np.ndarray
    residual: float = 0.0
    touches_boundary: bool = False
    spacing: float = 0.0

    @classmethod
    def empty(cls, ambient: str, source: np.ndarray, width: int) -> "SliceSet":
        return cls(
            ambient=ambient,
            nodes=np.zeros((0, width)),
            element_sizes=np.zeros(0),
            leray_densities=np.zeros(0),
            source=np.asarray(source, dtype=float),
        )

    def __len__(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    @property
    def weights(self) -> np.ndarray:
        return self.element_sizes * self.leray_densities

    @property
    def mass(self) -> float:
        """Leray integral of the constant 1."""
        return float(np.sum(self.weights))

    def integrate(self, values: np.ndarray) -> float:
        """Leray quadrature of nodal values (midpoint rule per element)."""
        if self.is_empty:
            return 0.0
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def write_csv(self, path: str) -> None:
        """Dump nodes, weights and Leray densities."""
        width = self.nodes.shape[1]
        prefix = "u" if self.ambient == ON_X else "w"
        header = [f"{prefix}{i + 1}" for i in range(width)] + ["weight", "leray_density"]
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for node, weight, density in zip(self.nodes, self.weights, self.leray_densities):
                writer.writerow([repr(float(c)) for c in node] + [repr(float(weight)), repr(float(density))])


class SurfaceGrid:
    """Chart evaluations on a uniform tensor grid, reused across cam points.

    The grid spacing is that of ``resolution`` cells over the full domain;
    ``lo``/``hi`` restrict it to a sub-box (clipped to the domain rectangle).
    """

    def __init__(
        self,
        surface: Hypersurface,
        resolution: int,
        lo: Optional[np.ndarray] = None,
        hi: Optional[np.ndarray] = None,
    ):
        domain = surface.domain
        self.surface = surface
        self.resolution = resolution
        self.step = (domain.hi - domain.lo) / resolution
        lo = domain.lo if lo is None else np.maximum(np.asarray(lo, dtype=float), domain.lo)
        hi = domain.hi if hi is None else np.minimum(np.asarray(hi, dtype=float), domain.hi)
        if np.any(hi <= lo):
            raise SliceError("surface grid box is empty")
        counts = np.maximum(2, np.ceil((hi - lo) / self.step - 1e-9).astype(int))
        self.lo = lo
        self.step = (hi - lo) / counts
        self.axes = [np.linspace(lo[i], hi[i], counts[i] + 1) for i in range(surface.dimension)]
        mesh = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)
        self.points = surface.points(mesh)

    def level_values(self, p: CamPoint) -> np.ndarray:
        """phi(x(u), sigma) on the grid."""
        return np.einsum("...i,i->...", self.points - p.anchor, p.normal)


def _tensor_contours(
    values: np.ndarray, lo: np.ndarray, step: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, bool, int]:
    """Element midpoints and sizes of the zero set of gridded values.

    Returns:
        Tuple of (midpoints (m, n), sizes (m,), whether any piece is open, piece count)
    """
    if np.min(values) > 0.0 or np.max(values) < 0.0:
        return np.zeros((0, values.ndim)), np.zeros(0), False, 0

    if values.ndim == 2:
        midpoints: List[np.ndarray] = []
        sizes: List[np.ndarray] = []
        is_open = False
        contours = measure.find_contours(values, 0.0)
        for contour in contours:
            points = lo + contour * step
            if not np.allclose(contour[0], contour[-1]):
                is_open = True
            segments = np.diff(points, axis=0)
            lengths = np.linalg.norm(segments, axis=1)
            keep = lengths > 0.0
            midpoints.append(((points[:-1] + points[1:]) / 2.0)[keep])
            sizes.append(lengths[keep])
        if not midpoints:
            return np.zeros((0, 2)), np.zeros(0), False, 0
        return np.concatenate(midpoints), np.concatenate(sizes), is_open, len(contours)

    if values.ndim == 3:
        try:
            vertices, faces, _, _ = measure.marching_cubes(
                values, level=0.0, spacing=tuple(step), allow_degenerate=False
            )
        except (ValueError, RuntimeError):
            return np.zeros((0, 3)), np.zeros(0), False, 0
        vertices = vertices + lo
        triangles = vertices[faces]
        areas = 0.5 * np.linalg.norm(
            np.cross(triangles[:, 1] - triangles[:, 0], triangles[:, 2] - triangles[:, 0]), axis=1
        )
        keep = areas > 0.0
        is_open = not _is_closed_mesh(faces[keep])
        return triangles.mean(axis=1)[keep], areas[keep], is_open, 1

    raise SliceError(f"level-set extraction supports n = 2, 3 (got n = {values.ndim})")


def _is_closed_mesh(faces: np.ndarray) -> bool:
    """Every edge borders exactly two triangles and V - E + F = 2."""
    if faces.size == 0:
        return False
    edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    unique_edges, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts != 2):
        return False
    vertex_count = np.unique(faces).size
    euler = vertex_count - unique_edges.shape[0] + faces.shape[0]
    return bool(euler == 2)


def _newton_project(
    nodes: np.ndarray,
    level: LevelFunction,
    gradient: LevelFunction,
    tolerance: float,
    condition: str,
    context: Dict[str, Any],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project nodes onto {level = 0} along the gradient.

    Returns:
        Tuple of (projected nodes, gradients there, residuals)

    Raises:
        ConditionViolation: If the gradient vanishes at a node
    """
    nodes = nodes.copy()
    for iteration in range(MAX_NEWTON_STEPS):
        values = level(nodes)
        grads = gradient(nodes)
        squared = np.einsum("ij,ij->i", grads, grads)
        if np.any(squared <= 1e-24):
            index = int(np.argmin(squared))
            raise ConditionViolation(
                condition,
                "level-set gradient vanishes on the slice",
                witness=dict(context, node=nodes[index].tolist()),
            )
        if iteration >= NEWTON_STEPS and np.max(np.abs(values)) <= tolerance:
            break
        nodes -= (values / squared)[:, None] * grads
    values = level(nodes)
    return nodes, gradient(nodes), np.abs(values)


def slice_on_X(
    p: CamPoint,
    surface: Hypersurface,
    resolution: int = 256,
    grid: Optional[SurfaceGrid] = None,
    warn_boundary: bool = True,
) -> SliceSet:
    """Slice Z(sigma) = {u : phi(x(u), sigma) = 0} with weights sqrt(det g)/|grad phi| ds.

    Args:
        p: Single cam point
        surface: The hypersurface X
        resolution: Cells per axis of the parameter grid (ignored when ``grid`` given)
        grid: Precomputed grid, possibly restricted to a sub-box
        warn_boundary: Log a warning when the slice touches the chart boundary;
            batch callers switch it off and report ``touches_boundary`` themselves

    Returns:
        SliceSet on X; empty when the hyperplane misses the grid

    Raises:
        ConditionViolation: Vanishing gradient at a node (condition (E) fails)
        SliceError: Node residual above tolerance
    """
    grid = grid or SurfaceGrid(surface, resolution)
    values = grid.level_values(p)
    source = p.omega
    midpoints, sizes, _, _ = _tensor_contours(values, grid.lo, grid.step)
    if midpoints.shape[0] == 0:
        return SliceSet.empty(ON_X, source, surface.dimension)

    def level(u: np.ndarray) -> np.ndarray:
        return np.einsum("...i,i->...", surface.points(u) - p.anchor, p.normal)

    def gradient(u: np.ndarray) -> np.ndarray:
        return np.einsum("...ki,k->...i", surface.jacobian(u), p.normal)

    scale = max(1.0, float(np.max(np.abs(values))))
    tolerance = NODE_TOL * scale
    nodes, grads, residuals = _newton_project(
        midpoints, level, gradient, tolerance, "E", {"omega": source.tolist()}
    )

    inside = surface.domain.contains(nodes)
    touches = not bool(np.all(surface.domain.contains(nodes, margin=float(np.max(grid.step)))))
    nodes, grads, sizes, residuals = nodes[inside], grads[inside], sizes[inside], residuals[inside]
    if nodes.shape[0] == 0:
        return SliceSet.empty(ON_X, source, surface.dimension)

    residual = float(np.max(residuals))
    if residual > tolerance:
        raise SliceError(f"slice node residual {residual:.3e} exceeds tolerance; refine the grid")

    densities = surface.volume_density(nodes) / np.linalg.norm(grads, axis=1)
    if touches and warn_boundary:
        logger.warning("Slice for omega=%s touches the chart boundary", np.round(source, 6).tolist())
    return SliceSet(
        ambient=ON_X,
        nodes=nodes,
        element_sizes=sizes,
        leray_densities=densities,
        source=source,
        residual=residual,
        touches_boundary=touches,
        spacing=float(np.max(sizes ** (1.0 / (surface.dimension - 1)))),
    )


class CamChart:
    """Stereographic chart of S^n centred on ``pole``.

    omega(s) = ((1 - |s|^2) pole + 2 T s) / (1 + |s|^2) with T an orthonormal
    basis of the pole's complement; the sphere element is (2/(1+|s|^2))^n ds.
    """

    def __init__(self, pole: np.ndarray):
        self.pole = np.asarray(pole, dtype=float) / np.linalg.norm(pole)
        self.frame = null_space(self.pole[None, :])

    def omega(self, s: np.ndarray) -> np.ndarray:
        squared = np.sum(s * s, axis=-1, keepdims=True)
        return ((1.0 - squared) * self.pole + 2.0 * s @ self.frame.T) / (1.0 + squared)

    def jacobian(self, s: np.ndarray) -> np.ndarray:
        """d omega / d s, shape (..., n+1, n)."""
        denominator = 1.0 + np.sum(s * s, axis=-1)[..., None, None]
        omega = self.omega(s)[..., :, None]
        s_row = s[..., None, :]
        return (2.0 * self.frame - 2.0 * self.pole[:, None] * s_row - 2.0 * omega * s_row) / denominator

    def sphere_density(self, s: np.ndarray) -> np.ndarray:
        return (2.0 / (1.0 + np.sum(s * s, axis=-1))) ** s.shape[-1]


def _incidence_form(x: np.ndarray, cam: Cam) -> Tuple[np.ndarray, float, float]:
    """(a, b, |a|) of Phi(x, sigma(omega)) = <a, omega> - b, for x strictly outside the cam.

    Raises:
        GeometryError: x on the cam (or at the point cam's centre) or inside it
    """
    a, b = incidence_coefficients(x, cam)
    norm_a = float(np.linalg.norm(a))
    if norm_a <= 1e-12 or abs(norm_a - b) <= 1e-9 * max(1.0, b):
        raise GeometryError(f"point {x.tolist()} lies on the cam; no incidence slice")
    if norm_a < b:
        raise GeometryError(f"point {x.tolist()} lies inside the cam; no tangent hyperplane passes through it")
    return a, b, norm_a


def slice_on_cam(x: np.ndarray, cam: Cam, resolution: int = 192) -> SliceSet:
    """Slice Z(x) = {omega : Phi(x, sigma(omega)) = 0} with weights dSigma / d_sigma Phi.

    The chart is centred on the axis of the incidence form, where Z(x) is the
    sphere |s| = tan(alpha/2), cos(alpha) = b/|a|.

    Args:
        x: Point of E^{n+1} off the cam
        cam: The cam
        resolution: Cells per axis of the chart grid

    Returns:
        SliceSet on the cam (nodes are omega on S^n)

    Raises:
        GeometryError: x on the cam (or at the point cam's centre) or inside it
        ConditionViolation: Vanishing tangential gradient
        SliceError: The extracted level set is not a single closed curve/surface
    """
    x = np.asarray(x, dtype=float)
    a, b, norm_a = _incidence_form(x, cam)

    n = cam.dimension
    chart = CamChart(a)
    half_width = CAM_CHART_MARGIN * float(np.tan(np.arccos(b / norm_a) / 2.0))
    step = 2.0 * half_width / resolution * np.ones(n)
    axis = np.linspace(-half_width, half_width, resolution + 1)
    mesh = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1)

    def level(s: np.ndarray) -> np.ndarray:
        return chart.omega(s) @ a - b

    def gradient(s: np.ndarray) -> np.ndarray:
        return np.einsum("...ki,k->...i", chart.jacobian(s), a)

    midpoints, sizes, is_open, pieces = _tensor_contours(level(mesh), -half_width * np.ones(n), step)
    if midpoints.shape[0] == 0 or is_open or pieces != 1:
        raise SliceError(f"incidence slice at x={x.tolist()} is not a single closed sphere; refine the grid")

    tolerance = NODE_TOL * max(1.0, norm_a)
    nodes, grads, residuals = _newton_project(
        midpoints, level, gradient, tolerance, "conjugate", {"x": x.tolist()}
    )
    residual = float(np.max(residuals))
    if residual > tolerance:
        raise SliceError(f"cam slice node residual {residual:.3e} exceeds tolerance")

    densities = cam.density * chart.sphere_density(nodes) / np.linalg.norm(grads, axis=1)
    arc_lengths = sizes ** (1.0 / (n - 1)) * chart.sphere_density(nodes) ** (1.0 / n)
    return SliceSet(
        ambient=ON_SIGMA,
        nodes=chart.omega(nodes),
        element_sizes=sizes,
        leray_densities=densities,
        source=x,
        residual=residual,
        spacing=float(np.max(arc_lengths)),
    )


def incidence_sphere(
    x: np.ndarray, cam: Cam, resolution: int = 192, axis: Optional[np.ndarray] = None
) -> SliceSet:
    """Z(x) on the cam from its closed form, with a spectrally accurate rule.

    Z(x) is the round sphere omega = cos(alpha) p + sin(alpha) T theta with
    p = a/|a|, cos(alpha) = b/|a| and theta on S^{n-1}. The rule on S^{n-1}
    is ``resolution`` equispaced angles for n = 2 and Gauss-Legendre in the
    polar cosine (resolution // 2 nodes) times ``resolution`` equispaced
    azimuths for n = 3. The tangential gradient of Phi(x, .) is |a| sin(alpha)
    on all of Z(x), so the Leray density is constant.

    Args:
        x: Point of E^{n+1} off the cam
        cam: The cam
        resolution: Nodes per great circle of the rule on S^{n-1}
        axis: Polar direction of the n = 3 rule (projected onto the plane of Z(x))

    Returns:
        SliceSet on the cam (nodes are omega on S^n)

    Raises:
        GeometryError: x on the cam (or at the point cam's centre) or inside it
        SliceError: Unsupported dimension or a resolution below 4
    """
    x = np.asarray(x, dtype=float)
    a, b, norm_a = _incidence_form(x, cam)
    n = cam.dimension
    if n not in (2, 3):
        raise SliceError(f"incidence spheres are built for n = 2, 3 (got n = {n})")
    if resolution < 4:
        raise SliceError("incidence sphere needs at least 4 nodes per circle")

    pole = a / norm_a
    cos_alpha = b / norm_a
    sin_alpha = float(np.sqrt(1.0 - cos_alpha**2))
    frame = null_space(pole[None, :])
    azimuth = 2.0 * np.pi * (np.arange(resolution) + 0.5) / resolution
    azimuth_weight = 2.0 * np.pi / resolution

    if n == 2:
        directions = np.cos(azimuth)[:, None] * frame[:, 0] + np.sin(azimuth)[:, None] * frame[:, 1]
        sizes = np.full(resolution, sin_alpha * azimuth_weight)
        spacing = sin_alpha * azimuth_weight
    else:
        if axis is not None:
            local = frame.T @ np.asarray(axis, dtype=float)
            if np.linalg.norm(local) > 1e-12:
                local = local / np.linalg.norm(local)
                frame = frame @ np.column_stack([null_space(local[None, :]), local])
        cos_polar, polar_weights = roots_legendre(max(2, resolution // 2))
        sin_polar = np.sqrt(1.0 - cos_polar**2)
        directions = (
            (sin_polar[:, None] * np.cos(azimuth)[None, :])[..., None] * frame[:, 0]
            + (sin_polar[:, None] * np.sin(azimuth)[None, :])[..., None] * frame[:, 1]
            + np.broadcast_to(cos_polar[:, None], (cos_polar.size, resolution))[..., None] * frame[:, 2]
        ).reshape(-1, n + 1)
        sizes = sin_alpha**2 * np.outer(polar_weights, np.full(resolution, azimuth_weight)).ravel()
        polar_gaps = np.diff(np.concatenate([[0.0], np.sort(np.arccos(cos_polar)), [np.pi]]))
        spacing = sin_alpha * max(float(np.max(polar_gaps)), azimuth_weight)

    nodes = cos_alpha * pole + sin_alpha * directions
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    density = cam.density / (norm_a * sin_alpha)
    return SliceSet(
        ambient=ON_SIGMA,
        nodes=nodes,
        element_sizes=sizes,
        leray_densities=np.full(len(sizes), density),
        source=x,
        residual=float(np.max(np.abs(nodes @ a - b))),
        spacing=spacing,
    )
