"""Parametrized hypersurfaces X in E^{n+1} with a Riemannian metric provider."""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import norm

from camtomo.utils.errors import GeometryError

logger = logging.getLogger(__name__)

ArrayFunction = Callable[[np.ndarray], np.ndarray]

# central difference step relative to the domain size
FD_STEP = 1e-5


@dataclass(frozen=True)
class ParameterDomain:
    """Axis-aligned rectangle U in R^n, optionally restricted to an inscribed ball."""

    lo: np.ndarray
    hi: np.ndarray
    ball_center: Optional[np.ndarray] = None
    ball_radius: Optional[float] = None

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
            raise GeometryError("parameter domain needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.ball_radius is not None:
            center = np.zeros_like(lo) if self.ball_center is None else np.asarray(self.ball_center, float)
            object.__setattr__(self, "ball_center", center)

    @classmethod
    def ball(cls, radius: float, dimension: int) -> "ParameterDomain":
        """Ball of the given radius centred at the origin, inside its bounding box."""
        return cls(
            lo=-radius * np.ones(dimension),
            hi=radius * np.ones(dimension),
            ball_center=np.zeros(dimension),
            ball_radius=radius,
        )

    @property
    def dimension(self) -> int:
        return int(self.lo.size)

    @property
    def size(self) -> float:
        return float(np.max(self.hi - self.lo))

    def cell_size(self, resolution: int) -> float:
        """Largest grid step of a tensor grid with ``resolution`` cells per axis."""
        return float(np.max(self.hi - self.lo) / resolution)

    def contains(self, u: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Whether u lies in U shrunk by ``margin``."""
        u = np.asarray(u, dtype=float)
        inside = np.all((u >= self.lo + margin) & (u <= self.hi - margin), axis=-1)
        if self.ball_radius is not None:
            radius = np.linalg.norm(u - self.ball_center, axis=-1)
            inside &= radius <= self.ball_radius - margin
        return inside

    def contains_ball(self, center: np.ndarray, radius: float, margin: float = 0.0) -> bool:
        """Whether the closed ball B(center, radius) lies in U shrunk by ``margin``."""
        center = np.asarray(center, dtype=float)
        if np.any(center - radius < self.lo + margin) or np.any(center + radius > self.hi - margin):
            return False
        if self.ball_radius is not None:
            return bool(np.linalg.norm(center - self.ball_center) + radius <= self.ball_radius - margin)
        return True

    def axes(self, resolution: int, lo: Optional[np.ndarray] = None, hi: Optional[np.ndarray] = None) -> List[np.ndarray]:
        """Node coordinates of a tensor grid with ``resolution`` cells per axis."""
        lo = self.lo if lo is None else np.asarray(lo, dtype=float)
        hi = self.hi if hi is None else np.asarray(hi, dtype=float)
        return [np.linspace(lo[i], hi[i], resolution + 1) for i in range(self.dimension)]

    def sample(self, unit: np.ndarray) -> np.ndarray:
        """Map points of the unit cube into U, dropping those outside the ball region."""
        u = self.lo + np.asarray(unit, dtype=float) * (self.hi - self.lo)
        return u[self.contains(u)]

    def boundary_sample(self, unit: np.ndarray) -> np.ndarray:
        """Map points of the unit cube (m, n) onto the boundary of the region."""
        unit = np.clip(np.asarray(unit, dtype=float), 1e-12, 1.0 - 1e-12)
        if self.ball_radius is not None:
            directions = norm.ppf(unit)
            directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
            return self.ball_center + self.ball_radius * directions

        n = self.dimension
        faces = np.minimum((unit[:, 0] * 2 * n).astype(int), 2 * n - 1)
        points = self.lo + unit * (self.hi - self.lo)
        rest = np.roll(unit, -1, axis=1)
        for k in range(len(points)):
            axis, upper = divmod(faces[k], 2)
            points[k] = self.lo + rest[k] * (self.hi - self.lo)
            points[k, axis] = self.hi[axis] if upper else self.lo[axis]
        return points

    def spec(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"lo": self.lo.tolist(), "hi": self.hi.tolist()}
        if self.ball_radius is not None:
            data["ball"] = {"center": self.ball_center.tolist(), "radius": float(self.ball_radius)}
        return data


class ConformalMetric:
    """Metric lambda(u) * g0(u) for a positive factor lambda."""

    def __init__(self, base: ArrayFunction, factor: ArrayFunction):
        self.base = base
        self.factor = factor

    def __call__(self, u: np.ndarray) -> np.ndarray:
        factor = np.asarray(self.factor(u), dtype=float)
        if np.any(factor <= 0.0):
            raise GeometryError("conformal factor must be positive")
        return factor[..., None, None] * self.base(u)


@dataclass(frozen=True)
class Hypersurface:
    """Chart u -> x(u) of a hypersurface over a parameter domain.

    ``partials(u)`` returns the Jacobian with columns dx/du_i, shape
    (..., n+1, n). ``metric_provider`` defaults to the induced metric.
    """

    domain: ParameterDomain
    chart: ArrayFunction
    partials: ArrayFunction
    metric_provider: Optional[ArrayFunction] = None
    name: str = "custom"
    spec_data: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.check_immersion()

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def ambient_dimension(self) -> int:
        return self.domain.dimension + 1

    def points(self, u: np.ndarray) -> np.ndarray:
        return self.chart(np.asarray(u, dtype=float))

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        return self.partials(np.asarray(u, dtype=float))

    def induced_metric(self, u: np.ndarray) -> np.ndarray:
        """g_ij = <dx/du_i, dx/du_j>."""
        jacobian = self.jacobian(u)
        return np.einsum("...ki,...kj->...ij", jacobian, jacobian)

    def metric(self, u: np.ndarray) -> np.ndarray:
        if self.metric_provider is None:
            return self.induced_metric(u)
        return self.metric_provider(np.asarray(u, dtype=float))

    def volume_density(self, u: np.ndarray) -> np.ndarray:
        """sqrt(det g(u)), the density of d_gX with respect to du."""
        return np.sqrt(np.linalg.det(self.metric(u)))

    def with_metric(self, provider: Optional[ArrayFunction], metric_spec: Dict[str, Any]) -> "Hypersurface":
        spec = dict(self.spec_data)
        spec["metric"] = metric_spec
        return replace(self, metric_provider=provider, spec_data=spec)

    def spec(self) -> Dict[str, Any]:
        data = dict(self.spec_data)
        data.setdefault("name", self.name)
        data["domain"] = self.domain.spec()
        return data

    def grid_nodes(self, resolution: int) -> np.ndarray:
        """Nodes of a tensor grid over U that lie in the region, shape (m, n)."""
        mesh = np.stack(np.meshgrid(*self.domain.axes(resolution), indexing="ij"), axis=-1)
        nodes = mesh.reshape(-1, self.dimension)
        return nodes[self.domain.contains(nodes)]

    def check_immersion(self, resolution: int = 8) -> None:
        """Verify full-rank Jacobian and SPD metric on a coarse grid.

        Raises:
            GeometryError: At the first offending node
        """
        nodes = self.grid_nodes(resolution)
        jacobian = self.jacobian(nodes)
        singular = np.linalg.svd(jacobian, compute_uv=False)
        scale = max(1.0, float(np.max(singular)))
        rank_defect = singular[:, -1] <= 1e-12 * scale
        if np.any(rank_defect):
            u = nodes[np.argmax(rank_defect)]
            raise GeometryError(f"chart is not an immersion at u={u.tolist()}")
        metric = self.metric(nodes)
        eigenvalues = np.linalg.eigvalsh((metric + np.swapaxes(metric, -1, -2)) / 2.0)
        not_spd = eigenvalues[:, 0] <= 0.0
        if np.any(not_spd):
            u = nodes[np.argmax(not_spd)]
            raise GeometryError(f"metric is not positive definite at u={u.tolist()}")

    def finite_difference_jacobian(self, u: np.ndarray) -> np.ndarray:
        """Central-difference Jacobian of the chart (validators only)."""
        u = np.asarray(u, dtype=float)
        step = FD_STEP * self.domain.size
        columns = []
        for i in range(self.dimension):
            shift = np.zeros(self.dimension)
            shift[i] = step
            columns.append((self.chart(u + shift) - self.chart(u - shift)) / (2.0 * step))
        return np.stack(columns, axis=-1)


def spherical_cap(radius: float = 1.0, level: float = 0.4, dimension: int = 2) -> Hypersurface:
    """Cap {x in S^n(radius): x_{n+1} >= level} with the inverse stereographic chart.

    x(u) = radius * (2u, 1 - |u|^2) / (1 + |u|^2); the cap is |u| <= rho with
    rho^2 = (radius - level) / (radius + level).
    """
    if not -radius < level < radius:
        raise GeometryError("cap level must lie strictly inside (-radius, radius)")
    rho = float(np.sqrt((radius - level) / (radius + level)))

    def chart(u: np.ndarray) -> np.ndarray:
        s = np.sum(u * u, axis=-1, keepdims=True)
        return radius * np.concatenate([2.0 * u, 1.0 - s], axis=-1) / (1.0 + s)

    def partials(u: np.ndarray) -> np.ndarray:
        s = np.sum(u * u, axis=-1)[..., None, None]
        eye = np.eye(dimension)
        top = 2.0 * eye / (1.0 + s) - 4.0 * u[..., :, None] * u[..., None, :] / (1.0 + s) ** 2
        bottom = -4.0 * u[..., None, :] / (1.0 + s) ** 2
        return radius * np.concatenate([top, bottom], axis=-2)

    return Hypersurface(
        domain=ParameterDomain.ball(rho, dimension),
        chart=chart,
        partials=partials,
        name="spherical_cap",
        spec_data={"builtin": "spherical_cap", "radius": radius, "level": level, "dimension": dimension},
    )


def ellipsoid_patch(semi_axes: Sequence[float], level: float = 0.4) -> Hypersurface:
    """Image of the unit-sphere cap {x_{n+1} >= level} under diag(semi_axes)."""
    axes = np.asarray(semi_axes, dtype=float)
    if np.any(axes <= 0):
        raise GeometryError("ellipsoid semi-axes must be positive")
    cap = spherical_cap(1.0, level, axes.size - 1)

    return Hypersurface(
        domain=cap.domain,
        chart=lambda u: cap.chart(u) * axes,
        partials=lambda u: cap.partials(u) * axes[:, None],
        name="ellipsoid_patch",
        spec_data={"builtin": "ellipsoid_patch", "semi_axes": axes.tolist(), "level": level},
    )


def graph(
    height: ArrayFunction,
    gradient: ArrayFunction,
    domain: ParameterDomain,
    spec_data: Optional[Dict[str, Any]] = None,
) -> Hypersurface:
    """Graph x(u) = (u, h(u)) with analytic gradient of h."""
    n = domain.dimension

    def chart(u: np.ndarray) -> np.ndarray:
        return np.concatenate([u, height(u)[..., None]], axis=-1)

    def partials(u: np.ndarray) -> np.ndarray:
        eye = np.broadcast_to(np.eye(n), u.shape[:-1] + (n, n))
        return np.concatenate([eye, gradient(u)[..., None, :]], axis=-2)

    return Hypersurface(
        domain=domain,
        chart=chart,
        partials=partials,
        name="graph",
        spec_data=spec_data or {"builtin": "graph"},
    )


def paraboloid_graph(curvature: float, offset: float, half_width: float, dimension: int = 2) -> Hypersurface:
    """Graph of h(u) = offset + curvature * |u|^2 over [-half_width, half_width]^n."""
    domain = ParameterDomain(lo=-half_width * np.ones(dimension), hi=half_width * np.ones(dimension))
    return graph(
        height=lambda u: offset + curvature * np.sum(u * u, axis=-1),
        gradient=lambda u: 2.0 * curvature * u,
        domain=domain,
        spec_data={
            "builtin": "graph",
            "kind": "paraboloid",
            "curvature": curvature,
            "offset": offset,
            "half_width": half_width,
            "dimension": dimension,
        },
    )


def gaussian_graph(
    amplitude: float, width: float, offset: float, half_width: float, dimension: int = 2
) -> Hypersurface:
    """Graph of h(u) = offset + amplitude * exp(-|u|^2 / (2 width^2))."""
    domain = ParameterDomain(lo=-half_width * np.ones(dimension), hi=half_width * np.ones(dimension))

    def height(u: np.ndarray) -> np.ndarray:
        return offset + amplitude * np.exp(-np.sum(u * u, axis=-1) / (2.0 * width**2))

    def gradient(u: np.ndarray) -> np.ndarray:
        bump = amplitude * np.exp(-np.sum(u * u, axis=-1) / (2.0 * width**2))
        return -bump[..., None] * u / width**2

    return graph(
        height=height,
        gradient=gradient,
        domain=domain,
        spec_data={
            "builtin": "graph",
            "kind": "gaussian",
            "amplitude": amplitude,
            "width": width,
            "offset": offset,
            "half_width": half_width,
            "dimension": dimension,
        },
    )
