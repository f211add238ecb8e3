"""Closed-form test fields on the parameter domain."""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Tuple

import numpy as np

from camtomo.geometry.surface import Hypersurface
from camtomo.transform.forward import SUPPORT_PADDING_CELLS, ScalarField
from camtomo.utils.errors import ConfigError
from camtomo.utils.profiles import bump_profile, smooth_step

logger = logging.getLogger(__name__)

RADIAL_BUMP = "radial_bump"
SUM_OF_BUMPS = "sum_of_bumps"
ZONAL = "zonal"
INDICATOR_SMOOTHED = "indicator_smoothed"
PHANTOM_KINDS = (RADIAL_BUMP, SUM_OF_BUMPS, ZONAL, INDICATOR_SMOOTHED)


@dataclass(frozen=True)
class Component:
    """One compactly supported term: amplitude * profile(center, width, radius)."""

    center: np.ndarray
    width: float
    amplitude: float
    radius: float = 0.0
    # radius of the closed ball containing the support
    support_radius: float = 0.0


@dataclass(frozen=True)
class Phantom:
    """Smooth test field given by a sum of components of one kind."""

    kind: str
    components: Tuple[Component, ...]
    dimension: int

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        total = np.zeros(u.shape[:-1])
        for component in self.components:
            if component.amplitude == 0.0:
                continue
            r = np.linalg.norm(u - component.center, axis=-1)
            total = total + component.amplitude * _PROFILES[self.kind](r, component)
        return total

    @property
    def is_zero(self) -> bool:
        return all(component.amplitude == 0.0 for component in self.components)

    def support_boxes(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Bounding box of each non-zero component."""
        return [
            (c.center - c.support_radius, c.center + c.support_radius)
            for c in self.components
            if c.amplitude != 0.0
        ]

    def support_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Smallest box containing every component box."""
        boxes = self.support_boxes()
        if not boxes:
            return np.zeros(self.dimension), np.zeros(self.dimension)
        return np.min([lo for lo, _ in boxes], axis=0), np.max([hi for _, hi in boxes], axis=0)

    def as_field(self) -> ScalarField:
        if self.is_zero:
            return ScalarField.zeros(self.dimension)
        lo, hi = self.support_box()
        return ScalarField(function=self, support_lo=lo, support_hi=hi)

    def spec(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "centers": [c.center.tolist() for c in self.components],
            "widths": [c.width for c in self.components],
            "amplitudes": [c.amplitude for c in self.components],
            "radii": [c.radius for c in self.components],
        }


def _bump(r: np.ndarray, component: Component) -> np.ndarray:
    return bump_profile(r / component.width)


def _ring(r: np.ndarray, component: Component) -> np.ndarray:
    # depends on |u - center| only: a function of latitude on caps centred at the pole
    return bump_profile((r - component.radius) / component.width)


def _plateau(r: np.ndarray, component: Component) -> np.ndarray:
    return smooth_step((component.radius - r) / component.width)


_PROFILES: Dict[str, Callable[[np.ndarray, Component], np.ndarray]] = {
    RADIAL_BUMP: _bump,
    SUM_OF_BUMPS: _bump,
    ZONAL: _ring,
    INDICATOR_SMOOTHED: _plateau,
}


def _as_list(spec: Mapping[str, Any], plural: str, singular: str, default: Any) -> List[Any]:
    if plural in spec:
        values = spec[plural]
        return list(values) if isinstance(values, (list, tuple)) else [values]
    if singular in spec:
        return [spec[singular]]
    return [default]


def _components(spec: Mapping[str, Any], dimension: int) -> List[Component]:
    kind = spec["kind"]
    centers = _as_list(spec, "centers", "center", [0.0] * dimension)
    if centers and not isinstance(centers[0], (list, tuple, np.ndarray)):
        centers = [centers]
    count = len(centers)
    widths = _as_list(spec, "widths", "width", 0.3)
    amplitudes = _as_list(spec, "amplitudes", "amplitude", 1.0)
    radii = _as_list(spec, "radii", "radius", 0.0)

    def stretch(values: List[Any], name: str) -> List[float]:
        if len(values) == 1:
            return [float(values[0])] * count
        if len(values) != count:
            raise ConfigError(f"phantom '{name}' has {len(values)} entries for {count} centers")
        return [float(v) for v in values]

    widths_f = stretch(widths, "widths")
    amplitudes_f = stretch(amplitudes, "amplitudes")
    radii_f = stretch(radii, "radii")
    if kind == RADIAL_BUMP and count != 1:
        raise ConfigError("radial_bump takes a single center; use sum_of_bumps")

    components = []
    for center, width, amplitude, radius in zip(centers, widths_f, amplitudes_f, radii_f):
        center_array = np.asarray(center, dtype=float)
        if center_array.shape != (dimension,):
            raise ConfigError(f"phantom center {list(center)} is not a point of R^{dimension}")
        if width <= 0.0 or radius < 0.0:
            raise ConfigError("phantom widths must be positive and radii non-negative")
        if kind == INDICATOR_SMOOTHED and not 0.0 < width <= radius:
            raise ConfigError("indicator_smoothed needs 0 < width <= radius")
        reach = {ZONAL: radius + width, INDICATOR_SMOOTHED: radius}.get(kind, width)
        components.append(Component(center_array, width, amplitude, radius, reach))
    return components


def make_phantom(spec: Mapping[str, Any], surface: Hypersurface, resolution: int = 256) -> Phantom:
    """Build a phantom and check its support against the domain.

    Args:
        spec: ``{kind, centers|center, widths|width, amplitudes|amplitude, radii|radius}``
        surface: Hypersurface whose parameter domain must contain the support
        resolution: Surface grid resolution defining the required margin

    Returns:
        The phantom

    Raises:
        ConfigError: Unknown kind, malformed parameters, or support closer than
            two grid cells to the boundary of U
    """
    kind = spec.get("kind")
    if kind not in PHANTOM_KINDS:
        raise ConfigError(f"Unknown phantom kind: {kind} (expected one of {', '.join(PHANTOM_KINDS)})")
    phantom = Phantom(kind, tuple(_components(spec, surface.dimension)), surface.dimension)

    margin = SUPPORT_PADDING_CELLS * surface.domain.cell_size(resolution)
    for component in phantom.components:
        if component.amplitude == 0.0:
            continue
        if not surface.domain.contains_ball(component.center, component.support_radius, margin):
            raise ConfigError(
                f"phantom support around {component.center.tolist()} (radius {component.support_radius:g}) "
                f"is not inside U with a margin of {SUPPORT_PADDING_CELLS} grid cells"
            )
    logger.debug("Built %s phantom with %d component(s)", kind, len(phantom.components))
    return phantom


def evaluation_points(
    phantom: Phantom, surface: Hypersurface, points_per_axis: int, margin_cells: int, resolution: int
) -> np.ndarray:
    """Tensor grid over the phantom's support box, restricted to U shrunk by ``margin_cells``.

    A zero phantom is evaluated over the whole domain.
    """
    domain = surface.domain
    if phantom.is_zero:
        lo, hi = domain.lo, domain.hi
    else:
        lo, hi = phantom.support_box()
    axes = [np.linspace(lo[i], hi[i], points_per_axis) for i in range(surface.dimension)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, surface.dimension)
    return grid[domain.contains(grid, margin_cells * domain.cell_size(resolution))]
