"""Build cam and hypersurface objects from configuration mappings."""

import copy
import logging
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

import numpy as np

from camtomo.geometry.affine import PULLBACK, AffineMap, affine_pushforward
from camtomo.geometry.cam import ELLIPSOID, POINT, Cam
from camtomo.geometry.surface import (
    ArrayFunction,
    ConformalMetric,
    Hypersurface,
    ParameterDomain,
    ellipsoid_patch,
    gaussian_graph,
    graph,
    paraboloid_graph,
    spherical_cap,
)
from camtomo.utils.config import canonical_hash
from camtomo.utils.errors import ConfigError, GeometryError
from camtomo.utils.expressions import compile_expression
from camtomo.utils.profiles import radial_bump

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Geometry:
    """A validated (cam, hypersurface) pair with its canonical hash."""

    cam: Cam
    surface: Hypersurface
    config: Dict[str, Any]
    config_hash: str

    @property
    def dimension(self) -> int:
        return self.surface.dimension

    def spec(self) -> Dict[str, Any]:
        return {"cam": self.cam.spec(), "surface": self.surface.spec()}

    def transformed(self, transform: AffineMap, metric_mode: str = PULLBACK) -> "Geometry":
        """Geometry pushed forward by ``transform``."""
        cam, surface = affine_pushforward(self.cam, self.surface, transform, metric_mode)
        config = copy.deepcopy(self.config)
        config["affine"] = dict(transform.spec(), metric_mode=metric_mode)
        return _assemble(cam, surface, config)


def build_cam(spec: Mapping[str, Any], ambient_dimension: int) -> Cam:
    """Cam from ``{variant, center, radius | matrix, frame?}``."""
    variant = spec.get("variant", ELLIPSOID)
    center = np.asarray(spec.get("center", np.zeros(ambient_dimension)), dtype=float)
    if center.size != ambient_dimension:
        raise ConfigError(f"cam center must have {ambient_dimension} components")
    if variant == POINT:
        return Cam.point(center)
    if variant != ELLIPSOID:
        raise ConfigError(f"Unknown cam variant: {variant}")
    if "matrix" in spec:
        return Cam(center=center, matrix=np.asarray(spec["matrix"], dtype=float), frame=spec.get("frame"))
    if "radius" in spec:
        return Cam.sphere(center, float(spec["radius"]))
    raise ConfigError("ellipsoid cam needs either 'radius' or 'matrix'")


def build_surface(spec: Mapping[str, Any]) -> Hypersurface:
    """Builtin hypersurface from its configuration block."""
    builtin = spec.get("builtin")
    if builtin == "spherical_cap":
        return spherical_cap(
            radius=float(spec.get("radius", 1.0)),
            level=float(spec.get("level", 0.4)),
            dimension=int(spec.get("dimension", 2)),
        )
    if builtin == "ellipsoid_patch":
        return ellipsoid_patch(spec["semi_axes"], level=float(spec.get("level", 0.4)))
    if builtin == "graph":
        return _build_graph(spec)
    raise ConfigError(f"Unknown surface builtin: {builtin}")


def _build_graph(spec: Mapping[str, Any]) -> Hypersurface:
    kind = spec.get("kind", "paraboloid")
    dimension = int(spec.get("dimension", 2))
    half_width = float(spec.get("half_width", 1.0))
    if kind == "paraboloid":
        return paraboloid_graph(
            curvature=float(spec.get("curvature", 0.5)),
            offset=float(spec.get("offset", 1.0)),
            half_width=half_width,
            dimension=dimension,
        )
    if kind == "gaussian":
        return gaussian_graph(
            amplitude=float(spec.get("amplitude", 0.3)),
            width=float(spec.get("width", 0.5)),
            offset=float(spec.get("offset", 1.0)),
            half_width=half_width,
            dimension=dimension,
        )
    if kind == "expression":
        gradient_texts = spec.get("gradient")
        if not isinstance(gradient_texts, list) or len(gradient_texts) != dimension:
            raise ConfigError(f"graph expression needs a gradient list of {dimension} expressions")
        height = compile_expression(str(spec["height"]), dimension)
        partials = [compile_expression(str(text), dimension) for text in gradient_texts]
        domain = ParameterDomain(lo=-half_width * np.ones(dimension), hi=half_width * np.ones(dimension))
        return graph(
            height=height,
            gradient=lambda u: np.stack([d(u) for d in partials], axis=-1),
            domain=domain,
            spec_data=dict(spec),
        )
    raise ConfigError(f"Unknown graph kind: {kind}")


def build_metric(spec: Optional[Mapping[str, Any]], surface: Hypersurface) -> Hypersurface:
    """Attach the configured metric provider to ``surface``."""
    spec = dict(spec or {"kind": "induced"})
    kind = spec.get("kind", "induced")
    if kind == "induced":
        return surface.with_metric(None, spec)
    if kind != "conformal":
        raise ConfigError(f"Unknown metric kind: {kind}")

    factor: ArrayFunction
    if "expression" in spec:
        factor = compile_expression(str(spec["expression"]), surface.dimension)
    else:
        bump = spec.get("factor", {})
        amplitude = float(bump.get("amplitude", 0.3))
        center = np.asarray(bump.get("center", np.zeros(surface.dimension)), dtype=float)
        width = float(bump.get("width", 0.5))

        def factor(u: np.ndarray) -> np.ndarray:
            return 1.0 + amplitude * radial_bump(u, center, width)

    try:
        return surface.with_metric(ConformalMetric(surface.induced_metric, factor), spec)
    except GeometryError as e:
        raise ConfigError(f"Invalid conformal metric: {e}")


def build_geometry(config: Mapping[str, Any]) -> Geometry:
    """Build the geometry block of an experiment configuration.

    Args:
        config: Mapping with ``cam``, ``surface``, optional ``metric`` and ``affine``

    Returns:
        Geometry with its canonical hash

    Raises:
        ConfigError: On malformed blocks
        GeometryError: On invalid geometric data
    """
    if "surface" not in config or "cam" not in config:
        raise ConfigError("geometry needs 'cam' and 'surface' blocks")
    surface = build_metric(config.get("metric"), build_surface(config["surface"]))
    cam = build_cam(config["cam"], surface.ambient_dimension)

    affine = config.get("affine")
    if affine:
        transform = AffineMap.from_spec(affine, surface.ambient_dimension)
        cam, surface = affine_pushforward(cam, surface, transform, affine.get("metric_mode", PULLBACK))

    return _assemble(cam, surface, copy.deepcopy(dict(config)))


def _assemble(cam: Cam, surface: Hypersurface, config: Dict[str, Any]) -> Geometry:
    if cam.ambient_dimension != surface.ambient_dimension:
        raise GeometryError("cam and hypersurface live in different dimensions")
    digest = canonical_hash({"cam": cam.spec(), "surface": surface.spec()})
    logger.debug("Built geometry %s (n=%d)", digest[:12], surface.dimension)
    return Geometry(cam=cam, surface=surface, config=config, config_hash=digest)

