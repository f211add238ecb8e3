"""Affine transport of a (cam, hypersurface) configuration."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from camtomo.geometry.cam import Cam
from camtomo.geometry.surface import Hypersurface
from camtomo.utils.errors import GeometryError

logger = logging.getLogger(__name__)

PULLBACK = "pullback"
INDUCED = "induced"


@dataclass(frozen=True)
class AffineMap:
    """x -> L x + t."""

    linear: np.ndarray
    offset: np.ndarray

    def __post_init__(self) -> None:
        linear = np.array(self.linear, dtype=float)
        offset = np.array(self.offset, dtype=float)
        if linear.ndim != 2 or linear.shape[0] != linear.shape[1] or offset.shape != (linear.shape[0],):
            raise GeometryError("affine map needs a square linear part and a matching offset")
        if np.linalg.cond(linear) > 1e12:
            raise GeometryError("affine map has a non-invertible linear part")
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def identity(cls, dimension: int) -> "AffineMap":
        return cls(np.eye(dimension), np.zeros(dimension))

    @classmethod
    def from_spec(cls, spec: Dict[str, Any], dimension: int) -> "AffineMap":
        linear = spec.get("linear", np.eye(dimension))
        if "scale" in spec:
            linear = float(spec["scale"]) * np.asarray(linear, dtype=float)
        return cls(linear, spec.get("offset", np.zeros(dimension)))

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.linear, np.eye(len(self.offset))) and not np.any(self.offset))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.linear.T + self.offset

    def inverse(self) -> "AffineMap":
        inverse_linear = np.linalg.inv(self.linear)
        return AffineMap(inverse_linear, -inverse_linear @ self.offset)

    def spec(self) -> Dict[str, Any]:
        return {"linear": self.linear.tolist(), "offset": self.offset.tolist()}


def transform_cam(cam: Cam, transform: AffineMap) -> Cam:
    """e' = T(e), A' = L^{-T} A L^{-1}, B' = L B.

    A point cam is only translated.
    """
    if transform.linear.shape[0] != cam.ambient_dimension:
        raise GeometryError("affine map dimension does not match the cam")
    center = transform(cam.center)
    if cam.is_point:
        return Cam.point(center)
    inverse = np.linalg.inv(transform.linear)
    matrix = inverse.T @ cam.matrix @ inverse
    matrix = (matrix + matrix.T) / 2.0
    return Cam(center=center, matrix=matrix, frame=transform.linear @ cam.frame)


def transform_surface(surface: Hypersurface, transform: AffineMap, metric_mode: str = PULLBACK) -> Hypersurface:
    """Chart T o x with the metric pulled back from the original or recomputed."""
    if metric_mode not in (PULLBACK, INDUCED):
        raise GeometryError(f"unknown metric mode: {metric_mode}")
    linear = transform.linear
    chart = surface.chart
    partials = surface.partials
    spec = dict(surface.spec_data)
    spec["affine"] = dict(transform.spec(), metric_mode=metric_mode)

    return Hypersurface(
        domain=surface.domain,
        chart=lambda u: transform(chart(u)),
        partials=lambda u: np.einsum("ij,...jk->...ik", linear, partials(u)),
        metric_provider=surface.metric if metric_mode == PULLBACK else None,
        name=surface.name,
        spec_data=spec,
    )


def affine_pushforward(
    cam: Cam,
    surface: Hypersurface,
    transform: AffineMap,
    metric_mode: Optional[str] = PULLBACK,
) -> Tuple[Cam, Hypersurface]:
    """Transport cam and hypersurface by an invertible affine map.

    Args:
        cam: The cam
        surface: The hypersurface
        transform: Affine map T
        metric_mode: ``pullback`` keeps g(u) (exactly covariant pipeline) or
            ``induced`` recomputes the induced metric of T o x

    Returns:
        Tuple of transported cam and hypersurface; the inputs themselves for the identity

    Raises:
        GeometryError: If the linear part is not invertible
    """
    if transform.is_identity:
        return cam, surface
    logger.debug("Pushing configuration forward by %s", transform.spec())
    return transform_cam(cam, transform), transform_surface(surface, transform, metric_mode or PULLBACK)
