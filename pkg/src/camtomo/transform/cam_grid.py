"""Product quadrature grids on the cam parameter sphere S^n (n = 2, 3)."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy.special import roots_chebyu, roots_legendre

from camtomo.utils.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CamGrid:
    """Quadrature nodes omega_k on S^n with weights summing to |S^n|.

    Nodes are stored row-major over (polar, azimuth) for n = 2 and over
    (chi, theta, phi) for n = 3. ``step`` is the largest angular spacing.
    """

    dimension: int
    resolution: Tuple[int, ...]
    nodes: np.ndarray
    weights: np.ndarray
    step: float

    def __post_init__(self) -> None:
        if self.nodes.shape != (self.weights.size, self.dimension + 1):
            raise ValueError("cam grid nodes and weights do not match")

    def __len__(self) -> int:
        return int(self.weights.size)

    @classmethod
    def build(cls, dimension: int, resolution: Sequence[int]) -> "CamGrid":
        """Gauss-Legendre x uniform-azimuth rule on S^2, product-angle rule on S^3.

        Args:
            dimension: n (2 or 3)
            resolution: (polar, azimuth) for n = 2, (chi, theta, phi) for n = 3

        Raises:
            ConfigError: On an unsupported dimension or resolution shape
        """
        resolution = tuple(int(r) for r in resolution)
        if dimension == 2 and len(resolution) == 2:
            return cls._sphere2(*resolution)
        if dimension == 3 and len(resolution) == 3:
            return cls._sphere3(*resolution)
        raise ConfigError(f"cam grid resolution {list(resolution)} does not fit n = {dimension}")

    @classmethod
    def _sphere2(cls, polar: int, azimuth: int) -> "CamGrid":
        cos_theta, polar_weights = roots_legendre(polar)
        phi = 2.0 * np.pi * (np.arange(azimuth) + 0.5) / azimuth
        sin_theta = np.sqrt(1.0 - cos_theta**2)
        nodes = np.stack(
            [
                np.outer(sin_theta, np.cos(phi)),
                np.outer(sin_theta, np.sin(phi)),
                np.outer(cos_theta, np.ones(azimuth)),
            ],
            axis=-1,
        ).reshape(-1, 3)
        weights = np.outer(polar_weights, np.full(azimuth, 2.0 * np.pi / azimuth)).ravel()
        step = max(_angular_step(np.arccos(cos_theta)), 2.0 * np.pi / azimuth)
        return cls(2, (polar, azimuth), nodes, weights, step)

    @classmethod
    def _sphere3(cls, chi_count: int, theta_count: int, phi_count: int) -> "CamGrid":
        # sin(chi)^2 dchi = sqrt(1 - t^2) dt with t = cos(chi)
        cos_chi, chi_weights = roots_chebyu(chi_count)
        cos_theta, theta_weights = roots_legendre(theta_count)
        phi = 2.0 * np.pi * (np.arange(phi_count) + 0.5) / phi_count
        sin_chi = np.sqrt(1.0 - cos_chi**2)
        sin_theta = np.sqrt(1.0 - cos_theta**2)

        chi_axis, theta_axis, phi_axis = np.meshgrid(np.arange(chi_count), np.arange(theta_count), phi, indexing="ij")
        sc, cc = sin_chi[chi_axis], cos_chi[chi_axis]
        st, ct = sin_theta[theta_axis], cos_theta[theta_axis]
        nodes = np.stack(
            [sc * st * np.cos(phi_axis), sc * st * np.sin(phi_axis), sc * ct, cc],
            axis=-1,
        ).reshape(-1, 4)
        weights = (
            chi_weights[:, None, None]
            * theta_weights[None, :, None]
            * np.full(phi_count, 2.0 * np.pi / phi_count)[None, None, :]
        ).ravel()
        step = max(
            _angular_step(np.arccos(cos_chi)),
            _angular_step(np.arccos(cos_theta)),
            2.0 * np.pi / phi_count,
        )
        return cls(3, (chi_count, theta_count, phi_count), nodes, weights, step)

    def spec(self) -> Dict[str, Any]:
        return {"dimension": self.dimension, "resolution": list(self.resolution), "step": self.step}


def _angular_step(angles: np.ndarray) -> float:
    """Largest gap between sorted angles in [0, pi], endpoints included."""
    points = np.concatenate([[0.0], np.sort(angles), [np.pi]])
    return float(np.max(np.diff(points)))
