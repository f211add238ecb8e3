"""Regularized singular integrals (Phi - i eps)^{-n} and their eps -> 0 limits."""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from camtomo.geometry.cam import Cam, incidence_coefficients
from camtomo.transform.sinogram import Sinogram
from camtomo.utils.errors import ConfigError

logger = logging.getLogger(__name__)

# eps_min >= MIN_EPS_FACTOR * h
MIN_EPS_FACTOR = 2.0
# growth of the eps sequence below this fraction of the absolute sum is quadrature noise
DIVERGENCE_TOL = 1e-2


@dataclass(frozen=True)
class RegularizationSchedule:
    """Decreasing eps levels ``eps0 * h / ratio**k``, k = 0..levels-1, in units of h.

    Even n uses the real part of I(eps), odd n the imaginary part.
    """

    eps0: float = 8.0
    levels: int = 3
    ratio: float = 2.0

    def __post_init__(self) -> None:
        if self.levels < 1 or self.eps0 <= 0.0 or self.ratio <= 1.0:
            raise ConfigError("schedule needs levels >= 1, eps0 > 0 and ratio > 1")
        if self.factors()[-1] < MIN_EPS_FACTOR:
            raise ConfigError(
                f"smallest eps ({self.factors()[-1]:g} h) is below {MIN_EPS_FACTOR:g} h; "
                "the singular layer would not be resolved by the cam grid"
            )

    def factors(self) -> np.ndarray:
        return self.eps0 / self.ratio ** np.arange(self.levels)

    def epsilons(self, h: float) -> np.ndarray:
        return self.factors() * h

    @staticmethod
    def branch(n: int) -> str:
        return "real" if n % 2 == 0 else "imaginary"

    def spec(self) -> Dict[str, Any]:
        return {"eps0": self.eps0, "levels": self.levels, "ratio": self.ratio}


@dataclass(frozen=True)
class Extrapolation:
    """Limit value of a sequence sampled at decreasing eps."""

    value: float
    residual: float
    diverging: bool
    eps: np.ndarray
    samples: np.ndarray


def _polynomial_limit(eps: np.ndarray, values: np.ndarray) -> float:
    matrix = np.vander(eps, N=eps.size, increasing=True)
    return float(np.linalg.solve(matrix, values)[0])


def extrapolate_to_zero(
    eps: Sequence[float], values: Sequence[float], scale: Optional[float] = None
) -> Extrapolation:
    """Fit a polynomial of degree len(eps)-1 in eps and evaluate it at 0.

    The residual compares against the limit of the finest len(eps)-1 levels.
    The sequence is flagged diverging when successive differences grow and the
    last one exceeds DIVERGENCE_TOL * scale. ``scale`` is the absolute size of
    the quadrature sum (``pairing_mass``); it defaults to max |values|.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if eps.size != values.size or eps.size == 0:
        raise ValueError("extrapolation needs matching, non-empty eps and value sequences")
    if eps.size == 1:
        return Extrapolation(float(values[0]), 0.0, False, eps, values)

    value = _polynomial_limit(eps, values)
    residual = abs(value - _polynomial_limit(eps[1:], values[1:]))

    differences = np.abs(np.diff(values))
    if scale is None:
        scale = float(np.max(np.abs(values)))
    floor = DIVERGENCE_TOL * max(float(scale), 1e-300)
    diverging = bool(differences.size >= 2 and differences[-1] > differences[-2] and differences[-1] > floor)
    if diverging:
        logger.warning(
            "eps extrapolation diverging: successive differences %s (floor %.3e)", differences.tolist(), floor
        )
    return Extrapolation(value, float(residual), diverging, eps, values)


def regularized_kernel(t: np.ndarray, eps: Union[float, np.ndarray], n: int) -> np.ndarray:
    """(t - i eps)^{-n}."""
    return (np.asarray(t, dtype=float) - 1j * np.asarray(eps, dtype=float)) ** (-n)


def regularized_pairing(phi_values: np.ndarray, weights: np.ndarray, n: int, eps: Sequence[float]) -> np.ndarray:
    """sum_k weights_k (phi_k - i eps)^{-n} for every eps."""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    kernel = regularized_kernel(phi_values[None, :], eps[:, None], n)
    return kernel @ np.asarray(weights, dtype=complex)


def pairing_mass(phi_values: np.ndarray, weights: np.ndarray, n: int, eps: float) -> float:
    """sum_k |weights_k| |phi_k - i eps|^{-n}: the size of the pairing without cancellation."""
    magnitudes = (np.asarray(phi_values, dtype=float) ** 2 + float(eps) ** 2) ** (-n / 2.0)
    return float(np.sum(np.abs(weights) * magnitudes))


def incidence_values(sinogram: Sinogram, x: np.ndarray, cam: Cam) -> np.ndarray:
    """Phi(x, sigma(omega_k)) at the sinogram nodes."""
    a, b = incidence_coefficients(x, cam)
    return sinogram.grid.nodes @ a - b


def _data_weights(sinogram: Sinogram, cam: Cam) -> np.ndarray:
    return sinogram.grid.weights * cam.density * sinogram.values


def sokhotski_integral(
    sinogram: Sinogram, x: np.ndarray, cam: Cam, n: int, eps: Union[float, Sequence[float]]
) -> Union[complex, np.ndarray]:
    """I(eps) = sum_k w_k * density * S_k * (Phi(x, sigma_k) - i eps)^{-n}.

    Returns a complex scalar for scalar eps, an array for a sequence.
    """
    phi_values = incidence_values(sinogram, x, cam)
    result = regularized_pairing(phi_values, _data_weights(sinogram, cam), n, np.atleast_1d(eps))
    return complex(result[0]) if np.ndim(eps) == 0 else result


def _sokhotski_mass(sinogram: Sinogram, x: np.ndarray, cam: Cam, n: int, eps: float) -> float:
    return pairing_mass(incidence_values(sinogram, x, cam), _data_weights(sinogram, cam), n, eps)


def finite_part(
    sinogram: Sinogram, x: np.ndarray, cam: Cam, n: int, schedule: RegularizationSchedule, h: float
) -> Extrapolation:
    """Finite-part integral of M_Phi f dSigma / Phi^n (even n): limit of Re I(eps).

    Raises:
        ValueError: For odd n
    """
    if n % 2:
        raise ValueError("finite_part is the even-n branch")
    eps = schedule.epsilons(h)
    return extrapolate_to_zero(
        eps,
        np.real(sokhotski_integral(sinogram, x, cam, n, eps)),
        scale=_sokhotski_mass(sinogram, x, cam, n, eps[-1]),
    )


def delta_pairing(
    sinogram: Sinogram, x: np.ndarray, cam: Cam, n: int, schedule: RegularizationSchedule, h: float
) -> Extrapolation:
    """Pairing of delta^{(n-1)}(Phi) with M_Phi f dSigma (odd n).

    Equals (-1)^{n-1} (n-1)!/pi * Im I(eps) in the limit.

    Raises:
        ValueError: For even n
    """
    if n % 2 == 0:
        raise ValueError("delta_pairing is the odd-n branch")
    eps = schedule.epsilons(h)
    factor = (-1) ** (n - 1) * math.factorial(n - 1) / math.pi
    return extrapolate_to_zero(
        eps,
        factor * np.imag(sokhotski_integral(sinogram, x, cam, n, eps)),
        scale=abs(factor) * _sokhotski_mass(sinogram, x, cam, n, eps[-1]),
    )
