"""Fast internal consistency checks run by ``camtomo selftest``."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from scipy.special import roots_legendre

from camtomo.conditions.condition_checker import Sampling, check_E
from camtomo.geometry.cam import Cam
from camtomo.geometry.surface import spherical_cap
from camtomo.inversion.reconstruction import normalizer, sphere_area
from camtomo.inversion.singular import extrapolate_to_zero, regularized_pairing
from camtomo.transform.cam_grid import CamGrid

logger = logging.getLogger(__name__)

SURROGATE_NODES = 4000


@dataclass(frozen=True)
class SelfTestResult:
    name: str
    passed: bool
    detail: str


def surrogate_finite_part(eps: Tuple[float, ...] = (0.02, 0.01, 0.005)) -> float:
    """Finite part of the integral of (t - i0)^{-2} over [-1, 1]; exact value -2."""
    t, w = roots_legendre(SURROGATE_NODES)
    values = np.real(regularized_pairing(t, w, 2, eps))
    return extrapolate_to_zero(eps, values).value


def surrogate_delta_prime(eps: Tuple[float, ...] = (0.01, 0.005, 0.0025)) -> float:
    """delta' paired with w(t) = t on [-1, 1]; exact value -w'(0) = -1."""
    t, w = roots_legendre(SURROGATE_NODES)
    values = -np.imag(regularized_pairing(t, w * t, 2, eps)) / math.pi
    return extrapolate_to_zero(eps, values).value


def _check_finite_part() -> SelfTestResult:
    value = surrogate_finite_part()
    return SelfTestResult("finite part surrogate", abs(value + 2.0) <= 1e-6, f"{value:.10f} (exact -2)")


def _check_delta_prime() -> SelfTestResult:
    value = surrogate_delta_prime()
    return SelfTestResult("delta' surrogate", abs(value + 1.0) <= 1e-6, f"{value:.10f} (exact -1)")


def _check_cam_grids() -> SelfTestResult:
    errors = []
    for dimension, resolution in ((2, (16, 32)), (3, (8, 8, 16))):
        total = float(np.sum(CamGrid.build(dimension, resolution).weights))
        errors.append(abs(total - sphere_area(dimension)) / sphere_area(dimension))
    return SelfTestResult("cam grid weights", max(errors) <= 1e-10, f"max relative error {max(errors):.2e}")


def _check_cap_margin() -> SelfTestResult:
    report = check_E(spherical_cap(1.0, 0.4, 2), Cam.sphere(np.zeros(3), 0.3), Sampling(pairs=2048, directions=16))
    expected = 0.4 / 0.3 - 1.0
    passed = report.passed and abs(report.margin - expected) <= 0.05 * expected
    return SelfTestResult("cap (E) margin", passed, f"{report.margin:.4f} (expected {expected:.4f})")


def _check_funk_normalizer() -> SelfTestResult:
    hemisphere = spherical_cap(1.0, 0.05, 2)
    value = normalizer(np.array([0.2, -0.1]), Cam.point(np.zeros(3)), hemisphere, 192)
    return SelfTestResult("point-cam normalizer", abs(value - 1.0) <= 1e-3, f"{value:.6f} (expected 1)")


CHECKS: List[Callable[[], SelfTestResult]] = [
    _check_finite_part,
    _check_delta_prime,
    _check_cam_grids,
    _check_cap_margin,
    _check_funk_normalizer,
]


def run_selftest() -> List[SelfTestResult]:
    """Run every check; failures are reported, not raised."""
    results = []
    for check in CHECKS:
        try:
            result = check()
        except Exception as e:
            result = SelfTestResult(check.__name__.lstrip("_"), False, f"raised {type(e).__name__}: {e}")
        logger.debug("selftest %s: %s", result.name, result.detail)
        results.append(result)
    return results
