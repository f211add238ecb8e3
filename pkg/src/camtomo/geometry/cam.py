"""The cam: an ellipsoid Sigma = {q = 1} or a one-point cam, and the generating function Phi."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from camtomo.utils.errors import GeometryError

logger = logging.getLogger(__name__)

ELLIPSOID = "ellipsoid"
POINT = "point"

# r = 2 - 2 q(e); q is normalised so that q(e) = 0
INCIDENCE_CONSTANT = 2.0


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def principal_inverse_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Principal A^{-1/2} of an SPD matrix, returned exactly symmetric."""
    eigenvalues, vectors = np.linalg.eigh(matrix)
    root = (vectors * eigenvalues ** -0.5) @ vectors.T
    return (root + root.T) / 2.0


@dataclass(frozen=True)
class CamPoint:
    """A point of the cam, parametrized by omega on the unit sphere S^n.

    For an ellipsoid ``sigma = e + B omega`` and ``normal = grad q(sigma)``.
    For a point cam ``sigma`` is None and ``normal = omega``. Fields may hold
    stacked arrays (leading axes) for vectorized evaluation.
    """

    omega: np.ndarray
    sigma: Optional[np.ndarray]
    normal: np.ndarray
    density: float
    anchor: np.ndarray

    def __len__(self) -> int:
        return 1 if self.omega.ndim == 1 else self.omega.shape[0]

    def __getitem__(self, index: int) -> "CamPoint":
        if self.omega.ndim == 1:
            raise TypeError("single cam point is not indexable")
        return CamPoint(
            omega=self.omega[index],
            sigma=None if self.sigma is None else self.sigma[index],
            normal=self.normal[index],
            density=self.density,
            anchor=self.anchor[index] if self.anchor.ndim > 1 else self.anchor,
        )


@dataclass(frozen=True)
class Cam:
    """Ellipsoidal cam ``q(s) = <A(s-e), s-e> = 1`` or a one-point cam at ``e``.

    ``frame`` is a matrix B with B B^T = A^{-1}; the cam is parametrized by
    ``sigma(omega) = e + B omega``. The default frame is the principal root.
    """

    center: np.ndarray
    matrix: Optional[np.ndarray] = None
    frame: Optional[np.ndarray] = None
    variant: str = ELLIPSOID

    def __post_init__(self) -> None:
        center = _frozen(self.center)
        if center.ndim != 1 or center.size < 3:
            raise GeometryError("cam center must be a point of E^{n+1} with n >= 2")
        object.__setattr__(self, "center", center)

        if self.variant == POINT:
            object.__setattr__(self, "matrix", None)
            object.__setattr__(self, "frame", None)
            return
        if self.variant != ELLIPSOID:
            raise GeometryError(f"unknown cam variant: {self.variant}")
        if self.matrix is None:
            raise GeometryError("ellipsoid cam requires a matrix")

        matrix = np.array(self.matrix, dtype=float)
        if matrix.shape != (center.size, center.size):
            raise GeometryError(f"cam matrix must be {center.size}x{center.size}")
        asymmetry = np.max(np.abs(matrix - matrix.T))
        if asymmetry > 1e-12 * max(1.0, np.max(np.abs(matrix))):
            raise GeometryError(f"cam matrix is not symmetric (|A - A^T| = {asymmetry:.3e})")
        matrix = (matrix + matrix.T) / 2.0
        smallest = np.linalg.eigvalsh(matrix)[0]
        if smallest <= 0.0:
            raise GeometryError(f"cam matrix is not positive definite (min eigenvalue {smallest:.3e})")

        if self.frame is None:
            frame = principal_inverse_sqrt(matrix)
        else:
            frame = np.array(self.frame, dtype=float)
            defect = frame @ frame.T @ matrix - np.eye(center.size)
            if np.max(np.abs(defect)) > 1e-10:
                raise GeometryError("cam frame B does not satisfy B B^T = A^{-1}")

        object.__setattr__(self, "matrix", _frozen(matrix))
        object.__setattr__(self, "frame", _frozen(frame))

    @classmethod
    def sphere(cls, center: Any, radius: float) -> "Cam":
        """Spherical cam of the given radius."""
        if radius <= 0:
            raise GeometryError("cam radius must be positive")
        center = np.asarray(center, dtype=float)
        return cls(center=center, matrix=np.eye(center.size) / radius**2)

    @classmethod
    def point(cls, center: Any) -> "Cam":
        """One-point cam (classical Funk case)."""
        return cls(center=np.asarray(center, dtype=float), variant=POINT)

    @property
    def is_point(self) -> bool:
        return self.variant == POINT

    @property
    def ambient_dimension(self) -> int:
        return int(self.center.size)

    @property
    def dimension(self) -> int:
        """Dimension n of the parameter sphere S^n."""
        return self.ambient_dimension - 1

    @property
    def normal_matrix(self) -> np.ndarray:
        """Matrix M with grad q(sigma(omega)) = M omega (identity for a point cam)."""
        if self.is_point:
            return np.eye(self.ambient_dimension)
        return 2.0 * self.matrix @ self.frame

    @property
    def density(self) -> float:
        """Density of dSigma = dV/dq with respect to the S^n volume element."""
        if self.is_point:
            return 1.0
        return float(abs(np.linalg.det(self.frame)) / 2.0)

    def q(self, points: np.ndarray) -> np.ndarray:
        """Quadratic form q(s) = <A(s-e), s-e>."""
        self._require_ellipsoid("q")
        d = np.asarray(points, dtype=float) - self.center
        return np.einsum("...i,ij,...j->...", d, self.matrix, d)

    def grad_q(self, points: np.ndarray) -> np.ndarray:
        """Gradient 2A(s-e)."""
        self._require_ellipsoid("grad q")
        return 2.0 * (np.asarray(points, dtype=float) - self.center) @ self.matrix

    def sigma(self, omega: np.ndarray) -> np.ndarray:
        """Cam point sigma(omega) = e + B omega."""
        self._require_ellipsoid("sigma")
        return self.center + np.asarray(omega, dtype=float) @ self.frame.T

    def points(self, omega: np.ndarray) -> CamPoint:
        """Cam points for one omega or a stack of them.

        Args:
            omega: Unit vectors of shape (n+1,) or (m, n+1)

        Returns:
            CamPoint (possibly stacked)
        """
        omega = np.asarray(omega, dtype=float)
        if omega.shape[-1] != self.ambient_dimension:
            raise GeometryError(f"omega must have {self.ambient_dimension} components")
        norms = np.linalg.norm(omega, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise GeometryError("cam parameters must be unit vectors")
        normal = omega @ self.normal_matrix.T
        if self.is_point:
            return CamPoint(omega=omega, sigma=None, normal=normal, density=1.0, anchor=self.center)
        sigma = self.sigma(omega)
        return CamPoint(omega=omega, sigma=sigma, normal=normal, density=self.density, anchor=sigma)

    def point_at(self, omega: np.ndarray) -> CamPoint:
        """Single cam point."""
        return self.points(np.asarray(omega, dtype=float).reshape(-1))

    def spec(self) -> Dict[str, Any]:
        """Serializable description used for config hashing."""
        if self.is_point:
            return {"variant": POINT, "center": self.center.tolist()}
        return {
            "variant": ELLIPSOID,
            "center": self.center.tolist(),
            "matrix": self.matrix.tolist(),
            "frame": self.frame.tolist(),
        }

    def _require_ellipsoid(self, what: str) -> None:
        if self.is_point:
            raise GeometryError(f"{what} is undefined for a point cam")


def phi(x: np.ndarray, cam: Cam, p: CamPoint) -> np.ndarray:
    """Generating function Phi(x, sigma) = <x - sigma, grad q(sigma)>.

    For the point cam Phi(x, omega) = <x - e, omega>. Broadcasts over stacked
    points and stacked cam points.
    """
    return np.einsum("...i,...i->...", np.asarray(x, dtype=float) - p.anchor, p.normal)


def phi_prime(x: np.ndarray, cam: Cam, p: CamPoint) -> np.ndarray:
    """Linear-in-sigma generating function <x - e, grad q(sigma)> - r, r = 2.

    Raises:
        GeometryError: For a point cam
    """
    if cam.is_point:
        raise GeometryError("phi_prime is defined for ellipsoidal cams only")
    return np.einsum("...i,...i->...", np.asarray(x, dtype=float) - cam.center, p.normal) - INCIDENCE_CONSTANT


def cam_measure_density(p: CamPoint) -> float:
    """Density of dSigma relative to the S^n volume element (det(A)^{-1/2}/2 for an ellipsoid)."""
    return p.density


def incidence_coefficients(x: np.ndarray, cam: Cam) -> Tuple[np.ndarray, float]:
    """Coefficients (a, b) with Phi(x, sigma(omega)) = <a, omega> - b on S^n."""
    d = np.asarray(x, dtype=float) - cam.center
    if cam.is_point:
        return d, 0.0
    return 2.0 * d @ cam.matrix @ cam.frame, INCIDENCE_CONSTANT


def phi_omega_gradient(x: np.ndarray, cam: Cam, omega: np.ndarray) -> np.ndarray:
    """Ambient gradient of omega -> Phi(x, sigma(omega)).

    Only its component tangent to S^n is meaningful.
    """
    a, _ = incidence_coefficients(x, cam)
    omega = np.asarray(omega, dtype=float)
    if cam.is_point:
        return np.broadcast_to(a, omega.shape).copy()
    return a - 2.0 * INCIDENCE_CONSTANT * omega


def grad_x_phi_cotangent_norm(u: np.ndarray, surface: Any, cam: Cam, p: CamPoint) -> np.ndarray:
    """Riemannian norm |d_x Phi|_g of the covector v_i = <dx/du_i, grad q(sigma)>.

    Args:
        u: Surface parameter(s), shape (..., n)
        surface: Hypersurface providing ``jacobian`` and ``metric``
        cam: The cam
        p: Cam point(s), broadcast against u

    Returns:
        sqrt(v^T g(u)^{-1} v)
    """
    jacobian = surface.jacobian(u)
    covector = np.einsum("...ki,...k->...i", jacobian, p.normal)
    metric = surface.metric(u)
    lead = np.broadcast_shapes(metric.shape[:-2], covector.shape[:-1])
    metric = np.broadcast_to(metric, lead + metric.shape[-2:])
    covector = np.broadcast_to(covector, lead + covector.shape[-1:])
    solved = np.linalg.solve(metric, covector[..., None])[..., 0]
    value = np.einsum("...i,...i->...", covector, solved)
    return np.sqrt(np.maximum(value, 0.0))
