"""Forward transform M_Phi f, batch projection, and the thin-slab Monte Carlo oracle."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from camtomo.geometry.builder import Geometry
from camtomo.geometry.cam import CamPoint
from camtomo.geometry.surface import Hypersurface
from camtomo.slicing.slice_extractor import SurfaceGrid, slice_on_X
from camtomo.transform.cam_grid import CamGrid
from camtomo.transform.sinogram import SINOGRAM_VERSION, Sinogram
from camtomo.utils.config import DEFAULT_SEED
from camtomo.utils.errors import ConfigError, ProjectionError

logger = logging.getLogger(__name__)

SUPPORT_PADDING_CELLS = 2


@dataclass(frozen=True)
class ScalarField:
    """Function on U, identically zero outside the box [support_lo, support_hi].

    ``smoothness`` is the C^k class of the function (``inf`` for smooth bumps).
    """

    function: Callable[[np.ndarray], np.ndarray]
    support_lo: np.ndarray
    support_hi: np.ndarray
    smoothness: float = float("inf")
    is_zero: bool = False

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.is_zero:
            return np.zeros(u.shape[:-1])
        inside = np.all((u >= self.support_lo) & (u <= self.support_hi), axis=-1)
        return np.where(inside, self.function(u), 0.0)

    @classmethod
    def zeros(cls, dimension: int) -> "ScalarField":
        return cls(
            function=lambda u: np.zeros(np.shape(u)[:-1]),
            support_lo=np.zeros(dimension),
            support_hi=np.zeros(dimension),
            is_zero=True,
        )

    @property
    def dimension(self) -> int:
        return int(np.size(self.support_lo))

    def check_smoothness(self, n: int) -> None:
        """C^{n-1} for odd n, C^{n-1+eps} for even n.

        Raises:
            ConfigError: If the field is not smooth enough for the inversion branch
        """
        required = n - 1 if n % 2 else n - 1 + 1e-6
        if self.smoothness < required:
            raise ConfigError(f"field of class C^{self.smoothness} is too rough for n = {n} (needs C^{n - 1}+)")

    def padded_box(self, surface: Hypersurface, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
        """Support box padded by two grid cells, clipped to the domain rectangle."""
        pad = SUPPORT_PADDING_CELLS * surface.domain.cell_size(resolution)
        lo = np.maximum(self.support_lo - pad, surface.domain.lo)
        hi = np.minimum(self.support_hi + pad, surface.domain.hi)
        return lo, hi


def linear_combination(a: float, f: ScalarField, b: float, h: ScalarField) -> ScalarField:
    """a f + b h with the union of both support boxes."""
    if f.is_zero and h.is_zero:
        return ScalarField.zeros(f.dimension)
    boxes = [field for field in (f, h) if not field.is_zero]
    return ScalarField(
        function=lambda u: a * f(u) + b * h(u),
        support_lo=np.min([field.support_lo for field in boxes], axis=0),
        support_hi=np.max([field.support_hi for field in boxes], axis=0),
        smoothness=min(f.smoothness, h.smoothness),
    )


def forward(
    field: ScalarField,
    p: CamPoint,
    surface: Hypersurface,
    resolution: int = 256,
    grid: Optional[SurfaceGrid] = None,
) -> float:
    """M_Phi f(sigma): Leray integral of f over the slice Z(sigma).

    Args:
        field: Function on U
        p: Single cam point
        surface: The hypersurface X
        resolution: Cells per axis of the full parameter grid
        grid: Precomputed grid over the field's padded support box

    Returns:
        The slice integral (exactly 0 when the hyperplane misses the support box)

    Raises:
        ConditionViolation: Vanishing slice gradient (condition (E) fails)
    """
    if field.is_zero:
        return 0.0
    if grid is None:
        lo, hi = field.padded_box(surface, resolution)
        grid = SurfaceGrid(surface, resolution, lo, hi)
    return _slice_integral(field, p, surface, grid)[0]


def _slice_integral(
    field: ScalarField, p: CamPoint, surface: Hypersurface, grid: SurfaceGrid, warn_boundary: bool = True
) -> Tuple[float, bool]:
    """Slice integral and whether the slice touches the chart boundary."""
    slice_set = slice_on_X(p, surface, grid=grid, warn_boundary=warn_boundary)
    if slice_set.is_empty:
        return 0.0, False
    return slice_set.integrate(field(slice_set.nodes)), slice_set.touches_boundary


def project(
    field: ScalarField,
    geometry: Geometry,
    cam_grid: CamGrid,
    resolution: int = 256,
    workers: int = 1,
) -> Sinogram:
    """Forward transform at every cam grid node.

    Args:
        field: Function on U
        geometry: Cam and hypersurface
        cam_grid: Quadrature grid on S^n
        resolution: Cells per axis of the parameter grid on U
        workers: Thread count; output order is the grid order regardless

    Returns:
        Sinogram tagged with the geometry hash

    Raises:
        ProjectionError: At the first failing node, carrying its omega
    """
    surface = geometry.surface
    field.check_smoothness(surface.dimension)
    points = geometry.cam.points(cam_grid.nodes)
    meta = {
        "n": surface.dimension,
        "cam": geometry.cam.spec(),
        "surface": surface.spec(),
        "grids": {"cam": list(cam_grid.resolution), "cam_step": cam_grid.step, "surface": resolution},
        "hash": geometry.config_hash,
        "version": SINOGRAM_VERSION,
    }
    if field.is_zero:
        return Sinogram(grid=cam_grid, values=np.zeros(len(cam_grid)), meta=meta)

    lo, hi = field.padded_box(surface, resolution)
    grid = SurfaceGrid(surface, resolution, lo, hi)

    def evaluate(index: int) -> Tuple[float, bool]:
        p = points[index]
        try:
            return _slice_integral(field, p, surface, grid, warn_boundary=False)
        except Exception as e:
            raise ProjectionError(p.omega.tolist(), e)

    logger.info("Projecting onto %d cam nodes with %d worker(s)", len(cam_grid), workers)
    indices = range(len(cam_grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(evaluate, indices))
    else:
        results = [evaluate(k) for k in indices]

    touching = sum(1 for _, touches in results if touches)
    if touching:
        logger.warning("%d of %d slices touch the chart boundary", touching, len(results))
    values = np.array([value for value, _ in results])
    return Sinogram(grid=cam_grid, values=values, meta=meta)


@dataclass(frozen=True)
class SlabEstimate:
    """Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    hits: int
    eps: float
    samples: int


def thin_slab_oracle(
    field: ScalarField,
    p: CamPoint,
    surface: Hypersurface,
    eps: float = 1e-3,
    samples: int = 1_000_000,
    seed: int = DEFAULT_SEED,
    chunk: int = 250_000,
) -> SlabEstimate:
    """(1/2 eps) * integral of f sqrt(det g) du over {|phi(x(u), sigma)| <= eps}.

    Uniform samples over the support box of f (clipped to the domain).

    Raises:
        ValueError: If eps <= 0 or samples < 1
    """
    if eps <= 0.0 or samples < 1:
        raise ValueError("thin-slab oracle needs eps > 0 and at least one sample")
    if field.is_zero:
        return SlabEstimate(0.0, 0.0, 0, eps, samples)

    domain = surface.domain
    lo = np.maximum(field.support_lo, domain.lo)
    hi = np.minimum(field.support_hi, domain.hi)
    volume = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)

    total = 0.0
    total_squared = 0.0
    hits = 0
    remaining = samples
    while remaining > 0:
        size = min(chunk, remaining)
        remaining -= size
        u = lo + rng.random((size, surface.dimension)) * (hi - lo)
        level = np.einsum("...i,i->...", surface.points(u) - p.anchor, p.normal)
        in_slab = (np.abs(level) <= eps) & domain.contains(u)
        hits += int(np.count_nonzero(in_slab))
        contribution = np.zeros(size)
        if np.any(in_slab):
            u_slab = u[in_slab]
            contribution[in_slab] = field(u_slab) * surface.volume_density(u_slab)
        total += float(np.sum(contribution))
        total_squared += float(np.sum(contribution**2))

    scale = volume / (2.0 * eps)
    mean = total / samples
    variance = max(total_squared / samples - mean**2, 0.0) * samples / max(samples - 1, 1)
    return SlabEstimate(
        value=scale * mean,
        stderr=scale * float(np.sqrt(variance / samples)),
        hits=hits,
        eps=eps,
        samples=samples,
    )
