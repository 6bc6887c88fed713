"""
Spectral fields on S^4: separable analysis/synthesis, point evaluation,
diagonal operators and quadrature
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np

from config import settings
from core.errors import BlowUpError, GridMismatchError, NonUnitPointError, ResolutionError
from core.harmonics import (
    azimuthal_table,
    basis_index,
    coefficient_count,
    dense_mask,
    fourier_table,
    inner_table,
    laplacian_eigenvalues,
    paneitz_eigenvalues,
    polar_table,
)
from core.quadrature import AXIS_MASSES, SPHERE_VOLUME, QuadratureGrid, build_grid
from models.schemas import GridSpec

logger = logging.getLogger(__name__)

Scalar = Union[int, float]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients of a function on S^4 in the orthonormal (dc) harmonic basis

    The degree-0 basis element is the constant 1, so coeffs[0] is the dc-mean.
    """
    band_limit: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = _readonly(self.coeffs)
        expected = coefficient_count(self.band_limit)
        if coeffs.shape != (expected,):
            raise ValueError(f"band limit {self.band_limit} needs {expected} coefficients, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, band_limit: int) -> "SpectralField":
        return cls(band_limit, np.zeros(coefficient_count(band_limit)))

    @classmethod
    def constant(cls, value: float, band_limit: int) -> "SpectralField":
        c = np.zeros(coefficient_count(band_limit))
        c[0] = value
        return cls(band_limit, c)

    @classmethod
    def from_dense(cls, dense: np.ndarray, band_limit: int) -> "SpectralField":
        idx = basis_index(band_limit)
        return cls(band_limit, dense[idx.k, idx.j1, idx.j2, idx.m_column])

    def dense(self) -> np.ndarray:
        idx = basis_index(self.band_limit)
        out = np.zeros(idx.dense_shape())
        out[idx.k, idx.j1, idx.j2, idx.m_column] = self.coeffs
        return out

    @property
    def mean(self) -> float:
        """dc-average of the function"""
        return float(self.coeffs[0])

    @property
    def degrees(self) -> np.ndarray:
        return basis_index(self.band_limit).k

    def degree_energy(self) -> np.ndarray:
        """Sum of squared coefficients per degree"""
        return np.bincount(self.degrees, weights=self.coeffs ** 2, minlength=self.band_limit + 1)

    def padded(self, band_limit: int) -> "SpectralField":
        if band_limit < self.band_limit:
            raise ValueError("use truncated() to lower the band limit")
        c = np.zeros(coefficient_count(band_limit))
        c[: len(self.coeffs)] = self.coeffs
        return SpectralField(band_limit, c)

    def truncated(self, band_limit: int) -> "SpectralField":
        return SpectralField(band_limit, self.coeffs[: coefficient_count(band_limit)])

    def resized(self, band_limit: int) -> "SpectralField":
        if band_limit >= self.band_limit:
            return self.padded(band_limit)
        return self.truncated(band_limit)

    def trimmed(self, tol: float = 0.0) -> "SpectralField":
        """Lowest band limit keeping every degree with energy above tol"""
        energy = self.degree_energy()
        live = np.flatnonzero(energy > tol ** 2)
        top = int(live[-1]) if len(live) else 0
        return self.truncated(top)

    def shifted(self, c: float) -> "SpectralField":
        """u + c for a constant c"""
        out = self.coeffs.copy()
        out[0] += c
        return SpectralField(self.band_limit, out)

    def scaled(self, factor: float) -> "SpectralField":
        return SpectralField(self.band_limit, factor * self.coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        top = max(self.band_limit, other.band_limit)
        return SpectralField(top, self.resized(top).coeffs + other.resized(top).coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self + other.scaled(-1.0)

    def __neg__(self) -> "SpectralField":
        return self.scaled(-1.0)

    def l2_norm(self) -> float:
        """(int u^2 dc)^{1/2}"""
        return float(np.sqrt(np.sum(self.coeffs ** 2)))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return evaluate_points(self, points)


@dataclass(frozen=True, eq=False)
class GridField:
    """Nodal values on a quadrature grid"""
    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ValueError(f"grid shape {self.grid.shape} does not match values {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", values)

    def _other(self, other: Union["GridField", Scalar]) -> Union[np.ndarray, float]:
        if isinstance(other, GridField):
            if other.grid is not self.grid:
                raise GridMismatchError("grid fields live on different grids")
            return other.values
        return float(other)

    def __add__(self, other: Union["GridField", Scalar]) -> "GridField":
        return GridField(self.grid, self.values + self._other(other))

    def __sub__(self, other: Union["GridField", Scalar]) -> "GridField":
        return GridField(self.grid, self.values - self._other(other))

    def __mul__(self, other: Union["GridField", Scalar]) -> "GridField":
        return GridField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def max(self) -> float:
        return float(np.max(self.values))

    def min(self) -> float:
        return float(np.min(self.values))


@dataclass(frozen=True, eq=False)
class TransformPlan:
    """Per-axis harmonic tables of one band limit on one grid"""
    band_limit: int
    polar: np.ndarray
    azimuthal: np.ndarray
    inner: np.ndarray
    fourier: np.ndarray
    polar_w: np.ndarray
    azimuthal_w: np.ndarray
    inner_w: np.ndarray
    fourier_w: np.ndarray


@lru_cache(maxsize=32)
def transform_plan(spec: GridSpec, band_limit: int) -> TransformPlan:
    grid = build_grid(spec)
    tables = (
        polar_table(band_limit, grid.s1.nodes, grid.s1.sines),
        azimuthal_table(band_limit, grid.s2.nodes, grid.s2.sines),
        inner_table(band_limit, grid.s3.nodes, grid.s3.sines),
        fourier_table(band_limit, grid.phi.nodes),
    )
    rules = (grid.s1, grid.s2, grid.s3, grid.phi)
    weighted = tuple(
        t * (rule.weights / mass).reshape((-1,) + (1,) * (t.ndim - 1))
        for t, rule, mass in zip(tables, rules, AXIS_MASSES)
    )
    arrays = [_readonly(a) for a in tables + weighted]
    return TransformPlan(band_limit, *arrays)


def synthesize(field: SpectralField, grid: QuadratureGrid, strict: bool = True) -> GridField:
    """Nodal values of the expansion.

    With strict=False a grid of lower band limit is accepted (plain evaluation
    at its nodes, without the exactness contract).
    """
    if strict and field.band_limit > grid.band_limit:
        raise GridMismatchError(
            f"grid built for band limit {grid.band_limit} cannot carry degree {field.band_limit}"
        )
    plan = transform_plan(grid.spec, field.band_limit)
    c = field.dense()
    a = np.einsum("akj,kjlm->ajlm", plan.polar, c)
    a = np.einsum("bjl,ajlm->ablm", plan.azimuthal, a)
    a = np.einsum("clm,ablm->abcm", plan.inner, a)
    values = a @ plan.fourier.T
    return GridField(grid, values)


def analyze(field: GridField, band_limit: Optional[int] = None) -> SpectralField:
    """Project nodal values onto the basis up to `band_limit` (default: the grid's)"""
    grid = field.grid
    L = grid.band_limit if band_limit is None else band_limit
    if L > grid.band_limit:
        raise GridMismatchError(
            f"grid built for band limit {grid.band_limit} cannot analyze to degree {L}"
        )
    plan = transform_plan(grid.spec, L)
    b = field.values @ plan.fourier_w
    b = np.einsum("clm,abcm->ablm", plan.inner_w, b)
    b = np.einsum("bjl,ablm->ajlm", plan.azimuthal_w, b)
    c = np.einsum("akj,ajlm->kjlm", plan.polar_w, b)
    c = np.where(dense_mask(L), c, 0.0)
    result = SpectralField.from_dense(c, L)
    if settings.debug_corrupt_ordering and L >= 2:
        result = _corrupt_ordering(result)
    return result


def _corrupt_ordering(field: SpectralField) -> SpectralField:
    # swaps the first degree-1 slot with the first degree-2 slot
    c = field.coeffs.copy()
    c[[1, 6]] = c[[6, 1]]
    return SpectralField(field.band_limit, c)


def _axis_samples(points: np.ndarray) -> Tuple[np.ndarray, ...]:
    x1, x2, x3, x4, x5 = (points[:, i] for i in range(5))
    r2sq = x1 * x1 + x2 * x2 + x3 * x3
    r1 = np.sqrt(r2sq + x4 * x4)
    r2 = np.sqrt(r2sq)
    rho = np.hypot(x1, x2)
    with np.errstate(invalid="ignore", divide="ignore"):
        s2 = np.where(r1 > 0, x4 / np.where(r1 > 0, r1, 1.0), 1.0)
        c2 = np.where(r1 > 0, r2 / np.where(r1 > 0, r1, 1.0), 0.0)
        s3 = np.where(r2 > 0, x3 / np.where(r2 > 0, r2, 1.0), 1.0)
        c3 = np.where(r2 > 0, rho / np.where(r2 > 0, r2, 1.0), 0.0)
    s1 = np.clip(x5, -1.0, 1.0)
    phi = np.arctan2(x2, x1)
    return s1, r1, s2, c2, s3, c3, phi


def check_unit(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[-1] != 5:
        raise NonUnitPointError(f"points must be 5-vectors, got shape {pts.shape}")
    err = np.abs(np.sum(pts * pts, axis=1) - 1.0)
    if np.any(err > 2 * tol):
        raise NonUnitPointError(f"point off the unit sphere by {float(np.max(err)):.3e}")
    return pts


def evaluate_points(field: SpectralField, points: np.ndarray, chunk: int = 2048,
                    tol: float = 1e-12) -> np.ndarray:
    """Evaluate the expansion at arbitrary unit vectors, shape (M, 5) -> (M,)"""
    pts = check_unit(points, tol)
    L = field.band_limit
    c = field.dense()
    n = L + 1
    # (j1, k, j2 * m) so that each j1 slice is one matmul
    c_by_j1 = np.ascontiguousarray(c.transpose(1, 0, 2, 3).reshape(n, n, -1))
    out = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        s1, c1, s2, c2, s3, c3, phi = _axis_samples(pts[start:start + chunk])
        p1 = polar_table(L, s1, c1)
        p2 = azimuthal_table(L, s2, c2)
        p3 = inner_table(L, s3, c3)
        t = fourier_table(L, phi)
        d = np.matmul(np.ascontiguousarray(p1.transpose(2, 0, 1)), c_by_j1)
        d = d.reshape(n, len(s1), n, -1)
        e = np.einsum("pjl,jplm->plm", p2, d)
        g = np.einsum("plm,plm->pm", p3, e)
        out[start:start + chunk] = np.einsum("pm,pm->p", g, t)
    return out


def evaluate_at(field: SpectralField, point: np.ndarray) -> float:
    """Value at a single unit vector"""
    return float(evaluate_points(field, np.asarray(point, dtype=np.float64)[None, :])[0])


def apply_laplacian(field: SpectralField, convention: Optional[str] = None) -> SpectralField:
    """Laplace-Beltrami: degree k scaled by -k(k+3) (sign flipped under 'nonnegative')"""
    conv = convention or settings.laplacian_convention
    return SpectralField(field.band_limit, field.coeffs * laplacian_eigenvalues(field.band_limit, conv))


def apply_paneitz(field: SpectralField) -> SpectralField:
    """Round Paneitz operator: degree k scaled by k(k+1)(k+2)(k+3)"""
    return SpectralField(field.band_limit, field.coeffs * paneitz_eigenvalues(field.band_limit))


def integrate(field: GridField) -> float:
    """Integral against dv_c"""
    return float(np.sum(field.values * field.grid.weights))


def average(field: GridField) -> float:
    """Integral against dc = dv_c / (8 pi^2 / 3)"""
    return integrate(field) / SPHERE_VOLUME


def pointwise_exp_product(u: GridField, scale: float) -> GridField:
    """Nodewise e^{scale * u}; raises BlowUpError past the overflow limit"""
    exponent = scale * u.values
    top = float(np.max(exponent))
    if top > settings.exp_overflow_limit:
        raise BlowUpError(f"exponent {top:.1f} exceeds {settings.exp_overflow_limit}")
    return GridField(u.grid, np.exp(exponent))


def tail_fraction(field: GridField, band_limit: int) -> float:
    """Fraction of the mean-square energy above degree `band_limit` (Parseval gap)"""
    # the fraction is scale invariant; e^{4u} near the overflow limit cannot be squared as is
    peak = float(np.max(np.abs(field.values)))
    if peak == 0.0:
        return 0.0
    scaled = field * (1.0 / peak)
    energy = average(scaled * scaled)
    if energy <= 0.0:
        return 0.0
    captured = float(np.sum(analyze(scaled, band_limit).coeffs ** 2))
    return max(0.0, energy - captured) / energy


def monitor_tail(field: GridField, band_limit: int, tail_tol: Optional[float] = None,
                 label: str = "e^{4u}") -> float:
    """Tail energy check used after every nonlinear evaluation"""
    tol = settings.tail_tol if tail_tol is None else tail_tol
    tail = tail_fraction(field, band_limit)
    if tail > settings.tail_abort:
        raise ResolutionError(f"tail energy of {label} is {tail:.3e} > {settings.tail_abort:.1e}")
    if tail > tol:
        logger.warning(f"Resolution warning: tail energy of {label} is {tail:.3e} > {tol:.1e}")
    return tail


def project_function(fn: Callable[..., np.ndarray], band_limit: int,
                     oversample: int = 1) -> SpectralField:
    """Analyze fn(x1, ..., x5) evaluated on the grid of `band_limit`"""
    grid = build_grid(GridSpec(band_limit=max(band_limit, 4), oversample=oversample))
    values = np.broadcast_to(np.asarray(fn(*grid.coordinates), dtype=np.float64), grid.shape)
    return analyze(GridField(grid, np.array(values)), band_limit)


def coordinate_field(i: int, band_limit: int = 1) -> SpectralField:
    """The coordinate function x_i (1-based) as a degree-1 field"""
    if not 1 <= i <= 5:
        raise ValueError("coordinate index is 1..5")
    return project_function(lambda *x: x[i - 1], max(band_limit, 1))


def grid_for(band_limit: int, oversample: Optional[int] = None) -> QuadratureGrid:
    return build_grid(GridSpec(band_limit=max(band_limit, 4),
                               oversample=settings.oversample if oversample is None else oversample))


def random_field(band_limit: int, amplitude: float, rng: np.random.Generator,
                 max_degree: Optional[int] = None) -> SpectralField:
    """Coefficients uniform in [-amplitude, amplitude] up to max_degree"""
    top = band_limit if max_degree is None else min(max_degree, band_limit)
    c = np.zeros(coefficient_count(band_limit))
    n = coefficient_count(top)
    c[:n] = rng.uniform(-amplitude, amplitude, size=n)
    return SpectralField(band_limit, c)


def random_factor(band_limit: int, rms: float, rng: np.random.Generator,
                  max_degree: Optional[int] = None) -> SpectralField:
    """Mean-zero random field rescaled to (int u^2 dc)^{1/2} = rms"""
    c = random_field(band_limit, 1.0, rng, max_degree).coeffs.copy()
    c[0] = 0.0
    norm = float(np.sqrt(np.sum(c ** 2)))
    if norm > 0.0:
        c *= rms / norm
    return SpectralField(band_limit, c)


