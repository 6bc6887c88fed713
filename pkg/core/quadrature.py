"""
Product Gauss quadrature on the unit round S^4

Coordinates: x5 = cos t1, x4 = sin t1 cos t2, x3 = sin t1 sin t2 cos t3,
x1 = sin t1 sin t2 sin t3 cos p, x2 = sin t1 sin t2 sin t3 sin p.
With s_i = cos t_i the volume form is
dv_c = (1 - s1^2) ds1 * (1 - s2^2)^{1/2} ds2 * ds3 * dp,
so each axis gets a Gauss rule for its own weight and p gets the uniform rule.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from core.errors import ConfigurationError
from models.schemas import GridSpec

logger = logging.getLogger(__name__)

# Per-axis total masses: 4/3 * pi/2 * 2 * 2pi = 8 pi^2 / 3
AXIS_MASSES: Tuple[float, float, float, float] = (4.0 / 3.0, math.pi / 2.0, 2.0, 2.0 * math.pi)
SPHERE_VOLUME = 8.0 * math.pi ** 2 / 3.0
S3_AREA = 2.0 * math.pi ** 2


@dataclass(frozen=True)
class AxisRule:
    """Nodes and weights of a 1-D rule"""
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def sines(self) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - self.nodes ** 2, 0.0, None))


def polar_rule(n: int) -> AxisRule:
    """Gauss-Jacobi rule for weight (1 - s^2) on [-1, 1]"""
    x, w = roots_jacobi(n, 1.0, 1.0)
    return AxisRule(_frozen(x), _frozen(w))


def azimuthal_rule(n: int) -> AxisRule:
    """Gauss rule for weight (1 - s^2)^{1/2} (Chebyshev of the second kind)"""
    x, w = roots_jacobi(n, 0.5, 0.5)
    return AxisRule(_frozen(x), _frozen(w))


def legendre_rule(n: int) -> AxisRule:
    x, w = roots_legendre(n)
    return AxisRule(_frozen(x), _frozen(w))


def circle_rule(n: int) -> AxisRule:
    """Uniform rule on [0, 2pi); exact for trigonometric degree < n"""
    phi = 2.0 * math.pi * np.arange(n) / n
    return AxisRule(_frozen(phi), _frozen(np.full(n, 2.0 * math.pi / n)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def axis_node_count(spec: GridSpec) -> int:
    return spec.oversample * (spec.band_limit + 1)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor-product grid with an exactness contract for band limit `band_limit`

    Values living on the grid are 4-D arrays of shape `shape`, axes ordered
    (s1, s2, s3, phi); flattening in C order matches `nodes`.
    """
    spec: GridSpec
    s1: AxisRule
    s2: AxisRule
    s3: AxisRule
    phi: AxisRule

    @property
    def band_limit(self) -> int:
        return self.spec.band_limit

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return (len(self.s1.nodes), len(self.s2.nodes), len(self.s3.nodes), len(self.phi.nodes))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def exact_degree(self) -> int:
        """Largest per-axis polynomial degree integrated exactly"""
        return 2 * len(self.s1.nodes) - 1

    @cached_property
    def weights(self) -> np.ndarray:
        """dv_c weights on the grid, shape `shape`, summing to 8 pi^2 / 3"""
        w = np.einsum("a,b,c,d->abcd", self.s1.weights, self.s2.weights,
                      self.s3.weights, self.phi.weights)
        return _frozen(w)

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """(x1, ..., x5) as full grid-shaped arrays"""
        s1 = self.s1.nodes[:, None, None, None]
        c1 = self.s1.sines[:, None, None, None]
        s2 = self.s2.nodes[None, :, None, None]
        c2 = self.s2.sines[None, :, None, None]
        s3 = self.s3.nodes[None, None, :, None]
        c3 = self.s3.sines[None, None, :, None]
        phi = self.phi.nodes[None, None, None, :]
        shape = self.shape
        x5 = np.broadcast_to(s1, shape)
        x4 = np.broadcast_to(c1 * s2, shape)
        x3 = np.broadcast_to(c1 * c2 * s3, shape)
        x1 = c1 * c2 * c3 * np.cos(phi)
        x2 = c1 * c2 * c3 * np.sin(phi)
        return tuple(_frozen(np.array(a)) for a in (x1, x2, x3, x4, x5))

    @cached_property
    def nodes(self) -> np.ndarray:
        """Unit vectors, shape (size, 5), C order of the grid axes"""
        return _frozen(np.stack([c.reshape(-1) for c in self.coordinates], axis=1))

    def node_at(self, flat_index: int) -> np.ndarray:
        """Unit vector of one node without materializing `nodes`"""
        a, b, c, d = (int(i) for i in np.unravel_index(int(flat_index), self.shape))
        s1, c1 = self.s1.nodes[a], self.s1.sines[a]
        s2, c2 = self.s2.nodes[b], self.s2.sines[b]
        s3, c3 = self.s3.nodes[c], self.s3.sines[c]
        phi = self.phi.nodes[d]
        r = c1 * c2 * c3
        return np.array([r * math.cos(phi), r * math.sin(phi), c1 * c2 * s3, c1 * s2, s1])


@lru_cache(maxsize=16)
def build_grid(spec: GridSpec, n_axis: Optional[int] = None) -> QuadratureGrid:
    """Build the product grid for `spec`.

    Each axis gets `oversample * (L + 1)` nodes (exact to per-axis degree
    2L + 1 at oversample 1) and phi gets twice as many.
    """
    required = spec.band_limit + 1
    n = axis_node_count(spec) if n_axis is None else n_axis
    if n < required:
        raise ConfigurationError(
            f"{n} nodes per axis cannot integrate degree {2 * spec.band_limit + 1} exactly "
            f"(band limit {spec.band_limit} needs {required})"
        )
    grid = QuadratureGrid(
        spec=spec,
        s1=polar_rule(n),
        s2=azimuthal_rule(n),
        s3=legendre_rule(n),
        phi=circle_rule(2 * n),
    )
    logger.debug(f"Built grid L={spec.band_limit} oversample={spec.oversample} shape={grid.shape}")
    return grid


@lru_cache(maxsize=8)
def s3_directions(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Product rule on the unit S^3 in R^4.

    Returns (directions (N, 4), weights (N,)) with weights summing to 1, exact
    for polynomials of degree <= 2 * order - 1.
    """
    r2 = azimuthal_rule(order)
    r3 = legendre_rule(order)
    rp = circle_rule(2 * order)
    s2 = r2.nodes[:, None, None]
    c2 = r2.sines[:, None, None]
    s3 = r3.nodes[None, :, None]
    c3 = r3.sines[None, :, None]
    phi = rp.nodes[None, None, :]
    shape = (order, order, 2 * order)
    d4 = np.broadcast_to(s2, shape)
    d3 = np.broadcast_to(c2 * s3, shape)
    d1 = c2 * c3 * np.cos(phi)
    d2 = c2 * c3 * np.sin(phi)
    dirs = np.stack([np.asarray(a).reshape(-1) for a in (d1, d2, d3, d4)], axis=1)
    w = np.einsum("a,b,c->abc", r2.weights, r3.weights, rp.weights).reshape(-1)
    return _frozen(dirs), _frozen(w / w.sum())
