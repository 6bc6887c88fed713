"""
Hyperspherical harmonics on S^4

A basis element of degree k is labelled (k, j1, j2, m) with
k >= j1 >= j2 >= |m| and factors

    P1(s1) = sin1^j1 C_{k-j1}^{(j1+3/2)}(s1)
    P2(s2) = sin2^j2 C_{j1-j2}^{(j2+1)}(s2)
    P3(s3) = sin3^|m| C_{j2-|m|}^{(|m|+1/2)}(s3)
    T(p)   = 1, sqrt(2) cos(m p) for m > 0, sqrt(2) sin(|m| p) for m < 0

Each factor is scaled to unit mean square against its normalized axis
measure, so the product is orthonormal for dc = dv_c / (8 pi^2 / 3).

Canonical ordering (frozen in the snapshot format): k ascending, then j1
ascending, then j2 ascending, then m ascending from -j2 to j2.
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import eval_gegenbauer

from core.quadrature import AXIS_MASSES, azimuthal_rule, legendre_rule, polar_rule


def degree_dimension(k: int) -> int:
    """N_k = (k+1)(k+2)(2k+3)/6"""
    return (k + 1) * (k + 2) * (2 * k + 3) // 6


def coefficient_count(band_limit: int) -> int:
    return sum(degree_dimension(k) for k in range(band_limit + 1))


@dataclass(frozen=True)
class BasisIndex:
    """Canonical labels of the basis up to a band limit"""
    band_limit: int
    k: np.ndarray
    j1: np.ndarray
    j2: np.ndarray
    m: np.ndarray

    @property
    def size(self) -> int:
        return len(self.k)

    @property
    def m_column(self) -> np.ndarray:
        """Column of the Fourier factor in the dense layout"""
        return self.m + self.band_limit

    def dense_shape(self) -> Tuple[int, int, int, int]:
        n = self.band_limit + 1
        return (n, n, n, 2 * self.band_limit + 1)

    def position(self, k: int, j1: int, j2: int, m: int) -> int:
        """Flat canonical position of one label"""
        hits = np.flatnonzero((self.k == k) & (self.j1 == j1) & (self.j2 == j2) & (self.m == m))
        if len(hits) != 1:
            raise KeyError(f"no basis element ({k}, {j1}, {j2}, {m}) at band limit {self.band_limit}")
        return int(hits[0])


@lru_cache(maxsize=32)
def basis_index(band_limit: int) -> BasisIndex:
    labels = [
        (k, j1, j2, m)
        for k in range(band_limit + 1)
        for j1 in range(k + 1)
        for j2 in range(j1 + 1)
        for m in range(-j2, j2 + 1)
    ]
    arr = np.array(labels, dtype=np.int64).reshape(-1, 4)
    cols = []
    for i in range(4):
        col = np.ascontiguousarray(arr[:, i])
        col.setflags(write=False)
        cols.append(col)
    return BasisIndex(band_limit, *cols)


@lru_cache(maxsize=32)
def dense_mask(band_limit: int) -> np.ndarray:
    n = band_limit + 1
    k = np.arange(n)[:, None, None, None]
    j1 = np.arange(n)[None, :, None, None]
    j2 = np.arange(n)[None, None, :, None]
    m = np.arange(-band_limit, band_limit + 1)[None, None, None, :]
    mask = (j1 <= k) & (j2 <= j1) & (np.abs(m) <= j2)
    mask.setflags(write=False)
    return mask


def _raw_factor(n: np.ndarray, lam: np.ndarray, power: np.ndarray,
                s: np.ndarray, sine: np.ndarray) -> np.ndarray:
    """sine^power * C_n^{(lam)}(s), broadcasting over leading sample axis"""
    c = eval_gegenbauer(n, lam, s)
    return np.power(sine, power) * c


@dataclass(frozen=True)
class FactorNorms:
    """Root-mean-square of each raw factor against its normalized axis measure"""
    polar: np.ndarray      # [k, j1]
    azimuthal: np.ndarray  # [j1, j2]
    inner: np.ndarray      # [j2, mu]


@lru_cache(maxsize=32)
def factor_norms(band_limit: int) -> FactorNorms:
    n = band_limit + 1
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    valid = b <= a
    deg = np.where(valid, a - b, 0)
    norms = []
    for rule, shift, mass in (
        (polar_rule(n), 1.5, AXIS_MASSES[0]),
        (azimuthal_rule(n), 1.0, AXIS_MASSES[1]),
        (legendre_rule(n), 0.5, AXIS_MASSES[2]),
    ):
        s = rule.nodes[:, None, None]
        sine = rule.sines[:, None, None]
        vals = _raw_factor(deg[None], b[None] + shift, b[None], s, sine)
        ms = np.einsum("q,qab->ab", rule.weights, vals ** 2) / mass
        norm = np.where(valid, np.sqrt(ms), 1.0)
        norm.setflags(write=False)
        norms.append(norm)
    return FactorNorms(*norms)


def polar_table(band_limit: int, s: np.ndarray, sine: np.ndarray) -> np.ndarray:
    """Normalized P1 values, shape (len(s), L+1 [k], L+1 [j1]); zero where j1 > k"""
    n = band_limit + 1
    k, j1 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    valid = j1 <= k
    vals = _raw_factor(np.where(valid, k - j1, 0)[None], (j1 + 1.5)[None], j1[None],
                       s[:, None, None], sine[:, None, None])
    return np.where(valid[None], vals / factor_norms(band_limit).polar[None], 0.0)


def azimuthal_table(band_limit: int, s: np.ndarray, sine: np.ndarray) -> np.ndarray:
    """Normalized P2 values, shape (len(s), L+1 [j1], L+1 [j2])"""
    n = band_limit + 1
    j1, j2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    valid = j2 <= j1
    vals = _raw_factor(np.where(valid, j1 - j2, 0)[None], (j2 + 1.0)[None], j2[None],
                       s[:, None, None], sine[:, None, None])
    return np.where(valid[None], vals / factor_norms(band_limit).azimuthal[None], 0.0)


def inner_table(band_limit: int, s: np.ndarray, sine: np.ndarray) -> np.ndarray:
    """Normalized P3 values, shape (len(s), L+1 [j2], 2L+1 [m column])"""
    n = band_limit + 1
    j2 = np.arange(n)[:, None]
    mu = np.abs(np.arange(-band_limit, band_limit + 1))[None, :]
    valid = mu <= j2
    norms = factor_norms(band_limit).inner
    mu_c = np.minimum(mu, j2)
    vals = _raw_factor(np.where(valid, j2 - mu, 0)[None], (mu + 0.5)[None], mu[None],
                       s[:, None, None], sine[:, None, None])
    scale = norms[j2, mu_c]
    return np.where(valid[None], vals / scale[None], 0.0)


def fourier_table(band_limit: int, phi: np.ndarray) -> np.ndarray:
    """Normalized T values, shape (len(phi), 2L+1 [m column])"""
    m = np.arange(-band_limit, band_limit + 1)[None, :]
    p = phi[:, None]
    root2 = math.sqrt(2.0)
    return np.where(m > 0, root2 * np.cos(m * p),
                    np.where(m < 0, root2 * np.sin(-m * p), 1.0))


def eigen_degrees(band_limit: int) -> np.ndarray:
    """Degree k of every coefficient in canonical order"""
    return basis_index(band_limit).k


def laplacian_eigenvalues(band_limit: int, convention: str = "beltrami") -> np.ndarray:
    k = eigen_degrees(band_limit).astype(np.float64)
    values = -k * (k + 3.0)
    return -values if convention == "nonnegative" else values


def paneitz_eigenvalues(band_limit: int) -> np.ndarray:
    k = eigen_degrees(band_limit).astype(np.float64)
    return k * (k + 1.0) * (k + 2.0) * (k + 3.0)
