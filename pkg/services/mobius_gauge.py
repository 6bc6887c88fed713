"""
Moebius boosts acting on conformal factors, the center of mass, and the
normalization int x dv_h = 0 of the gauged flow.

Rotations are not part of the gauge: the center of mass fixes only the five
boost parameters.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import settings
from core.errors import GaugeFailure, ResolutionError
from core.geometry import NORTH
from core.harmonics import laplacian_eigenvalues
from core.quadrature import SPHERE_VOLUME, QuadratureGrid
from core.spectral import GridField, SpectralField, analyze, average, grid_for, synthesize
from services.conformal_ops import liouville_energy, volume

logger = logging.getLogger(__name__)

TAIL_ENERGY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class MobiusBoost:
    """Conformal diffeomorphism with pole p and boost parameter t

    phi(x) = [(sinh t + cosh t <x,p>) p + (x - <x,p> p)] / (cosh t + sinh t <x,p>)
    For t > 0 points move toward p and e^{4 w} dv_c concentrates at -p.
    """
    pole: np.ndarray
    t: float

    def __post_init__(self) -> None:
        p = np.array(self.pole, dtype=np.float64)
        if p.shape != (5,) or abs(np.linalg.norm(p) - 1.0) > 1e-12:
            raise ValueError(f"pole must be a unit 5-vector, got {self.pole}")
        if not math.isfinite(self.t):
            raise ValueError("boost parameter must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "pole", p)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def identity(cls) -> "MobiusBoost":
        return cls(NORTH.copy(), 0.0)

    @classmethod
    def from_ball(cls, a: np.ndarray) -> "MobiusBoost":
        """a = tanh(t) p in the open unit ball"""
        a = np.asarray(a, dtype=np.float64)
        r = float(np.linalg.norm(a))
        if r == 0.0:
            return cls.identity()
        if r >= 1.0:
            raise ValueError(f"|a| = {r} is outside the open unit ball")
        return cls(a / r, math.atanh(r))

    @property
    def ball_vector(self) -> np.ndarray:
        return math.tanh(self.t) * self.pole

    @property
    def is_identity(self) -> bool:
        return self.t == 0.0

    def inverse(self) -> "MobiusBoost":
        return MobiusBoost(self.pole, -self.t)

    def then(self, other: "MobiusBoost") -> "MobiusBoost":
        """Composition for boosts sharing a pole: (p, t1) then (p, t2) = (p, t1 + t2)"""
        if other.is_identity:
            return self
        if self.is_identity:
            return other
        if not np.allclose(self.pole, other.pole, atol=1e-12):
            raise ValueError("only boosts along the same pole compose in closed form")
        return MobiusBoost(self.pole, self.t + other.t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(points)
        if self.is_identity:
            return x.copy()
        ch, sh = math.cosh(self.t), math.sinh(self.t)
        s = x @ self.pole
        num = (sh + ch * s)[:, None] * self.pole[None, :] + (x - s[:, None] * self.pole[None, :])
        return num / (ch + sh * s)[:, None]

    def log_factor(self, points: np.ndarray) -> np.ndarray:
        """w(x) = 1/4 log det(d phi) = -log(cosh t + sinh t <x,p>)"""
        x = np.atleast_2d(points)
        if self.is_identity:
            return np.zeros(len(x))
        s = x @ self.pole
        return -np.log(math.cosh(self.t) + math.sinh(self.t) * s)

    def describe(self) -> str:
        p = ", ".join(f"{c:.6f}" for c in self.pole)
        return f"pole=({p}) t={self.t:.10g}"


@dataclass(frozen=True, eq=False)
class GaugeResult:
    v: SpectralField
    boost: MobiusBoost
    com_norm_after: float
    com_norm_before: float
    iterations: int
    energy_residual: float
    # Newton residual of the exact pullback; com_norm_after is measured on the truncated v
    com_norm_solved: float = 0.0


@dataclass(frozen=True)
class GaugeDiagnostics:
    mean_v: float
    jensen_ok: bool
    h1_norm: float


def gauge_grid(band_limit: int) -> QuadratureGrid:
    return grid_for(band_limit, oversample=settings.gauge_oversample)


def boost_factor(boost: MobiusBoost, band_limit: int) -> SpectralField:
    """w_b analyzed to `band_limit`"""
    grid = grid_for(band_limit)
    values = boost.log_factor(grid.nodes).reshape(grid.shape)
    return analyze(GridField(grid, values), band_limit)


def boost_apply(u: SpectralField, boost: MobiusBoost, tail_tol: Optional[float] = None) -> SpectralField:
    """v = u o phi_b + w_b, analyzed back to the band limit of u.

    u o phi_b is evaluated pointwise at the images of the gauge grid nodes;
    the truncation error grows like tanh(|t|/2)^(L+1), so the tail monitor
    aborts on boosts the resolution cannot carry.
    """
    if boost.is_identity:
        return u
    L = u.band_limit
    grid = gauge_grid(L)
    nodes = grid.nodes
    values = u.evaluate(boost.apply(nodes)) + boost.log_factor(nodes)
    field = GridField(grid, values.reshape(grid.shape))
    v = analyze(field, L)
    energy = average(field * field)
    # near-zero factors are measured in absolute terms
    tail = max(0.0, energy - float(np.sum(v.coeffs ** 2))) / max(energy, TAIL_ENERGY_FLOOR)
    tol = settings.tail_tol if tail_tol is None else tail_tol
    if tail > settings.tail_abort:
        raise ResolutionError(f"boost {boost.describe()} too strong for band limit {L}: tail {tail:.3e}")
    if tail > tol:
        logger.warning(f"Resolution warning: boosted field tail energy {tail:.3e} > {tol:.1e}")
    return v


def _density(u: SpectralField, grid: QuadratureGrid) -> np.ndarray:
    u_grid = synthesize(u, grid)
    top = 4.0 * float(np.max(u_grid.values))
    if top > settings.exp_overflow_limit:
        raise GaugeFailure(f"e^(4u) overflows (exponent {top:.1f})")
    return (np.exp(4.0 * u_grid.values) * grid.weights).reshape(-1)


def center_of_mass(u: SpectralField) -> np.ndarray:
    """(int x e^{4u} dc) / (int e^{4u} dc)"""
    grid = gauge_grid(u.band_limit)
    density = _density(u, grid)
    return (density @ grid.nodes) / float(np.sum(density))


def normalize(u: SpectralField, tol: Optional[float] = None,
              max_iters: Optional[int] = None) -> GaugeResult:
    """Find the boost b with center_of_mass(boost_apply(u, b)) = 0.

    Damped Newton on a = tanh(t) p. The center of mass of the boosted factor
    is computed by change of variables, int phi^{-1}(y) e^{4u(y)} dc(y), so
    only the final boost is applied to the coefficients.
    """
    tol = settings.gauge_tol if tol is None else tol
    max_iters = settings.gauge_max_iters if max_iters is None else max_iters
    step = settings.gauge_fd_step
    grid = gauge_grid(u.band_limit)
    density = _density(u, grid)
    mass = float(np.sum(density))
    nodes = grid.nodes

    def com_of(a: np.ndarray) -> np.ndarray:
        pulled = MobiusBoost.from_ball(a).inverse().apply(nodes)
        return (density @ pulled) / mass

    a = np.zeros(5)
    c = com_of(a)
    norm = float(np.linalg.norm(c))
    before = norm
    iterations = 0
    while norm > tol:
        if iterations >= max_iters:
            raise GaugeFailure(f"no convergence after {max_iters} iterations (|com| = {norm:.3e})")
        if np.linalg.norm(a) + step >= 1.0:
            raise GaugeFailure("boost parameter reached the boundary of the ball")
        jac = np.empty((5, 5))
        for i in range(5):
            e = np.zeros(5)
            e[i] = step
            jac[:, i] = (com_of(a + e) - com_of(a - e)) / (2.0 * step)
        try:
            delta = np.linalg.solve(jac, -c)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(jac, -c, rcond=None)[0]
        lam = 1.0
        while True:
            trial = a + lam * delta
            if np.linalg.norm(trial) < 1.0:
                c_trial = com_of(trial)
                if np.linalg.norm(c_trial) < norm:
                    break
            lam *= 0.5
            if lam < 1e-12:
                raise GaugeFailure(f"damping failed at |com| = {norm:.3e}")
        a, c = trial, c_trial
        norm = float(np.linalg.norm(c))
        iterations += 1
        logger.debug(f"gauge iteration {iterations}: |com| = {norm:.3e}, damping {lam:g}")

    boost = MobiusBoost.from_ball(a)
    v = boost_apply(u, boost)
    residual = abs(liouville_energy(v) - liouville_energy(u))
    after = float(np.linalg.norm(center_of_mass(v)))
    if after > 100.0 * max(tol, norm):
        logger.debug(f"truncation moved the center of mass to {after:.3e} (solved {norm:.3e})")
    return GaugeResult(v=v, boost=boost, com_norm_after=after, com_norm_before=before,
                       iterations=iterations, energy_residual=residual, com_norm_solved=norm)


def gauge_diagnostics(v: SpectralField) -> GaugeDiagnostics:
    """Jensen check 2 mean(v) <= 0 and the H^1 norm, computed spectrally"""
    vol = volume(v) / SPHERE_VOLUME
    if abs(vol - 1.0) > 1e-6:
        logger.warning(f"gauge diagnostics on a field with int e^(4v) dc = {vol:.9f}")
    c = v.coeffs
    lam = -laplacian_eigenvalues(v.band_limit, "beltrami")
    h1 = float(np.sqrt(np.sum((lam + 1.0) * c * c)))
    mean = v.mean
    return GaugeDiagnostics(mean_v=mean, jensen_ok=2.0 * mean <= 1e-10, h1_norm=h1)
