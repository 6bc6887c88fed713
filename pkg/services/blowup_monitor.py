"""
Concentration monitoring: |Q|-mass radii, point-mass detection and radial
bubble profiles in a stereographic chart.

Every quantity is computed through a GaugedFactor, i.e. u written as a well
resolved v and an exact Moebius boost. Balls are pulled back through the boost
in closed form (the preimage of a geodesic ball is again a geodesic ball), so
ball masses stay accurate even when e^{4u} dv_c is far too concentrated for
the band limit.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.optimize import brentq, minimize
from scipy.special import roots_legendre

from config import settings
from core.errors import BlowUpError, ConfigurationError
from core.geometry import NORTH, exp_map, stereographic_inverse, tangent_frames, unit
from core.quadrature import S3_AREA, SPHERE_VOLUME, build_grid, s3_directions
from core.spectral import (
    GridField,
    SpectralField,
    apply_paneitz,
    check_unit,
    evaluate_points,
    grid_for,
    integrate,
    pointwise_exp_product,
    synthesize,
)
from models.schemas import ConcentrationScan, GridSpec
from services.mobius_gauge import GaugeResult, MobiusBoost
from utils.logging import log_json

logger = logging.getLogger(__name__)

MassWeight = Literal["volume", "abs_q"]


@dataclass(frozen=True, eq=False)
class GaugedFactor:
    """u(x) = v(phi^{-1} x) + w_{phi^{-1}}(x) with phi the boost, i.e. v = boost_apply(u, boost)"""
    v: SpectralField
    boost: MobiusBoost

    @classmethod
    def plain(cls, u: SpectralField) -> "GaugedFactor":
        return cls(u, MobiusBoost.identity())

    @classmethod
    def from_gauge(cls, result: GaugeResult) -> "GaugedFactor":
        return cls(result.v, result.boost)

    @cached_property
    def paneitz_v(self) -> SpectralField:
        return apply_paneitz(self.v)

    def pullback(self, points: np.ndarray) -> np.ndarray:
        return self.boost.inverse().apply(points)

    def values(self, points: np.ndarray) -> np.ndarray:
        """u at unit vectors"""
        inv = self.boost.inverse()
        return self.v.evaluate(unit(inv.apply(points))) + inv.log_factor(points)

    def q_values(self, points: np.ndarray) -> np.ndarray:
        """Q of e^{2u} c at unit vectors; Q is invariant under the pullback"""
        y = unit(self.pullback(points))
        return 0.5 * np.exp(-4.0 * self.v.evaluate(y)) * (evaluate_points(self.paneitz_v, y) + 6.0)

    def h_density(self, y: np.ndarray, weight: MassWeight) -> np.ndarray:
        """Integrand on the v side: e^{4v} or |Q| e^{4v} = |P v + 6| / 2"""
        if weight == "volume":
            exponent = 4.0 * self.v.evaluate(y)
            if float(np.max(exponent)) > settings.exp_overflow_limit:
                raise BlowUpError(f"exponent {float(np.max(exponent)):.1f} in ball mass")
            return np.exp(exponent)
        return 0.5 * np.abs(evaluate_points(self.paneitz_v, y) + 6.0)

    def total(self, weight: MassWeight) -> float:
        grid = grid_for(self.v.band_limit)
        if weight == "volume":
            return integrate(pointwise_exp_product(synthesize(self.v, grid), 4.0))
        pv = synthesize(self.paneitz_v, grid)
        return integrate(GridField(grid, 0.5 * np.abs(pv.values + 6.0)))


StateLike = Union[SpectralField, GaugedFactor]


def _as_view(state: StateLike) -> GaugedFactor:
    return state if isinstance(state, GaugedFactor) else GaugedFactor.plain(state)


@dataclass(frozen=True)
class BubbleProfile:
    radii: np.ndarray
    u_bar: np.ndarray
    residuals: np.ndarray
    residual: float
    q_hat: float
    chart_radius: float
    local_alpha_f: Optional[float] = None


@lru_cache(maxsize=8)
def _cap_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return x, w


def _preimage_ball(boost: MobiusBoost, q: np.ndarray, cos_r: float) -> Tuple[np.ndarray, float]:
    """Center and cosine radius of {y : <phi(y), q> >= cos_r}"""
    if boost.is_identity:
        return q, cos_r
    p = boost.pole
    a = float(q @ p)
    ch, sh = math.cosh(boost.t), math.sinh(boost.t)
    m = q + (a * (ch - 1.0) - cos_r * sh) * p
    d = cos_r * ch - a * sh
    norm = float(np.linalg.norm(m))
    if norm < 1e-15:
        return q, (-2.0 if d <= 0.0 else 2.0)
    return m / norm, d / norm


def _cap_integral(view: GaugedFactor, center: np.ndarray, cos_r: float, weight: MassWeight) -> float:
    """int over {<y, center> >= cos_r} of the v-side density against dv_c"""
    x, w = _cap_rule(settings.cap_nodes)
    half = 0.5 * (1.0 - cos_r)
    s = cos_r + half * (x + 1.0)
    ws = half * w * (1.0 - s * s)
    dirs, dw = s3_directions(settings.s3_order)
    frame = tangent_frames(center)[0]
    tangent = dirs @ frame.T
    sine = np.sqrt(np.clip(1.0 - s * s, 0.0, None))
    pts = s[:, None, None] * center[None, None, :] + sine[:, None, None] * tangent[None, :, :]
    g = view.h_density(unit(pts.reshape(-1, 5)), weight).reshape(len(s), len(dw))
    return S3_AREA * float(ws @ (g @ dw))


def mass_in_ball(state: StateLike, center: np.ndarray, radius: float,
                 weight: MassWeight = "volume") -> float:
    """int over B(center, radius) of e^{4u} (or |Q| e^{4u}) dv_c"""
    if not radius > 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    view = _as_view(state)
    if radius >= math.pi:
        return view.total(weight)
    q = check_unit(center)[0]
    n, cos_r = _preimage_ball(view.boost, q, math.cos(radius))
    if cos_r >= 1.0:
        return 0.0
    if cos_r <= -1.0:
        return view.total(weight)
    return _cap_integral(view, n, cos_r, weight)


def _radius_at(view: GaugedFactor, center: np.ndarray, threshold: float) -> float:
    def excess(r: float) -> float:
        return mass_in_ball(view, center, r, "abs_q") - threshold

    if excess(math.pi) <= 0.0:
        return math.pi
    return float(brentq(excess, 1e-12, math.pi, xtol=1e-12, rtol=1e-8))


def _coarse_center(view: GaugedFactor, threshold: float, block: int = 128) -> Tuple[np.ndarray, int]:
    """Candidate center with the smallest nodal radius carrying `threshold`.

    Candidates and measure points are grid nodes pushed through the boost, so
    both follow the concentration.
    """
    scan_grid = build_grid(GridSpec(band_limit=settings.scan_band_limit, oversample=1))
    cand_grid = build_grid(GridSpec(band_limit=settings.scan_candidate_band_limit, oversample=1))
    pv = synthesize(view.paneitz_v, scan_grid, strict=False).values
    masses = (0.5 * np.abs(pv + 6.0) * scan_grid.weights).reshape(-1)
    points = unit(view.boost.apply(scan_grid.nodes))
    centers = unit(view.boost.apply(cand_grid.nodes))
    radii = np.full(len(centers), np.inf)
    for start in range(0, len(centers), block):
        cos = np.clip(centers[start:start + block] @ points.T, -1.0, 1.0)
        order = np.argsort(-cos, axis=1, kind="stable")
        cum = np.cumsum(masses[order], axis=1)
        reached = cum >= threshold
        hit = np.argmax(reached, axis=1)
        rows = np.arange(len(hit))
        ok = reached[rows, hit]
        radii[start:start + block] = np.where(ok, np.arccos(cos[rows, order[rows, hit]]), np.inf)
    index = int(np.argmin(radii))
    return centers[index], index


def _polish_center(view: GaugedFactor, center: np.ndarray, radius: float,
                   threshold: float) -> Tuple[np.ndarray, float]:
    """Move the center to maximize the |Q|-mass at fixed radius, then re-solve the radius"""
    frame = tangent_frames(center)

    def point(xi: np.ndarray) -> np.ndarray:
        return exp_map(center[None, :], frame, xi[None, :])[0]

    def objective(xi: np.ndarray) -> float:
        return -mass_in_ball(view, point(xi), radius, "abs_q")

    step = 0.25 * min(radius, 0.5)
    simplex = np.vstack([np.zeros(4), step * np.eye(4)])
    result = minimize(objective, np.zeros(4), method="Nelder-Mead",
                      options={"initial_simplex": simplex, "maxfev": 120,
                               "xatol": settings.scan_radius_tol * step, "fatol": 1e-12})
    moved = point(result.x)
    r_new = _radius_at(view, moved, threshold)
    if r_new < radius:
        return moved, r_new
    return center, radius


def concentration_scan(state: StateLike, threshold: Optional[float] = None,
                       polish: bool = False) -> ConcentrationScan:
    """Smallest ball carrying |Q|-mass `threshold` (default 2 pi^2).

    Coarse stage over pushed-forward grid nodes, then brentq on the accurate
    ball mass at the chosen center. With polish=True the center is also
    optimized locally.
    """
    view = _as_view(state)
    threshold = settings.conc_threshold if threshold is None else threshold
    total_q = view.total("abs_q")
    if total_q < threshold:
        vol = view.total("volume")
        logger.warning(f"total |Q| mass {total_q:.6g} is below the threshold {threshold:.6g}")
        return ConcentrationScan(radius=math.pi, center=NORTH.tolist(), mass_at_center=vol,
                                 q_mass_at_center=total_q, wide_mass=vol,
                                 threshold_reached=False, center_index=0)

    center, index = _coarse_center(view, threshold)
    radius = _radius_at(view, center, threshold)
    if polish:
        center, radius = _polish_center(view, center, radius, threshold)

    scan = ConcentrationScan(
        radius=radius,
        center=center.tolist(),
        mass_at_center=mass_in_ball(view, center, radius, "volume"),
        q_mass_at_center=mass_in_ball(view, center, radius, "abs_q"),
        wide_mass=mass_in_ball(view, center, min(5.0 * radius, math.pi), "volume"),
        threshold_reached=True,
        center_index=index,
    )
    log_json(logger, {"concentration_scan": scan})
    return scan


def detect(scans: Sequence[ConcentrationScan], window: Optional[int] = None,
           radius_tol: Optional[float] = None, mass_frac: Optional[float] = None) -> Optional[np.ndarray]:
    """Concentration point q when the recent scans show a point mass forming, else None"""
    window = settings.conc_window if window is None else window
    radius_tol = settings.conc_radius_tol if radius_tol is None else radius_tol
    mass_frac = settings.conc_mass_frac if mass_frac is None else mass_frac
    if len(scans) < window:
        return None
    recent = list(scans)[-window:]
    last = recent[-1]
    if not all(s.threshold_reached for s in recent):
        return None
    if last.radius > radius_tol:
        return None
    if last.wide_mass < mass_frac * SPHERE_VOLUME:
        return None
    radii = [s.radius for s in recent]
    if any(later > earlier for earlier, later in zip(radii, radii[1:])):
        return None
    return np.array(last.center)


def _radial_bilaplacian(fit: Chebyshev, r: np.ndarray) -> np.ndarray:
    """Delta^2 of a radial function on R^4"""
    d1, d2, d3, d4 = (fit.deriv(k)(r) for k in range(1, 5))
    return d4 + 6.0 * d3 / r + 3.0 * d2 / r ** 2 - 3.0 * d1 / r ** 3


def bubble_profile(state: StateLike, q: np.ndarray, n_samples: int = 32,
                   chart_radius: Optional[float] = None, f: Optional[SpectralField] = None,
                   alpha: Optional[float] = None) -> BubbleProfile:
    """Spherical averages of the chart factor u(pi^{-1} z) + log(2 / (1 + |z|^2)) and the
    residual of Delta^2 u_bar = 2 Q(q) e^{4 u_bar}, which vanishes on the round bubbles.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    view = _as_view(state)
    q = check_unit(q)[0]
    R = 1.0 if chart_radius is None else float(chart_radius)
    if R <= 0.0 or 2.0 * math.atan(R) > math.pi - 0.1:
        raise ConfigurationError(f"chart radius {R} reaches within 0.1 of the antipode")
    dirs, dw = s3_directions(settings.bubble_s3_order)

    def u_bar(x: np.ndarray) -> np.ndarray:
        r = np.abs(np.asarray(x, dtype=np.float64))
        z = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 4)
        vals = view.values(stereographic_inverse(q, z)).reshape(len(r), len(dw))
        return vals @ dw + np.log(2.0 / (1.0 + r * r))

    fit = Chebyshev.interpolate(u_bar, settings.bubble_chebyshev_degree, domain=[-R, R])
    radii = np.linspace(0.1 * R, 0.9 * R, n_samples)
    values = fit(radii)
    q_hat = float(view.q_values(q[None, :])[0])
    residuals = np.abs(_radial_bilaplacian(fit, radii) - 2.0 * q_hat * np.exp(4.0 * values))
    local = None
    if f is not None and alpha is not None:
        local = float(alpha * f.evaluate(q[None, :])[0])
    return BubbleProfile(radii=radii, u_bar=values, residuals=residuals,
                         residual=float(np.max(residuals)), q_hat=q_hat,
                         chart_radius=R, local_alpha_f=local)
