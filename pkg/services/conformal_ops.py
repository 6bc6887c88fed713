"""
Conformal metrics g = e^{2u} c on the round S^4: Q-curvature, volume, alpha
and the energies monitored along the flow
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from core.errors import NonAdmissibleError, NotPositiveSomewhereError
from core.geometry import exp_map, tangent_frames
from core.quadrature import SPHERE_VOLUME, QuadratureGrid
from core.spectral import (
    GridField,
    SpectralField,
    apply_paneitz,
    average,
    evaluate_points,
    grid_for,
    integrate,
    monitor_tail,
    pointwise_exp_product,
    synthesize,
)
from core.harmonics import paneitz_eigenvalues

logger = logging.getLogger(__name__)

TOTAL_Q = 8.0 * math.pi ** 2


@dataclass(frozen=True, eq=False)
class PrescribedFunction:
    """A prescribed function f with its nodal values on the flow grid"""
    f: SpectralField
    f_grid: GridField
    max_f: float
    min_f: float
    argmax: np.ndarray
    argmin: np.ndarray

    @property
    def grid(self) -> QuadratureGrid:
        return self.f_grid.grid

    @classmethod
    def from_field(cls, f: SpectralField, grid: Optional[QuadratureGrid] = None,
                   polish: bool = True) -> "PrescribedFunction":
        grid = grid or grid_for(f.band_limit)
        f_grid = synthesize(f, grid)
        flat = f_grid.values.reshape(-1)
        top_node = grid.node_at(int(np.argmax(flat)))
        low_node = grid.node_at(int(np.argmin(flat)))
        max_f, argmax = float(np.max(flat)), top_node
        min_f, argmin = float(np.min(flat)), low_node
        if polish:
            compact = f.trimmed(1e-14)
            max_f, argmax = _polish_extremum(compact, top_node, sign=1.0, start_value=max_f)
            min_f, argmin = _polish_extremum(compact, low_node, sign=-1.0, start_value=min_f)
        if max_f <= 0.0:
            raise NotPositiveSomewhereError(f"max f = {max_f:.6g} <= 0")
        return cls(f=f, f_grid=f_grid, max_f=max_f, min_f=min_f, argmax=argmax, argmin=argmin)

    def on_grid(self, grid: QuadratureGrid) -> "PrescribedFunction":
        """Same function with nodal values on another grid"""
        if grid is self.grid:
            return self
        return PrescribedFunction(f=self.f, f_grid=synthesize(self.f, grid, strict=False),
                                  max_f=self.max_f, min_f=self.min_f,
                                  argmax=self.argmax, argmin=self.argmin)


def _polish_extremum(f: SpectralField, start: np.ndarray, sign: float,
                     start_value: float) -> Tuple[float, np.ndarray]:
    """Local optimization of sign * f in an exponential chart at `start`"""
    frame = tangent_frames(start)

    def point(xi: np.ndarray) -> np.ndarray:
        return exp_map(start[None, :], frame, xi[None, :])

    def objective(xi: np.ndarray) -> float:
        return -sign * float(evaluate_points(f, point(xi))[0])

    result = minimize(objective, np.zeros(4), method="BFGS", options={"gtol": 1e-12})
    value = -result.fun * sign
    if sign * value >= sign * start_value:
        return float(value), point(result.x)[0]
    return start_value, start


@dataclass(frozen=True)
class Energies:
    E: float
    E_f: Optional[float]
    beckner_gap: float
    calabi: Optional[float]


@dataclass(frozen=True)
class AlphaBounds:
    lower: float
    upper: float
    alpha: float
    ok: bool


@dataclass(frozen=True, eq=False)
class ConformalState:
    """Conformal factor u with everything the flow reads from it, cached on one grid"""
    u: SpectralField
    grid: QuadratureGrid
    u_grid: GridField
    exp4u: GridField
    q_grid: GridField
    volume: float
    alpha: Optional[float]
    f_integral: Optional[float]
    energies: Energies
    tail: float

    @classmethod
    def build(cls, u: SpectralField, f: Optional[PrescribedFunction] = None,
              grid: Optional[QuadratureGrid] = None, monitor: bool = True,
              tail_tol: Optional[float] = None) -> "ConformalState":
        if grid is None:
            grid = f.grid if f is not None else grid_for(u.band_limit)
        u_grid = synthesize(u, grid)
        exp4u = pointwise_exp_product(u_grid, 4.0)
        tail = monitor_tail(exp4u, u.band_limit, tail_tol) if monitor else 0.0
        volume = integrate(exp4u)
        q_grid = _q_from_grid(u, u_grid, grid)
        E = liouville_energy(u)
        gap = E - 3.0 * math.log(volume / SPHERE_VOLUME)
        alpha = f_integral = E_f = calabi = None
        if f is not None:
            fg = f.on_grid(grid).f_grid
            f_integral = integrate(fg * exp4u)
            if f_integral <= 0.0:
                raise NonAdmissibleError(f"int f e^(4u) dv_c = {f_integral:.6g} <= 0")
            alpha = TOTAL_Q / f_integral
            E_f = E - 3.0 * math.log(f_integral / SPHERE_VOLUME)
            residual = fg * alpha - q_grid
            calabi = integrate(residual * residual * exp4u)
        return cls(u=u, grid=grid, u_grid=u_grid, exp4u=exp4u, q_grid=q_grid, volume=volume,
                   alpha=alpha, f_integral=f_integral,
                   energies=Energies(E=E, E_f=E_f, beckner_gap=gap, calabi=calabi), tail=tail)

    @property
    def normalized_volume(self) -> float:
        """int e^{4u} dc"""
        return self.volume / SPHERE_VOLUME

    @property
    def normalized_calabi(self) -> Optional[float]:
        """Calabi energy of the volume-normalized representative; calabi(u + c) = e^{-4c} calabi(u)"""
        if self.energies.calabi is None:
            return None
        return self.energies.calabi * self.normalized_volume

    def shifted(self, c: float) -> "ConformalState":
        """State of u + c, rescaled in closed form instead of re-synthesized"""
        if c == 0.0:
            return self
        up, down = math.exp(4.0 * c), math.exp(-4.0 * c)
        e = self.energies
        energies = Energies(
            E=e.E + 12.0 * c,
            E_f=e.E_f,
            beckner_gap=e.beckner_gap,
            calabi=None if e.calabi is None else e.calabi * down,
        )
        return ConformalState(
            u=self.u.shifted(c), grid=self.grid, u_grid=self.u_grid + c,
            exp4u=self.exp4u * up, q_grid=self.q_grid * down, volume=self.volume * up,
            alpha=None if self.alpha is None else self.alpha * down,
            f_integral=None if self.f_integral is None else self.f_integral * up,
            energies=energies, tail=self.tail,
        )

    def volume_normalized(self) -> "ConformalState":
        return self.shifted(-0.25 * math.log(self.normalized_volume))


def _q_from_grid(u: SpectralField, u_grid: GridField, grid: QuadratureGrid) -> GridField:
    pu = synthesize(apply_paneitz(u), grid)
    damp = pointwise_exp_product(u_grid, -4.0)
    return damp * (pu + 6.0) * 0.5


def q_curvature(u: SpectralField, grid: Optional[QuadratureGrid] = None) -> GridField:
    """Q = 1/2 e^{-4u} (P u + 6) on the oversampled grid"""
    grid = grid or grid_for(u.band_limit)
    return _q_from_grid(u, synthesize(u, grid), grid)


def total_q(state: ConformalState) -> float:
    """int Q dv_g; equals 8 pi^2 for every resolved u"""
    return integrate(state.q_grid * state.exp4u)


def gb_residual(state: ConformalState) -> float:
    return abs(total_q(state) - TOTAL_Q) / TOTAL_Q


def volume(u: SpectralField, grid: Optional[QuadratureGrid] = None) -> float:
    grid = grid or grid_for(u.band_limit)
    return integrate(pointwise_exp_product(synthesize(u, grid), 4.0))


def compute_alpha(u: SpectralField, f: PrescribedFunction) -> float:
    """alpha = 8 pi^2 / int f e^{4u} dv_c"""
    exp4u = pointwise_exp_product(synthesize(u, f.grid), 4.0)
    f_integral = integrate(f.f_grid * exp4u)
    if f_integral <= 0.0:
        raise NonAdmissibleError(f"int f e^(4u) dv_c = {f_integral:.6g} <= 0")
    return TOTAL_Q / f_integral


def liouville_energy(u: SpectralField) -> float:
    """E(u) = int (u P u + 12 u) dc, from the coefficients"""
    c = u.coeffs
    return float(np.sum(paneitz_eigenvalues(u.band_limit) * c * c) + 12.0 * c[0])


def flow_energy(u: SpectralField, f: PrescribedFunction) -> float:
    """E_f(u) = E(u) - 3 log int f e^{4u} dc"""
    exp4u = pointwise_exp_product(synthesize(u, f.grid), 4.0)
    f_mean = average(f.f_grid * exp4u)
    if f_mean <= 0.0:
        raise NonAdmissibleError(f"int f e^(4u) dc = {f_mean:.6g} <= 0")
    return liouville_energy(u) - 3.0 * math.log(f_mean)


def beckner_gap(u: SpectralField, grid: Optional[QuadratureGrid] = None) -> float:
    """E(u) - 3 log int e^{4u} dc, nonnegative by the sharp Beckner inequality"""
    return liouville_energy(u) - 3.0 * math.log(volume(u, grid) / SPHERE_VOLUME)


def calabi_energy(state: ConformalState, f: PrescribedFunction) -> float:
    """int (alpha f - Q)^2 dv_g"""
    alpha = state.alpha if state.alpha is not None else compute_alpha(state.u, f)
    residual = f.on_grid(state.grid).f_grid * alpha - state.q_grid
    return integrate(residual * residual * state.exp4u)


def alpha_bounds_check(state: ConformalState, f: PrescribedFunction,
                       E_f_initial: float) -> AlphaBounds:
    """3 / max f <= alpha <= 3 e^{E_f(u0)/3} for the volume-normalized representative"""
    alpha = state.alpha if state.alpha is not None else compute_alpha(state.u, f)
    # alpha(u + c) = e^{-4c} alpha(u); compare the representative with int e^{4u} dc = 1
    alpha_n = alpha * state.normalized_volume
    lower = 3.0 / f.max_f
    upper = 3.0 * math.exp(E_f_initial / 3.0)
    ok = (alpha_n >= lower - 1e-9 * (1.0 + abs(lower))) and (alpha_n <= upper + 1e-9 * (1.0 + abs(upper)))
    return AlphaBounds(lower=lower, upper=upper, alpha=alpha_n, ok=ok)


def exp_integral(u: SpectralField, grid: Optional[QuadratureGrid] = None) -> float:
    """int e^{4|u|} dc"""
    grid = grid or grid_for(u.band_limit)
    u_grid = synthesize(u, grid)
    return average(pointwise_exp_product(GridField(grid, np.abs(u_grid.values)), 4.0))


def volume_normalized(u: SpectralField, grid: Optional[QuadratureGrid] = None) -> Tuple[SpectralField, float]:
    """u - 1/4 log(vol * 3 / 8 pi^2) and the applied shift"""
    shift = -0.25 * math.log(volume(u, grid) / SPHERE_VOLUME)
    return u.shifted(shift), shift
