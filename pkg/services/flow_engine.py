"""
Time integration of u_t = alpha f - Q with alpha int f dv_g = 8 pi^2.

Each step is semi-implicit in coefficient space,
    u_{n+1} = (I + s dt P)^{-1} [u_n + dt (alpha f - Q(u_n)) + s dt P u_n],
accepted only when E_f does not increase. A trial step that overflows or
leaves the resolution is rejected the same way and dt halves. Accepted
states are shifted back to unit volume. Every `snapshot_every` accepted
steps the factor is gauged, the concentration scan runs and a trace row is
recorded.
"""
import logging
import math
import sys
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from core.errors import (
    BlowUpError,
    ConfigurationError,
    GaugeFailure,
    NonAdmissibleError,
    ResolutionError,
)
from core.harmonics import paneitz_eigenvalues
from core.quadrature import QuadratureGrid, build_grid
from core.spectral import (
    SpectralField,
    analyze,
    apply_paneitz,
    integrate,
    pointwise_exp_product,
    synthesize,
)
from models.schemas import ConcentrationScan, FlowConfig, FlowTraceRow, VerdictKind
from services.blowup_monitor import BubbleProfile, GaugedFactor, bubble_profile, concentration_scan, detect
from services.conformal_ops import (
    ConformalState,
    PrescribedFunction,
    alpha_bounds_check,
    exp_integral,
    gb_residual,
    liouville_energy,
    q_curvature,
)
from services.mobius_gauge import center_of_mass, gauge_diagnostics, normalize

logger = logging.getLogger(__name__)

DISSIPATION_RATE = 3.0 / (2.0 * math.pi ** 2)
ACCEPT_SLACK = 1e-12
GROW_AFTER = 10
GROW_FACTOR = 1.2

# a trial step hitting these is rejected like an energy increase
STEP_FAILURES = (BlowUpError, ResolutionError, NonAdmissibleError)

SnapshotCallback = Callable[[FlowTraceRow, SpectralField, float], None]


@dataclass(frozen=True, eq=False)
class StepDiagnostics:
    dt: float
    sigma: float
    alpha: float
    E_f_before: float
    E_f_after: float
    calabi_before: float
    state: ConformalState


@dataclass(eq=False)
class FlowVerdict:
    kind: VerdictKind
    final_u: SpectralField
    final_alpha: float
    concentration_point: Optional[np.ndarray]
    trace: List[FlowTraceRow]
    message: str = ""
    steps: int = 0
    t_final: float = 0.0
    E_f_initial: float = 0.0
    E_f_final: float = 0.0
    dissipated: float = 0.0
    energy_sandwich_violation: float = 0.0
    alpha_bounds_ok: bool = True
    bubble: Optional[BubbleProfile] = None
    prescribed_u: Optional[SpectralField] = None
    prescribed_residual: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind == "Concentrated" and self.concentration_point is None:
            raise ValueError("a Concentrated verdict needs a concentration point")

    @property
    def dissipation_slack(self) -> float:
        """E_f(u0) - E_f(u_T) - accumulated dissipation; >= -1e-6 on healthy runs"""
        return self.E_f_initial - self.E_f_final - self.dissipated


@dataclass(frozen=True, eq=False)
class FlowSample:
    row: FlowTraceRow
    scan: ConcentrationScan
    E_v: Optional[float]
    view: GaugedFactor


def _sigma(config: FlowConfig, state: ConformalState) -> float:
    fixed = config.sigma_fixed
    if fixed is not None:
        return fixed
    return 0.5 * pointwise_exp_product(state.u_grid, -4.0).max()


class FlowEngine:
    """Runs the prescribed Q-curvature flow for one f on one grid"""

    def __init__(self, f: PrescribedFunction, config: FlowConfig):
        self.config = config
        self.grid: QuadratureGrid = build_grid(config.grid)
        self.band_limit = config.grid.band_limit
        self.f = f.on_grid(self.grid)
        self._lam = paneitz_eigenvalues(self.band_limit)

    def state(self, u: SpectralField) -> ConformalState:
        return ConformalState.build(u.resized(self.band_limit), self.f, self.grid,
                                    tail_tol=self.config.tail_tol)

    def step(self, u: SpectralField, dt: float,
             state: Optional[ConformalState] = None) -> Tuple[SpectralField, bool, StepDiagnostics]:
        """One semi-implicit step; the implicit solve is a per-coefficient division"""
        state = state if state is not None else self.state(u)
        alpha = state.alpha
        E_f = state.energies.E_f
        assert alpha is not None and E_f is not None
        force = analyze(self.f.f_grid * alpha - state.q_grid, self.band_limit)
        sigma = _sigma(self.config, state)
        damp = sigma * dt * self._lam
        c = (state.u.coeffs + dt * force.coeffs + damp * state.u.coeffs) / (1.0 + damp)
        u_next = SpectralField(self.band_limit, c)
        next_state = self.state(u_next)
        E_next = next_state.energies.E_f
        assert E_next is not None
        accepted = E_next <= E_f + ACCEPT_SLACK * (1.0 + abs(E_f))
        diag = StepDiagnostics(dt=dt, sigma=sigma, alpha=alpha, E_f_before=E_f, E_f_after=E_next,
                               calabi_before=float(state.normalized_calabi or 0.0), state=next_state)
        return u_next, accepted, diag

    def sample(self, state: ConformalState, t: float, dt: float, step_no: int,
               dissipated: float) -> FlowSample:
        """Trace row of a volume-normalized state, with gauge and concentration diagnostics"""
        u = state.u
        view = GaugedFactor.plain(u)
        E_v: Optional[float] = None
        if self.config.gauge_enabled:
            try:
                gauged = normalize(u, tol=self.config.gauge_tol)
                view = GaugedFactor.from_gauge(gauged)
                com = gauged.com_norm_after
                E_v = liouville_energy(gauged.v)
            except (GaugeFailure, ResolutionError, BlowUpError) as e:
                logger.warning(f"Gauge failure at t={t:.6g}, continuing un-gauged: {e}")
                com = float(np.linalg.norm(center_of_mass(u)))
        else:
            com = float(np.linalg.norm(center_of_mass(u)))
        diagnostics = gauge_diagnostics(view.v)
        if E_v is not None and not diagnostics.jensen_ok:
            logger.warning(f"Jensen bound violated at t={t:.6g}: mean v = {diagnostics.mean_v:.3e}")

        if self.config.scan_enabled:
            scan = concentration_scan(view)
        else:
            scan = ConcentrationScan(radius=math.pi, center=[0.0, 0.0, 0.0, 0.0, 1.0],
                                     mass_at_center=state.volume, q_mass_at_center=0.0,
                                     wide_mass=state.volume)

        alpha = float(state.alpha or 0.0)
        fg = self.f.f_grid
        f_mass = integrate(fg * state.exp4u)
        qf_moment = integrate((state.q_grid - fg * alpha) * fg * state.exp4u)
        row = FlowTraceRow(
            t=t, dt=dt, alpha=alpha,
            E=state.energies.E, E_f=float(state.energies.E_f or 0.0),
            volume=state.volume, calabi=max(0.0, float(state.energies.calabi or 0.0)),
            beckner_gap=state.energies.beckner_gap, gb_residual=gb_residual(state),
            com_norm=com, h1_v=diagnostics.h1_norm,
            exp_integral=exp_integral(view.v, self.grid),
            conc_radius=scan.radius, conc_mass=scan.mass_at_center,
            q_min=state.q_grid.min(), q_max=state.q_grid.max(),
            step=step_no, f_mass=f_mass, qf_moment=qf_moment, E_v=E_v, dissipated=dissipated,
        )
        return FlowSample(row=row, scan=scan, E_v=E_v, view=view)

    def _renormalized(self, state: ConformalState) -> ConformalState:
        """u - 1/4 log(int e^{4u} dc); E_f is unchanged"""
        shift = -0.25 * math.log(state.normalized_volume)
        if shift == 0.0:
            return state
        logger.debug(f"Volume renormalization: u -> u {shift:+.3e}")
        return state.shifted(shift)

    def bubble(self, view: GaugedFactor, point: np.ndarray, radius: float,
               alpha: float) -> Optional[BubbleProfile]:
        """Radial profile at a concentration point, on the chart of the last concentration radius"""
        chart = math.tan(0.5 * min(radius, 1.0))
        try:
            profile = bubble_profile(view, point, chart_radius=chart, f=self.f.f, alpha=alpha)
        except (ConfigurationError, BlowUpError, ResolutionError) as e:
            logger.warning(f"Bubble profile at the concentration point failed: {e}")
            return None
        logger.info(f"Bubble profile: local alpha f = {profile.local_alpha_f:.9g}, "
                    f"Q(q) = {profile.q_hat:.6g}, residual {profile.residual:.3e}")
        return profile

    def prescribed(self, state: ConformalState) -> Tuple[Optional[SpectralField], Optional[float]]:
        """Converged factor shifted to curvature f, with its residual ||Q - f||"""
        try:
            u = finalize_prescribed(state.u, float(state.alpha or 0.0))
        except NonAdmissibleError as e:
            logger.warning(f"Cannot absorb alpha into u: {e}")
            return None, None
        residual = prescribed_residual(u, self.f)
        logger.info(f"Prescribed metric: ||Q - f|| = {residual:.3e}")
        return u, residual

    def run(self, u0: SpectralField, on_snapshot: Optional[SnapshotCallback] = None,
            progress: bool = False) -> FlowVerdict:
        cfg = self.config
        try:
            state = self.state(u0)
        except (BlowUpError, ResolutionError) as e:
            logger.error(f"Initial factor is not usable: {e}")
            return FlowVerdict(kind="Failed", final_u=u0.resized(self.band_limit), final_alpha=0.0,
                               concentration_point=None, trace=[], message=str(e))
        E_f0 = float(state.energies.E_f or 0.0)
        t, dt = 0.0, cfg.dt_init
        step_no, streak = 0, 0
        dissipated = 0.0
        trace: List[FlowTraceRow] = []
        scans: List[ConcentrationScan] = []
        sandwich = 0.0
        alpha_ok = True
        last_sample = -1
        last: Optional[FlowSample] = None

        def record() -> Optional[np.ndarray]:
            nonlocal state, sandwich, last_sample, last
            state = self._renormalized(state)
            last = self.sample(state, t, dt, step_no, dissipated)
            row = last.row
            trace.append(row)
            scans.append(last.scan)
            last_sample = step_no
            if last.E_v is not None:
                sandwich = max(sandwich, -last.E_v - 1e-7, last.E_v - row.E - 1e-7 * (1.0 + abs(row.E)))
            if on_snapshot is not None:
                on_snapshot(row, state.u, t)
            return detect(scans)

        def verdict(kind: VerdictKind, message: str = "",
                    point: Optional[np.ndarray] = None) -> FlowVerdict:
            logger.info(f"Flow verdict {kind} at t={t:.6g} after {step_no} steps {message}".rstrip())
            alpha = float(state.alpha or 0.0)
            bubble = None
            prescribed_u: Optional[SpectralField] = None
            residual: Optional[float] = None
            if point is not None and last is not None:
                bubble = self.bubble(last.view, point, last.scan.radius, alpha)
            if kind == "Converged":
                prescribed_u, residual = self.prescribed(state)
            return FlowVerdict(
                kind=kind, final_u=state.u, final_alpha=alpha,
                concentration_point=point, trace=trace, message=message, steps=step_no,
                t_final=t, E_f_initial=E_f0, E_f_final=float(state.energies.E_f or 0.0),
                dissipated=dissipated, energy_sandwich_violation=sandwich, alpha_bounds_ok=alpha_ok,
                bubble=bubble, prescribed_u=prescribed_u, prescribed_residual=residual,
            )

        bar = tqdm(total=cfg.t_max, desc="flow", unit="t",
                   disable=not (progress and sys.stderr.isatty()))
        try:
            record()
            if float(state.normalized_calabi or 0.0) <= cfg.tol_calabi:
                return verdict("Converged")

            while cfg.t_max - t > 1e-12 * cfg.t_max:
                h = dt if t + dt <= cfg.t_max * (1.0 + 1e-12) else cfg.t_max - t
                reason = "E_f increased"
                try:
                    _, accepted, diag = self.step(state.u, h, state)
                except STEP_FAILURES as e:
                    accepted, diag, reason = False, None, str(e)
                if not accepted or diag is None:
                    if h < dt and h <= cfg.dt_min:
                        logger.info(f"Final step of {h:.3e} below dt_min rejected ({reason}); stopping at t={t:.6g}")
                        break
                    if dt <= cfg.dt_min:
                        return verdict("Failed", f"step rejected at dt_min={cfg.dt_min:g}: {reason}")
                    dt = max(0.5 * min(dt, h), cfg.dt_min)
                    streak = 0
                    logger.debug(f"Step rejected at t={t:.6g} ({reason}); dt -> {dt:.3e}")
                    continue

                # constants are free for E_f; the mean mode drifts and is projected out every step
                state = self._renormalized(diag.state)
                calabi_after = float(state.normalized_calabi or 0.0)
                dissipated += 0.5 * h * DISSIPATION_RATE * (diag.calabi_before + calabi_after)
                t += h
                step_no += 1
                bar.update(h)

                bounds = alpha_bounds_check(state, self.f, E_f0)
                if not bounds.ok:
                    alpha_ok = False
                    logger.warning(f"alpha={bounds.alpha:.9g} outside [{bounds.lower:.9g}, {bounds.upper:.9g}] at t={t:.6g}")

                if calabi_after <= cfg.tol_calabi:
                    if last_sample != step_no:
                        record()
                    return verdict("Converged")

                streak += 1
                if streak >= GROW_AFTER:
                    dt = min(dt * GROW_FACTOR, cfg.dt_max)
                    streak = 0

                if step_no % cfg.snapshot_every == 0:
                    point = record()
                    if point is not None:
                        return verdict("Concentrated", point=point)

            if last_sample != step_no:
                record()
        except STEP_FAILURES as e:
            return verdict("Failed", str(e))
        finally:
            bar.close()
        return verdict("TimeExhausted")


def step(u: SpectralField, f: PrescribedFunction, dt: float,
         config: FlowConfig) -> Tuple[SpectralField, bool, StepDiagnostics]:
    return FlowEngine(f, config).step(u, dt)


def run(u0: SpectralField, f: PrescribedFunction, config: FlowConfig,
        on_snapshot: Optional[SnapshotCallback] = None, progress: bool = False) -> FlowVerdict:
    return FlowEngine(f, config).run(u0, on_snapshot=on_snapshot, progress=progress)


def _relative(lhs: np.ndarray, rhs: np.ndarray, floor: float) -> np.ndarray:
    scale = np.abs(rhs)
    return np.where(scale > floor, np.abs(lhs - rhs) / np.where(scale > floor, scale, 1.0),
                    np.abs(lhs - rhs))


def _central(trace: Sequence[FlowTraceRow], name: str) -> Tuple[np.ndarray, np.ndarray]:
    if len(trace) < 3:
        raise ValueError("need at least 3 trace rows")
    t = np.array([row.t for row in trace])
    y = np.array([getattr(row, name) for row in trace])
    return (y[2:] - y[:-2]) / (t[2:] - t[:-2]), np.arange(1, len(trace) - 1)


def dissipation_identity_check(trace: Sequence[FlowTraceRow], floor: float = 1e-12) -> float:
    """max relative residual of dE_f/dt = -(3 / 2 pi^2) calabi over interior rows"""
    rate, idx = _central(trace, "E_f")
    rhs = np.array([-DISSIPATION_RATE * trace[i].calabi for i in idx])
    return float(np.max(_relative(rate, rhs, floor)))


def alpha_evolution_check(trace: Sequence[FlowTraceRow], floor: float = 1e-12) -> float:
    """max relative residual of alpha_t int f dv_g = 4 alpha int (Q - alpha f) f dv_g"""
    rate, idx = _central(trace, "alpha")
    rhs = np.array([4.0 * trace[i].alpha * trace[i].qf_moment / trace[i].f_mass for i in idx])
    return float(np.max(_relative(rate, rhs, floor)))


def q_evolution_check(u: SpectralField, f: PrescribedFunction, dt: float,
                      literal: bool = False, floor: float = 1e-12) -> float:
    """Relative L^2 residual of the finite-difference Q_t against
    -4 u_t Q + 1/2 e^{-4u} P u_t (literal=True flips the sign of the second term).
    """
    grid = f.grid
    state = ConformalState.build(u, f, grid)
    assert state.alpha is not None
    u_t = analyze(f.f_grid * state.alpha - state.q_grid, u.band_limit)
    q_next = q_curvature(u + u_t.scaled(dt), grid)
    lhs = (q_next - state.q_grid) * (1.0 / dt)
    sign = -0.5 if literal else 0.5
    damp = pointwise_exp_product(state.u_grid, -4.0)
    rhs = synthesize(u_t, grid) * state.q_grid * -4.0 + damp * synthesize(apply_paneitz(u_t), grid) * sign
    diff = lhs - rhs
    num = math.sqrt(max(0.0, integrate(diff * diff)))
    den = math.sqrt(max(0.0, integrate(rhs * rhs)))
    if den <= floor:
        return num
    return num / den


def finalize_prescribed(u_inf: SpectralField, alpha_inf: float) -> SpectralField:
    """u + 1/4 log(alpha): the metric whose Q-curvature is f itself"""
    if not alpha_inf > 0.0:
        raise NonAdmissibleError(f"alpha = {alpha_inf} <= 0 cannot be absorbed into u")
    return u_inf.shifted(0.25 * math.log(alpha_inf))


def prescribed_residual(u: SpectralField, f: PrescribedFunction) -> float:
    """||Q(u) - f||_{L^2(dv_c)}"""
    diff = q_curvature(u, f.grid) - f.f_grid
    return math.sqrt(max(0.0, integrate(diff * diff)))

