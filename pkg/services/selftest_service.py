"""
Desk-scale acceptance suites behind `qflow selftest`
"""
import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from core.harmonics import basis_index
from core.quadrature import build_grid
from core.spectral import (
    SpectralField,
    analyze,
    apply_laplacian,
    apply_paneitz,
    average,
    grid_for,
    integrate,
    project_function,
    random_factor,
    random_field,
    synthesize,
)
from models.schemas import GridSpec, SelftestCheck
from services.conformal_ops import ConformalState, beckner_gap, gb_residual, q_curvature
from services.function_specs import f_field
from services.mobius_gauge import MobiusBoost, boost_apply, boost_factor, normalize
from services.morse_gate import check_function, degree_criterion, feasibility_bruteforce, solve_counting_system

logger = logging.getLogger(__name__)

CheckFn = Callable[[], Tuple[bool, str]]

EXACTNESS_DEGREES = (2, 8, 12, 16)
BECKNER_SAMPLES = 100
BRUTEFORCE_BOUND = 12
SUITES = ("operator", "energy", "gauge", "morse")


def _pole(*entries: float) -> np.ndarray:
    p = np.array(entries, dtype=np.float64)
    return p / np.linalg.norm(p)


class SelftestService:
    """Operator, energy, gauge and Morse checks at one band limit"""

    def __init__(self, band_limit: Optional[int] = None):
        self.band_limit = band_limit or settings.default_band_limit
        self.base_grid = build_grid(GridSpec(band_limit=self.band_limit, oversample=1))

    def _run(self, suite: str, checks: Sequence[Tuple[str, CheckFn]]) -> List[SelftestCheck]:
        results = []
        for name, fn in checks:
            try:
                passed, detail = fn()
            except Exception as e:
                passed, detail = False, f"{type(e).__name__}: {e}"
            level = logging.INFO if passed else logging.WARNING
            logger.log(level, f"[{suite}] {name}: {'pass' if passed else 'FAIL'} {detail}")
            results.append(SelftestCheck(suite=suite, name=name, passed=passed, detail=detail))
        return results

    # operator suite

    def _spectrum(self) -> Tuple[bool, str]:
        worst_leak = 0.0
        for k in range(1, min(self.band_limit, 6) + 1):
            # Re (x1 + i x2)^k is harmonic of degree k
            field = project_function(lambda *x: np.real((x[0] + 1j * x[1]) ** k), self.band_limit)
            energy = field.degree_energy()
            worst_leak = max(worst_leak, float((energy.sum() - energy[k]) / energy.sum()))
        u = random_field(self.band_limit, 1.0, np.random.default_rng(7))
        lap = apply_laplacian(u, "beltrami")
        composed = apply_laplacian(lap, "beltrami") - lap.scaled(2.0)
        mismatch = float(np.max(np.abs(apply_paneitz(u).coeffs - composed.coeffs)))
        scale = float(np.max(np.abs(apply_paneitz(u).coeffs)))
        ok = worst_leak <= 1e-12 and mismatch <= 1e-12 * scale
        return ok, f"degree leak {worst_leak:.2e}, P vs lap^2 - 2 lap {mismatch / scale:.2e}"

    def _exactness(self, degree: int) -> CheckFn:
        def check() -> Tuple[bool, str]:
            index = basis_index(degree)
            c = np.zeros(index.size)
            c[index.position(degree, 0, 0, 0)] = 1.0
            values = synthesize(SpectralField(degree, c), self.base_grid, strict=False)
            err = abs(average(values * values) - 1.0)
            return err <= 1e-10, f"|int Y^2 dc - 1| = {err:.2e} on grid L={self.band_limit}"
        return check

    def _green(self) -> Tuple[bool, str]:
        grid = self.base_grid
        rng = np.random.default_rng(13)
        u_nodal = synthesize(random_field(self.band_limit, 1.0, rng), grid)
        v_nodal = synthesize(random_field(self.band_limit, 1.0, rng), grid)
        worst = 0.0
        for op in (lambda f: apply_laplacian(f, "beltrami"), apply_paneitz):
            op_u = synthesize(op(analyze(u_nodal)), grid)
            op_v = synthesize(op(analyze(v_nodal)), grid)
            lhs = integrate(u_nodal * op_v)
            rhs = integrate(v_nodal * op_u)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
        return worst <= 1e-10, f"int (u A v - v A u) relative {worst:.2e} for A = lap, P"

    def _round_trip(self) -> Tuple[bool, str]:
        u = random_field(self.band_limit, 1.0, np.random.default_rng(11))
        back = analyze(synthesize(u, grid_for(self.band_limit)))
        err = float(np.max(np.abs(back.coeffs - u.coeffs)))
        return err <= 1e-11, f"max coefficient error {err:.2e}"

    def operator_suite(self) -> List[SelftestCheck]:
        checks: List[Tuple[str, CheckFn]] = [("spectrum", self._spectrum)]
        checks += [(f"exactness degree {d}", self._exactness(d)) for d in EXACTNESS_DEGREES]
        checks += [("green identity", self._green), ("round trip", self._round_trip)]
        return self._run("operator", checks)

    # energy suite

    def _energy_fixtures(self) -> List[Tuple[str, SpectralField]]:
        L = self.band_limit
        rng = np.random.default_rng(3)
        return [
            ("zero", SpectralField.zeros(L)),
            ("0.1 x5", project_function(lambda *x: 0.1 * x[4], L)),
            ("random", random_factor(L, 0.05, rng, max_degree=4)),
            ("boost t=0.5", boost_factor(MobiusBoost(_pole(1, 0, 0, 0, 1), 0.5), L)),
        ]

    def _gauss_bonnet(self) -> Tuple[bool, str]:
        worst = max(gb_residual(ConformalState.build(u)) for _, u in self._energy_fixtures())
        return worst <= 1e-9, f"max |int Q dv_g - 8 pi^2| / 8 pi^2 = {worst:.2e}"

    def _beckner_nonnegative(self) -> Tuple[bool, str]:
        rng = np.random.default_rng(17)
        gaps = [beckner_gap(random_factor(self.band_limit, 0.1, rng, max_degree=4)) for _ in range(BECKNER_SAMPLES)]
        low = min(gaps)
        return low >= -1e-9, f"min gap {low:.3e}"

    def _beckner_equality(self) -> Tuple[bool, str]:
        gaps = [abs(beckner_gap(boost_factor(MobiusBoost(_pole(0, 1, 0, 1, 0), t), self.band_limit)))
                for t in (0.25, 0.5)]
        worst = max(gaps)
        return worst <= 1e-7, f"max |gap| on boost factors {worst:.2e}"

    def _shift_invariance(self) -> Tuple[bool, str]:
        u = random_factor(self.band_limit, 0.1, np.random.default_rng(5), max_degree=3)
        diff = abs(beckner_gap(u) - beckner_gap(u.shifted(0.3)))
        return diff <= 1e-10, f"|gap(u) - gap(u + 0.3)| = {diff:.2e}"

    def energy_suite(self) -> List[SelftestCheck]:
        return self._run("energy", [
            ("gauss-bonnet", self._gauss_bonnet),
            ("beckner nonnegative", self._beckner_nonnegative),
            ("beckner equality", self._beckner_equality),
            ("shift invariance", self._shift_invariance),
        ])

    # gauge suite

    def _round_metric(self) -> Tuple[bool, str]:
        v = boost_apply(SpectralField.zeros(self.band_limit), MobiusBoost(_pole(1, 1, 0, 0, 0), 0.2))
        err = float(np.max(np.abs(q_curvature(v).values - 3.0)))
        return err <= 1e-7, f"max |Q - 3| = {err:.2e}"

    def _recover_inverse(self) -> Tuple[bool, str]:
        boost = MobiusBoost(_pole(0, 0, 1, 0, 1), 0.5)
        result = normalize(boost_factor(boost, self.band_limit))
        err = float(np.linalg.norm(result.boost.ball_vector - boost.inverse().ball_vector))
        ok = result.com_norm_solved <= 1e-10 and result.com_norm_after <= 1e-8 and err <= 1e-6
        return ok, (f"|com| {result.com_norm_solved:.2e} solved, {result.com_norm_after:.2e} truncated, "
                    f"boost error {err:.2e}")

    def _group_inverse(self) -> Tuple[bool, str]:
        u = random_factor(self.band_limit, 0.05, np.random.default_rng(9), max_degree=3)
        boost = MobiusBoost(_pole(1, 0, 0, 1, 0), 0.3)
        back = boost_apply(boost_apply(u, boost), boost.inverse())
        err = (back - u).l2_norm() / u.l2_norm()
        return err <= 1e-8, f"relative error {err:.2e}"

    def gauge_suite(self) -> List[SelftestCheck]:
        return self._run("gauge", [
            ("round metric", self._round_metric),
            ("recover inverse", self._recover_inverse),
            ("group inverse", self._group_inverse),
        ])

    # morse suite

    def _fixture(self, spec: str, feasible: bool, m: Optional[List[int]] = None) -> CheckFn:
        def check() -> Tuple[bool, str]:
            report = check_function(f_field(spec, 4))
            ok = report.feasible == feasible and not report.hypothesis_violations
            if m is not None:
                ok = ok and report.m == m
            return ok, f"m = {report.m}, k recursion = {report.k_recursion}"
        return check

    def _recursion_vs_bruteforce(self) -> Tuple[bool, str]:
        bound = BRUTEFORCE_BOUND
        mismatches = 0
        total = 0
        for m in np.ndindex(*(bound + 1,) * 5):
            if sum(m) > bound:
                continue
            total += 1
            rec = solve_counting_system(m)[0]
            if rec != feasibility_bruteforce(m)[0] or rec != degree_criterion(m):
                mismatches += 1
        return mismatches == 0, f"{mismatches} mismatches over {total} vectors with sum(m) <= {bound}"

    def morse_suite(self) -> List[SelftestCheck]:
        return self._run("morse", [
            ("linear fixture", self._fixture("linear:0,0,0,0,1;2", True, [1, 0, 0, 0, 0])),
            ("quadric fixture", self._fixture("quadric:1,2,3.5,4,5;0", False, [2, 2, 2, 0, 0])),
            ("shifted quadric fixture", self._fixture("quadric:1,2,3.5,4,5;-1.5", False, [2, 2, 2, 0, 0])),
            ("recursion vs brute force", self._recursion_vs_bruteforce),
        ])

    async def run_all(self, workers: Optional[int] = None) -> List[SelftestCheck]:
        """Independent suites on a thread pool; results in suite order"""
        loop = asyncio.get_running_loop()
        workers = workers or settings.threads or len(SUITES)
        logger.info(f"Running {len(SUITES)} selftest suites at L={self.band_limit} on {workers} workers")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [loop.run_in_executor(pool, getattr(self, f"{name}_suite")) for name in SUITES]
            results = await asyncio.gather(*futures)
        return [check for suite in results for check in suite]


def all_passed(checks: Sequence[SelftestCheck]) -> bool:
    return all(c.passed for c in checks)
