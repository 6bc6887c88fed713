"""
Main application orchestration for the qflow laboratory
"""
import asyncio
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, TypeVar, Union

from config import settings
from core.errors import ConfigurationError
from models.schemas import MorseReport, RunConfig, RunSummary, SelftestCheck
from services.conformal_ops import liouville_energy
from services.flow_engine import FlowEngine, FlowVerdict
from services.function_specs import f_field, parse_f_spec, parse_u0_spec
from services.mobius_gauge import GaugeResult, normalize
from services.morse_gate import check_function
from services.report_service import ReportService
from services.selftest_service import SelftestService
from storage.manager import RunStorage
from storage.snapshot import Snapshot, read_snapshot, write_snapshot

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(eq=False)
class RunOutcome:
    verdict: FlowVerdict
    summary: RunSummary
    out_dir: Path


@dataclass(eq=False)
class NormalizeOutcome:
    result: GaugeResult
    E_before: float
    E_after: float

    def report_context(self) -> Dict[str, Any]:
        return {
            "pole": self.result.boost.pole.tolist(),
            "t": self.result.boost.t,
            "iterations": self.result.iterations,
            "com_before": self.result.com_norm_before,
            "com_after": self.result.com_norm_after,
            "E_before": self.E_before,
            "E_after": self.E_after,
        }


def load_run_config(path: Union[str, Path], out_dir: Optional[str] = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    config = RunConfig.from_text(text)
    if out_dir is not None:
        config = config.model_copy(update={"out_dir": out_dir})
    return config


class QFlowApp:
    """Entry point for the four commands; numerical work runs off the event loop"""

    def __init__(self, reports: Optional[ReportService] = None):
        self.reports = reports or ReportService()
        logger.debug("QFlowApp initialized")

    async def _blocking(self, fn: Callable[..., T], *args: Any) -> T:
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(None, fn, *args)

    # Flow runs
    def _run(self, config: RunConfig, progress: bool) -> RunOutcome:
        started = time.perf_counter()
        L = config.grid.band_limit
        f = parse_f_spec(config.f_spec, L)
        u0 = parse_u0_spec(config.u0_spec, L, seed=config.seed)
        out_dir = Path(config.out_dir)
        logger.info(f"Run f={config.f_spec!r} u0={config.u0_spec!r} L={L} -> {out_dir}")

        with RunStorage(out_dir) as storage:
            storage.write_config(config)
            engine = FlowEngine(f, config.flow_config())
            verdict = engine.run(u0, on_snapshot=storage.on_snapshot, progress=progress)
            final_path = storage.snapshot_path(verdict.steps)
            if not final_path.exists():
                storage.write_snapshot(verdict.steps, verdict.final_u, verdict.t_final, verdict.final_alpha)
            if verdict.prescribed_u is not None:
                storage.write_prescribed(verdict.prescribed_u, verdict.t_final)

        point = verdict.concentration_point
        bubble = verdict.bubble
        summary = RunSummary(
            verdict=verdict.kind,
            message=verdict.message,
            steps=verdict.steps,
            t_final=verdict.t_final,
            final_alpha=verdict.final_alpha,
            E_f_initial=verdict.E_f_initial,
            E_f_final=verdict.E_f_final,
            dissipation_slack=verdict.dissipation_slack,
            energy_sandwich_violation=verdict.energy_sandwich_violation,
            alpha_bounds_ok=verdict.alpha_bounds_ok,
            concentration_point=point.tolist() if point is not None else None,
            local_alpha_f=bubble.local_alpha_f if bubble is not None else None,
            bubble_residual=bubble.residual if bubble is not None else None,
            prescribed_residual=verdict.prescribed_residual,
            wall_time_s=time.perf_counter() - started,
            trace_sha256=storage.trace_digest(),
            final_u_sha256=storage.field_digest(verdict.final_u),
            config_sha256=storage.config_digest,
            config=dict(config.flat_items()),
        )
        storage.write_summary(summary)
        return RunOutcome(verdict=verdict, summary=summary, out_dir=out_dir)

    async def run(self, config: RunConfig, progress: bool = True) -> RunOutcome:
        return await self._blocking(self._run, config, progress)

    # Morse gate
    async def check_f(self, spec: str, band_limit: Optional[int] = None,
                      progress: bool = True) -> MorseReport:
        L = band_limit or settings.default_band_limit
        f = f_field(spec, L)
        return await self._blocking(check_function, f, progress)

    # Gauge
    def _normalize(self, snapshot_in: Union[str, Path], snapshot_out: Union[str, Path]) -> NormalizeOutcome:
        snapshot = read_snapshot(snapshot_in)
        result = normalize(snapshot.field)
        write_snapshot(snapshot_out, Snapshot(field=result.v, time=snapshot.time, alpha=snapshot.alpha))
        logger.info(f"Normalized {snapshot_in} -> {snapshot_out}: {result.boost.describe()}")
        return NormalizeOutcome(result=result, E_before=liouville_energy(snapshot.field),
                                E_after=liouville_energy(result.v))

    async def normalize(self, snapshot_in: Union[str, Path], snapshot_out: Union[str, Path]) -> NormalizeOutcome:
        return await self._blocking(self._normalize, snapshot_in, snapshot_out)

    # Selftest
    async def selftest(self, band_limit: Optional[int] = None) -> List[SelftestCheck]:
        return await SelftestService(band_limit).run_all()
