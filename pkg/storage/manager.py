"""
Run directory management: trace.csv, snapshots, config.txt and summary.json
"""
import csv
import logging
from pathlib import Path
from types import TracebackType
from typing import IO, Any, Optional, Type, Union

from core.spectral import SpectralField
from models.schemas import TRACE_COLUMNS, FlowTraceRow, RunConfig, RunSummary
from storage.snapshot import Snapshot, write_snapshot
from utils.content_hash import ContentHasher

logger = logging.getLogger(__name__)


class RunStorage:
    """Single writer for the outputs of one run"""

    TRACE_FILE = "trace.csv"
    SUMMARY_FILE = "summary.json"
    CONFIG_FILE = "config.txt"
    PRESCRIBED_FILE = "prescribed.qf4"

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.hasher = ContentHasher()
        self.config_digest = ""
        self._trace: Optional[IO[str]] = None
        self._writer: Optional[Any] = None
        self.rows_written = 0

    @property
    def trace_path(self) -> Path:
        return self.out_dir / self.TRACE_FILE

    @property
    def summary_path(self) -> Path:
        return self.out_dir / self.SUMMARY_FILE

    @property
    def config_path(self) -> Path:
        return self.out_dir / self.CONFIG_FILE

    def snapshot_path(self, step: int) -> Path:
        return self.out_dir / f"snap_{step:06d}.qf4"

    def __enter__(self) -> "RunStorage":
        self.open_trace()
        return self

    def __exit__(self, exc_type: Optional[Type[BaseException]], exc: Optional[BaseException],
                 tb: Optional[TracebackType]) -> None:
        self.close()

    @property
    def prescribed_path(self) -> Path:
        return self.out_dir / self.PRESCRIBED_FILE

    def write_config(self, config: RunConfig) -> Path:
        text = config.to_text()
        self.config_path.write_text(text, encoding="utf-8")
        self.config_digest = self.hasher.hash_content(text)
        return self.config_path

    def open_trace(self) -> None:
        if self._trace is not None:
            return
        self._trace = open(self.trace_path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._trace, lineterminator="\n")
        self._writer.writerow(TRACE_COLUMNS)

    def append_row(self, row: FlowTraceRow) -> None:
        if self._writer is None or self._trace is None:
            self.open_trace()
        assert self._writer is not None and self._trace is not None
        self._writer.writerow(row.csv_values())
        self._trace.flush()
        self.rows_written += 1

    def write_snapshot(self, step: int, u: SpectralField, t: float, alpha: float) -> Path:
        return write_snapshot(self.snapshot_path(step), Snapshot(field=u, time=t, alpha=alpha))

    def on_snapshot(self, row: FlowTraceRow, u: SpectralField, t: float) -> None:
        """Callback for the flow engine: one trace row and one snapshot per sample"""
        self.append_row(row)
        self.write_snapshot(row.step, u, t, row.alpha)

    def close(self) -> None:
        if self._trace is not None:
            self._trace.close()
            self._trace = None
            self._writer = None

    def write_prescribed(self, u: SpectralField, t: float) -> Path:
        """Factor whose Q-curvature is f itself; alpha is absorbed, so it is stored as 1"""
        return write_snapshot(self.prescribed_path, Snapshot(field=u, time=t, alpha=1.0))

    def trace_digest(self) -> str:
        return self.hasher.hash_file(self.trace_path) if self.trace_path.exists() else ""

    def field_digest(self, u: SpectralField) -> str:
        return self.hasher.hash_array(u.coeffs)

    def write_summary(self, summary: RunSummary) -> Path:
        self.summary_path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"Summary written to {self.summary_path}")
        return self.summary_path
