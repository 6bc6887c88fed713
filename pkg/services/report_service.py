"""
Human-readable reports rendered from templates/report
"""
import logging
from pathlib import Path
from typing import Any, Sequence

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from models.schemas import MorseReport, RunSummary, SelftestCheck

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates" / "report"


def _fmt(value: Any, pattern: str) -> str:
    return pattern % value


class ReportService:
    def __init__(self, template_dir: Path = TEMPLATE_DIR):
        self.env = Environment(
            loader=FileSystemLoader(str(template_dir)),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
            undefined=StrictUndefined,
        )
        self.env.filters["fmt"] = _fmt

    def _render(self, name: str, **context: Any) -> str:
        return self.env.get_template(name).render(**context)

    def render_morse_report(self, report: MorseReport) -> str:
        return self._render("morse_report.jinja", report=report)

    def render_selftest(self, checks: Sequence[SelftestCheck], band_limit: int) -> str:
        passed = sum(1 for c in checks if c.passed)
        return self._render("selftest.jinja", checks=list(checks), band_limit=band_limit, passed=passed)

    def render_normalize(self, **context: Any) -> str:
        """Context: pole, t, iterations, com_before, com_after, E_before, E_after"""
        return self._render("normalize.jinja", **context)

    def render_run_summary(self, summary: RunSummary) -> str:
        return self._render("run_summary.jinja", s=summary)
