"""
Text snapshots of a spectral field

    QFLOW4
    format_version = 1
    band_limit = <L>
    time = <t>
    alpha = <alpha>
    count = <number of coefficients>
    <one coefficient per line, 17 significant digits, canonical ordering>
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import numpy as np

from core.errors import SnapshotFormatError
from core.harmonics import coefficient_count
from core.spectral import SpectralField

logger = logging.getLogger(__name__)

MAGIC = "QFLOW4"
FORMAT_VERSION = 1
HEADER_KEYS = ("format_version", "band_limit", "time", "alpha", "count")


@dataclass(frozen=True, eq=False)
class Snapshot:
    field: SpectralField
    time: float = 0.0
    alpha: float = 1.0
    format_version: int = FORMAT_VERSION

    @property
    def band_limit(self) -> int:
        return self.field.band_limit


def _g17(x: float) -> str:
    return "%.17g" % x


def format_snapshot(snapshot: Snapshot) -> str:
    lines: List[str] = [
        MAGIC,
        f"format_version = {snapshot.format_version}",
        f"band_limit = {snapshot.band_limit}",
        f"time = {_g17(snapshot.time)}",
        f"alpha = {_g17(snapshot.alpha)}",
        f"count = {len(snapshot.field.coeffs)}",
    ]
    lines.extend(_g17(float(c)) for c in snapshot.field.coeffs)
    return "\n".join(lines) + "\n"


def parse_snapshot(text: str) -> Snapshot:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise SnapshotFormatError(f"missing {MAGIC} magic line")
    if len(lines) < 1 + len(HEADER_KEYS):
        raise SnapshotFormatError("truncated header")
    header = {}
    for expected, raw in zip(HEADER_KEYS, lines[1:1 + len(HEADER_KEYS)]):
        key, sep, value = raw.partition("=")
        if not sep or key.strip() != expected:
            raise SnapshotFormatError(f"expected '{expected} = ...', got {raw!r}")
        header[expected] = value.strip()
    try:
        version = int(header["format_version"])
        band_limit = int(header["band_limit"])
        time = float(header["time"])
        alpha = float(header["alpha"])
        count = int(header["count"])
    except ValueError as e:
        raise SnapshotFormatError(f"bad header value: {e}") from e
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(f"unsupported format version {version}")
    if band_limit < 0 or count != coefficient_count(band_limit):
        raise SnapshotFormatError(f"band limit {band_limit} needs {coefficient_count(max(band_limit, 0))} coefficients, header says {count}")
    body = [line.strip() for line in lines[1 + len(HEADER_KEYS):]]
    while body and not body[-1]:
        body.pop()
    if len(body) != count:
        raise SnapshotFormatError(f"expected {count} coefficients, found {len(body)}")
    try:
        coeffs = np.array([float(v) for v in body])
    except ValueError as e:
        raise SnapshotFormatError(f"bad coefficient: {e}") from e
    if not np.all(np.isfinite(coeffs)):
        raise SnapshotFormatError("coefficients must be finite")
    return Snapshot(field=SpectralField(band_limit, coeffs), time=time, alpha=alpha,
                    format_version=version)


def write_snapshot(path: Union[str, Path], snapshot: Snapshot) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_snapshot(snapshot))
    logger.debug(f"Wrote snapshot {path} (L={snapshot.band_limit}, t={snapshot.time:.6g})")
    return path


def read_snapshot(path: Union[str, Path]) -> Snapshot:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_snapshot(fh.read())
