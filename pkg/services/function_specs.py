"""
Spec strings for prescribed functions and initial data

    f:  const:<c> | linear:<a1>,...,<a5>;<c> | quadric:<a1>,...,<a5>;<c> | coeffs:<path>
    u0: zero | boost:<p1>,...,<p5>;<t> | random:<rms>;<max_degree> | file:<path>

random draws a mean-zero field of degree <= max_degree with L^2(dc) norm rms.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from core.errors import SnapshotFormatError, SpecParseError
from core.spectral import SpectralField, coordinate_field, grid_for, project_function, random_factor
from services.conformal_ops import PrescribedFunction, volume_normalized
from services.mobius_gauge import MobiusBoost, boost_factor
from storage.snapshot import read_snapshot

logger = logging.getLogger(__name__)


def _floats(text: str, count: Optional[int], what: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",")]
    except ValueError as e:
        raise SpecParseError(f"{what}: cannot parse numbers from {text!r}") from e
    if count is not None and len(values) != count:
        raise SpecParseError(f"{what}: expected {count} numbers, got {len(values)}")
    if not all(math.isfinite(v) for v in values):
        raise SpecParseError(f"{what}: numbers must be finite")
    return values


def _split_family(spec: str) -> Tuple[str, str]:
    family, sep, body = spec.strip().partition(":")
    return family.strip().lower(), body.strip()


def _vector_and_scalar(body: str, what: str) -> Tuple[List[float], float]:
    vec, sep, scalar = body.partition(";")
    if not sep:
        raise SpecParseError(f"{what}: expected '<a1>,...,<a5>;<c>', got {body!r}")
    return _floats(vec, 5, what), _floats(scalar, 1, what)[0]


def _load_coefficients(path: str) -> SpectralField:
    try:
        return read_snapshot(path).field
    except OSError as e:
        raise SpecParseError(f"cannot read coefficient file {path!r}: {e}") from e
    except SnapshotFormatError as e:
        raise SpecParseError(f"bad coefficient file {path!r}: {e}") from e


def f_field(spec: str, band_limit: int) -> SpectralField:
    """Coefficients of f padded (or truncated) to `band_limit`"""
    family, body = _split_family(spec)
    if family == "const":
        return SpectralField.constant(_floats(body, 1, "const")[0], band_limit)
    if family == "linear":
        a, c = _vector_and_scalar(body, "linear")
        field = SpectralField.constant(c, band_limit)
        for i, ai in enumerate(a, start=1):
            if ai != 0.0:
                field = field + coordinate_field(i).scaled(ai).resized(band_limit)
        return field
    if family == "quadric":
        a, c = _vector_and_scalar(body, "quadric")
        coeffs = np.array(a)
        field = project_function(lambda *x: sum(ai * xi * xi for ai, xi in zip(coeffs, x)), 2)
        return field.shifted(c).resized(band_limit)
    if family == "coeffs":
        if not body:
            raise SpecParseError("coeffs: missing path")
        return _load_coefficients(body).resized(band_limit)
    raise SpecParseError(f"unknown f family {family!r} in {spec!r}")


def parse_f_spec(spec: str, band_limit: int, polish: bool = True) -> PrescribedFunction:
    """Prescribed function on the flow grid of `band_limit`; raises NotPositiveSomewhere"""
    f = f_field(spec, band_limit)
    return PrescribedFunction.from_field(f, grid_for(band_limit), polish=polish)


def parse_u0_spec(spec: str, band_limit: int, seed: int = 0) -> SpectralField:
    """Initial factor at `band_limit`; every family except `zero` is volume-normalized"""
    family, body = _split_family(spec)
    if family == "zero":
        if body:
            raise SpecParseError(f"zero takes no arguments, got {body!r}")
        return SpectralField.zeros(band_limit)
    if family == "boost":
        p, t = _vector_and_scalar(body, "boost")
        pole = np.array(p)
        norm = float(np.linalg.norm(pole))
        if norm == 0.0:
            raise SpecParseError("boost: pole must be nonzero")
        field = boost_factor(MobiusBoost(pole / norm, t), band_limit)
    elif family == "random":
        rms_text, sep, degree_text = body.partition(";")
        if not sep:
            raise SpecParseError(f"random: expected '<rms>;<max_degree>', got {body!r}")
        rms = _floats(rms_text, 1, "random")[0]
        try:
            max_degree = int(degree_text.strip())
        except ValueError as e:
            raise SpecParseError(f"random: bad max_degree {degree_text!r}") from e
        if rms < 0 or max_degree < 0:
            raise SpecParseError("random: rms and max_degree must be nonnegative")
        # counter-based generator: one 64-bit seed fixes every draw
        rng = np.random.Generator(np.random.Philox(key=seed))
        field = random_factor(band_limit, rms, rng, max_degree)
    elif family == "file":
        if not body:
            raise SpecParseError("file: missing path")
        return _load_coefficients(body).resized(band_limit)
    else:
        raise SpecParseError(f"unknown u0 family {family!r} in {spec!r}")

    normalized, shift = volume_normalized(field)
    logger.info(f"u0 {spec!r}: volume normalization shift {shift:+.3e}")
    return normalized
