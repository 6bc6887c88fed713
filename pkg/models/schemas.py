"""
Pydantic schemas for configuration, trace rows and reports
"""
import math
import re
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.errors import ConfigurationError

VerdictKind = Literal["Converged", "Concentrated", "TimeExhausted", "Failed"]

_SIGMA_RE = re.compile(r"^(auto|fixed:\s*[-+0-9.eE]+)$")


class GridSpec(BaseModel):
    """Discretization resolution: band limit and oversampling factor"""
    band_limit: int = Field(default=16, ge=4)
    oversample: int = Field(default=2, ge=1)

    model_config = ConfigDict(extra="forbid", frozen=True)

    def base(self) -> "GridSpec":
        """Same band limit without oversampling"""
        return GridSpec(band_limit=self.band_limit, oversample=1)


class FlowConfig(BaseModel):
    """Time integration parameters of a flow run"""
    grid: GridSpec = Field(default_factory=GridSpec)
    dt_init: float = Field(default=1e-3, gt=0)
    dt_min: float = Field(default=1e-8, gt=0)
    dt_max: float = Field(default=1e-1, gt=0)
    t_max: float = Field(default=200.0, gt=0)
    sigma_policy: str = Field(default="auto")
    tol_calabi: float = Field(default=1e-8, ge=0)
    snapshot_every: int = Field(default=20, ge=1)
    gauge_tol: float = Field(default=1e-10, gt=0)
    tail_tol: float = Field(default=1e-6, gt=0)
    gauge_enabled: bool = True
    scan_enabled: bool = True

    model_config = ConfigDict(extra="forbid", frozen=True)

    @field_validator("sigma_policy")
    @classmethod
    def _check_sigma_policy(cls, value: str) -> str:
        value = value.strip()
        if not _SIGMA_RE.match(value):
            raise ValueError(f"sigma_policy must be 'auto' or 'fixed:<value>', got {value!r}")
        if value != "auto":
            float(value.split(":", 1)[1])
        return value

    @model_validator(mode="after")
    def _check_dt_order(self) -> "FlowConfig":
        if not (self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need dt_min <= dt_init <= dt_max")
        return self

    @property
    def sigma_fixed(self) -> Optional[float]:
        """Fixed stabilization constant, or None under the auto policy"""
        if self.sigma_policy == "auto":
            return None
        return float(self.sigma_policy.split(":", 1)[1])


class RunConfig(FlowConfig):
    """Everything `qflow run` needs; serialized as flat `key = value` text"""
    f_spec: str
    u0_spec: str = "zero"
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    out_dir: str = "runs/default"
    format_version: int = Field(default=1, ge=1)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        """Parse the flat config format (`#` comments, one `key = value` per line)"""
        values: Dict[str, Any] = {}
        grid: Dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigurationError(f"line {lineno}: empty key")
            target = grid if key in GridSpec.model_fields else values
            if key in target:
                raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
            target[key] = value
        if grid:
            values["grid"] = grid
        try:
            return cls.model_validate(values)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e

    def to_text(self) -> str:
        """Inverse of from_text; floats use repr so parsing is lossless"""
        lines: List[str] = []
        for key, value in self.flat_items():
            lines.append(f"{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    def flat_items(self) -> List[Tuple[str, Any]]:
        items: List[Tuple[str, Any]] = [
            ("band_limit", self.grid.band_limit),
            ("oversample", self.grid.oversample),
        ]
        for name in type(self).model_fields:
            if name != "grid":
                items.append((name, getattr(self, name)))
        return items

    def flow_config(self) -> FlowConfig:
        data = {name: getattr(self, name) for name in FlowConfig.model_fields}
        return FlowConfig(**data)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# CSV column order of trace.csv; fixed
TRACE_COLUMNS: Tuple[str, ...] = (
    "t", "dt", "alpha", "E", "E_f", "volume", "calabi", "beckner_gap",
    "gb_residual", "com_norm", "h1_v", "exp_integral", "conc_radius",
    "conc_mass", "q_min", "q_max",
)


class FlowTraceRow(BaseModel):
    """One diagnostics sample of a flow run"""
    t: float
    dt: float
    alpha: float
    E: float
    E_f: float
    volume: float = Field(gt=0)
    calabi: float = Field(ge=0)
    beckner_gap: float
    gb_residual: float
    com_norm: float
    h1_v: float
    exp_integral: float
    conc_radius: float
    conc_mass: float
    q_min: float
    q_max: float

    # Extras, not written to trace.csv
    step: int = 0
    f_mass: float = 0.0
    qf_moment: float = 0.0
    E_v: Optional[float] = None
    dissipated: float = 0.0

    model_config = ConfigDict(extra="forbid", frozen=True)

    @field_validator("*")
    @classmethod
    def _finite(cls, value: Any) -> Any:
        if isinstance(value, float) and not math.isfinite(value):
            raise ValueError("trace values must be finite")
        return value

    def csv_values(self) -> List[str]:
        return [repr(float(getattr(self, name))) for name in TRACE_COLUMNS]


class CriticalPoint(BaseModel):
    """Nondegenerate (or flagged) critical point of a prescribed function"""
    location: List[float] = Field(min_length=5, max_length=5)
    f_value: float
    grad_norm: float
    hessian_eigenvalues: List[float] = Field(min_length=4, max_length=4)
    morse_index: int = Field(ge=0, le=4)
    laplacian_value: float
    degenerate: bool = False

    model_config = ConfigDict(frozen=True)


class MorseReport(BaseModel):
    """Critical point census with the m_i counts and k_i feasibility"""
    points: List[CriticalPoint]
    m: List[int] = Field(min_length=5, max_length=5)
    k: Optional[List[int]] = None
    k_recursion: List[int] = Field(min_length=4, max_length=4)
    feasible: bool
    condition_satisfied: bool
    degree_sum: int
    euler_sum: int
    hypothesis_violations: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _consistent(self) -> "MorseReport":
        if self.condition_satisfied == self.feasible:
            raise ValueError("condition_satisfied must be the negation of feasible")
        if (self.k is not None) != self.feasible:
            raise ValueError("k is present exactly when the system is feasible")
        return self


class ConcentrationScan(BaseModel):
    """Smallest ball carrying the |Q| mass threshold"""
    radius: float = Field(gt=0, le=math.pi + 1e-12)
    center: List[float] = Field(min_length=5, max_length=5)
    mass_at_center: float = Field(ge=0)
    q_mass_at_center: float = Field(ge=0)
    wide_mass: float = Field(ge=0)
    threshold_reached: bool = True
    center_index: int = 0


class RunSummary(BaseModel):
    """Contents of summary.json"""
    verdict: VerdictKind
    message: str = ""
    steps: int
    t_final: float
    final_alpha: float
    E_f_initial: float
    E_f_final: float
    dissipation_slack: float
    energy_sandwich_violation: float = 0.0
    alpha_bounds_ok: bool = True
    concentration_point: Optional[List[float]] = None
    local_alpha_f: Optional[float] = None
    bubble_residual: Optional[float] = None
    prescribed_residual: Optional[float] = None
    final_u_sha256: str = ""
    config_sha256: str = ""
    wall_time_s: float
    trace_sha256: str = ""
    config: Dict[str, Any] = Field(default_factory=dict)


class SelftestCheck(BaseModel):
    """One line of the selftest table"""
    suite: str
    name: str
    passed: bool
    detail: str = ""
