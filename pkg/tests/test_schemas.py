import math

import pytest
from pydantic import ValidationError

from core.errors import ConfigurationError
from models.schemas import (
    ConcentrationScan,
    FlowConfig,
    FlowTraceRow,
    GridSpec,
    MorseReport,
    RunConfig,
)

CONFIG_TEXT = """
# prescribed function and start
f_spec = quadric:1,2,3.5,4,5;0
u0_spec = random:0.05;3
seed = 42
band_limit = 12   # grid
dt_init = 0.002
t_max = 5
sigma_policy = fixed:0.5
scan_enabled = false
"""


def test_run_config_from_text():
    config = RunConfig.from_text(CONFIG_TEXT)
    assert config.f_spec == "quadric:1,2,3.5,4,5;0"
    assert config.grid == GridSpec(band_limit=12, oversample=2)
    assert config.seed == 42
    assert config.t_max == 5.0
    assert config.sigma_fixed == 0.5
    assert not config.scan_enabled
    assert config.gauge_enabled


def test_run_config_text_round_trip():
    config = RunConfig.from_text(CONFIG_TEXT)
    text = config.to_text()
    assert text.splitlines()[0] == "band_limit = 12"
    assert "scan_enabled = false" in text
    assert RunConfig.from_text(text) == config


def test_flow_config_is_the_flow_part():
    config = RunConfig.from_text(CONFIG_TEXT)
    flow = config.flow_config()
    assert isinstance(flow, FlowConfig) and not isinstance(flow, RunConfig)
    assert flow.grid.band_limit == 12
    assert flow.dt_init == 0.002


@pytest.mark.parametrize("text", [
    "f_spec const:3",
    "= 3",
    "f_spec = const:3\nf_spec = const:2",
    "f_spec = const:3\nbogus = 1",
    "u0_spec = zero",
    "f_spec = const:3\nband_limit = 2",
    "f_spec = const:3\ndt_init = 1\ndt_max = 0.1",
    "f_spec = const:3\nsigma_policy = sometimes",
    "f_spec = const:3\nseed = -1",
])
def test_bad_config_text(text):
    with pytest.raises(ConfigurationError):
        RunConfig.from_text(text)


def test_sigma_policy():
    assert FlowConfig().sigma_fixed is None
    assert FlowConfig(sigma_policy=" fixed:2 ").sigma_fixed == 2.0
    with pytest.raises(ValidationError):
        FlowConfig(sigma_policy="fixed:")


def test_trace_rows_must_be_finite():
    with pytest.raises(ValidationError):
        FlowTraceRow(t=0.0, dt=1e-3, alpha=math.nan, E=0.0, E_f=0.0, volume=1.0, calabi=0.0,
                     beckner_gap=0.0, gb_residual=0.0, com_norm=0.0, h1_v=0.0, exp_integral=1.0,
                     conc_radius=1.0, conc_mass=1.0, q_min=3.0, q_max=3.0)


def test_morse_report_consistency():
    with pytest.raises(ValidationError):
        MorseReport(points=[], m=[1, 0, 0, 0, 0], k=None, k_recursion=[0, 0, 0, 0],
                    feasible=True, condition_satisfied=True, degree_sum=1, euler_sum=2)
    with pytest.raises(ValidationError):
        MorseReport(points=[], m=[1, 0, 0, 0, 0], k=None, k_recursion=[0, 0, 0, 0],
                    feasible=True, condition_satisfied=False, degree_sum=1, euler_sum=2)


def test_scan_radius_is_bounded():
    with pytest.raises(ValidationError):
        ConcentrationScan(radius=4.0, center=[0, 0, 0, 0, 1], mass_at_center=1.0,
                          q_mass_at_center=1.0, wide_mass=1.0)
