import json

import pytest

from cli.qflow_cli import EXIT_CONDITION_FAILS, EXIT_ERROR, EXIT_HYPOTHESES_VIOLATED, build_parser, main
from services.mobius_gauge import MobiusBoost, boost_factor
from storage.snapshot import Snapshot, read_snapshot, write_snapshot


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_parser_reads_check_f_options():
    args = build_parser().parse_args(["--quiet", "check-f", "--f", "const:1", "--band-limit", "6"])
    assert args.quiet
    assert args.f_spec == "const:1"
    assert args.band_limit == 6


@pytest.mark.asyncio
@pytest.mark.parametrize("spec, code", [
    ("quadric:1,2,3.5,4,5;0", 0),
    ("linear:0,0,0,0,1;2", EXIT_CONDITION_FAILS),
    ("quadric:1,2,3,4,5;0", EXIT_HYPOTHESES_VIOLATED),
    ("cubic:1", EXIT_ERROR),
])
async def test_check_f_exit_codes(spec, code, capsys):
    assert await main(["--quiet", "check-f", "--f", spec, "--band-limit", "4"]) == code
    out = capsys.readouterr().out
    if code != EXIT_ERROR:
        assert out.startswith("📊 Critical points")


@pytest.mark.asyncio
async def test_constant_f_violates_hypotheses(capsys):
    assert await main(["--quiet", "check-f", "--f", "const:2", "--band-limit", "4"]) == EXIT_HYPOTHESES_VIOLATED
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "constant f has no isolated critical points" in captured.err


@pytest.mark.asyncio
async def test_normalize_missing_snapshot(tmp_path, capsys):
    code = await main(["normalize", "--in", str(tmp_path / "missing.qf4"), "--out", str(tmp_path / "out.qf4")])
    assert code == EXIT_ERROR
    assert "❌" in capsys.readouterr().err


@pytest.mark.asyncio
async def test_normalize_writes_the_gauged_factor(tmp_path, capsys):
    pole = [0.0, 0.6, 0.0, 0.0, 0.8]
    source = write_snapshot(tmp_path / "in.qf4",
                            Snapshot(field=boost_factor(MobiusBoost(pole, 0.4), 12), time=1.5, alpha=2.0))
    target = tmp_path / "out.qf4"
    assert await main(["normalize", "--in", str(source), "--out", str(target)]) == 0
    out = read_snapshot(target)
    assert out.time == 1.5 and out.alpha == 2.0
    assert "Gauge normalization" in capsys.readouterr().out


@pytest.mark.asyncio
async def test_run_of_a_critical_start(tmp_path, capsys):
    config = tmp_path / "run.txt"
    config.write_text("f_spec = const:3\nband_limit = 6\nt_max = 1\n", encoding="utf-8")
    out_dir = tmp_path / "out"
    assert await main(["--quiet", "run", "--config", str(config), "--out", str(out_dir)]) == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["verdict"] == "Converged"
    assert summary["steps"] == 0
    assert summary["config"]["out_dir"] == str(out_dir)
    assert (out_dir / "trace.csv").exists()
    assert (out_dir / "snap_000000.qf4").exists()
    assert (out_dir / "prescribed.qf4").exists()
    assert summary["prescribed_residual"] < 1e-10
    assert len(summary["final_u_sha256"]) == 64 and len(summary["config_sha256"]) == 64
    assert "Run finished: Converged" in capsys.readouterr().out


@pytest.mark.asyncio
async def test_run_with_missing_config(tmp_path):
    assert await main(["run", "--config", str(tmp_path / "none.txt")]) == EXIT_ERROR


@pytest.mark.asyncio
async def test_runs_are_bitwise_reproducible(tmp_path):
    config = tmp_path / "run.txt"
    config.write_text("f_spec = linear:0,0,0,0,0.5;2\nu0_spec = random:0.05;2\nseed = 3\n"
                      "band_limit = 6\nt_max = 0.02\nsnapshot_every = 2\n", encoding="utf-8")
    codes, traces, summaries = [], [], []
    for name in ("first", "second"):
        out_dir = tmp_path / name
        codes.append(await main(["--quiet", "run", "--config", str(config), "--out", str(out_dir)]))
        traces.append((out_dir / "trace.csv").read_bytes())
        summaries.append(json.loads((out_dir / "summary.json").read_text()))
    assert codes[0] == codes[1]
    assert traces[0] == traces[1]
    assert traces[0].count(b"\n") >= 3
    assert summaries[0]["trace_sha256"] == summaries[1]["trace_sha256"]
    assert summaries[0]["final_u_sha256"] == summaries[1]["final_u_sha256"]
