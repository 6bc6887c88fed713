from models.schemas import CriticalPoint, MorseReport, RunSummary, SelftestCheck
from services.report_service import ReportService

POINT = CriticalPoint(location=[0, 0, 0, 0, 1], f_value=3.0, grad_norm=0.0,
                      hessian_eigenvalues=[-1.0] * 4, morse_index=4, laplacian_value=-4.0)


def test_morse_report_rendering():
    report = MorseReport(points=[POINT], m=[1, 0, 0, 0, 0], k=[0, 0, 0, 0, 0], k_recursion=[0, 0, 0, 0],
                         feasible=True, condition_satisfied=False, degree_sum=1, euler_sum=1)
    text = ReportService().render_morse_report(report)
    assert "(+0.00000000, +0.00000000, +0.00000000, +0.00000000, +1.00000000)" in text
    assert "m = (1, 0, 0, 0, 0)" in text
    assert "k = (0, 0, 0, 0, 0)" in text
    assert text.rstrip().endswith("verdict: CONDITION FAILS")


def test_infeasible_report_shows_the_recursion():
    report = MorseReport(points=[], m=[2, 2, 2, 0, 0], k_recursion=[1, 1, 1, -1], feasible=False,
                         condition_satisfied=True, degree_sum=2, euler_sum=2,
                         hypothesis_violations=["Laplacian vanishes at critical point (0, 0, 1, 0, 0)"])
    text = ReportService().render_morse_report(report)
    assert "k = INFEASIBLE (recursion 1, 1, 1, -1)" in text
    assert "violation: Laplacian vanishes" in text
    assert "HYPOTHESES VIOLATED" in text


def test_selftest_table():
    checks = [SelftestCheck(suite="operator", name="spectrum", passed=True, detail="ok"),
              SelftestCheck(suite="gauge", name="round metric", passed=False, detail="max |Q - 3| = 1e-3")]
    text = ReportService().render_selftest(checks, 16)
    assert "band limit 16" in text
    assert "FAIL" in text
    assert "1/2 checks passed" in text


def test_run_summary_rendering():
    summary = RunSummary(verdict="Concentrated", steps=40, t_final=2.0, final_alpha=1.25,
                         E_f_initial=0.5, E_f_final=-1.0, dissipation_slack=1e-9,
                         concentration_point=[0.0, 0.0, 0.0, 0.0, 1.0], wall_time_s=3.2)
    text = ReportService().render_run_summary(summary)
    assert text.startswith("📊 Run finished: Concentrated")
    assert "concentration point: (+0.000000, +0.000000, +0.000000, +0.000000, +1.000000)" in text


def test_normalize_rendering():
    text = ReportService().render_normalize(pole=[0.0, 0.0, 0.0, 0.0, 1.0], t=0.5, iterations=3,
                                            com_before=0.4, com_after=1e-12, E_before=1.0, E_after=0.0)
    assert "iterations: 3" in text
    assert "|com| after:  1.000e-12" in text


def test_run_summary_shows_bubble_and_prescribed_lines():
    concentrated = RunSummary(verdict="Concentrated", steps=40, t_final=2.0, final_alpha=1.25,
                              E_f_initial=0.5, E_f_final=-1.0, dissipation_slack=1e-9,
                              concentration_point=[0.0, 0.0, 0.0, 0.0, 1.0], local_alpha_f=3.0,
                              bubble_residual=2e-3, wall_time_s=3.2)
    text = ReportService().render_run_summary(concentrated)
    assert "local alpha f at the point: 3 (bubble residual 2.000e-03)" in text
    assert "||Q - f||" not in text

    converged = RunSummary(verdict="Converged", steps=12, t_final=0.5, final_alpha=1.0,
                           E_f_initial=0.1, E_f_final=0.0, dissipation_slack=0.0,
                           prescribed_residual=4e-11, wall_time_s=0.1)
    text = ReportService().render_run_summary(converged)
    assert "||Q - f|| after absorbing alpha: 4.000e-11" in text
    assert "local alpha f" not in text
