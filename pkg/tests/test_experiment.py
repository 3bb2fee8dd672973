import pytest

from pepagg.experiment import (ComparisonRow, ConditionFailed, ExperimentSpec, Measure, TABLE1_MEASURES, bundled,
                               diff_golden, load_golden, results_json, rows_csv, run_case, run_cases)
from pepagg.syntax import parse_model

from conftest import MODEL1, cs_model

CS = bundled("client_server.pepa")


def test_cases_cartesian_and_zipped():
    spec = ExperimentSpec(CS, {"r_t": [1, 2], "r_s": [3, 4]})
    assert spec.cases() == [{"r_s": 3, "r_t": 1}, {"r_s": 3, "r_t": 2}, {"r_s": 4, "r_t": 1}, {"r_s": 4, "r_t": 2}]
    zipped = ExperimentSpec(CS, {"r_t": [1, 2], "r_s": [3, 4]}, zipped=True)
    assert zipped.cases() == [{"r_s": 3, "r_t": 1}, {"r_s": 4, "r_t": 2}]
    assert ExperimentSpec(CS).cases() == [{}]
    with pytest.raises(ValueError):
        ExperimentSpec(CS, {"r_t": [1, 2], "r_s": [3]}, zipped=True).cases()


def test_error_pct():
    assert ComparisonRow("m", 0.02, 0.056).error_pct == pytest.approx(180.0)
    assert ComparisonRow("m", 0.0, 0.1).error_pct is None
    assert ComparisonRow("m", None, 0.1).error_pct is None


def test_run_case_modes():
    m = cs_model(2, 5)
    both = run_case(m, TABLE1_MEASURES[3:], "both")
    assert both.full_states and both.aggregated_states == 6
    approx = run_case(m, TABLE1_MEASURES[3:], "approx")
    assert approx.full_states is None and all(r.exact is None for r in approx.rows)
    assert [r.approximate for r in approx.rows] == [r.approximate for r in both.rows]


def test_condition_checked():
    with pytest.raises(ConditionFailed):
        run_case(parse_model(MODEL1), TABLE1_MEASURES)


def test_parallel_matches_sequential():
    cases = [{"r_t": 15.0}, {"r_t": 0.1}]
    measures = [Measure("E2", "S_idle + S_log == 2")]
    seq = run_cases(CS, cases, measures, jobs=1)
    par = run_cases(CS, cases, measures, jobs=2)
    assert rows_csv(seq) == rows_csv(par)
    assert results_json(seq) == results_json(par)


def test_diff_golden_reports_cells():
    golden = load_golden()
    res = run_cases(CS, [{"r_t": 15.0}], TABLE1_MEASURES, mode="approx", jobs=1)
    bad = diff_golden(res, golden)
    assert {c["column"] for c in bad} == {"approximate"}
    assert all(c["case"] == 1 for c in bad)
