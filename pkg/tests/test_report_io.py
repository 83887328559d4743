import json
import locale

import pytest

from config import REPORT_COLUMNS
from src.core.errors import InputError, WorkflowParseError
from src.systems.harness import EvaluationReport, ReportRow
from src.utils.report_io import emit_report, format_report, load_report, parse_report


def report():
    return EvaluationReport([
        ReportRow(method="mcpp", model_set="m0|m1", width_set="1|4|16|64", budget_usd=0.25, deadline_s=60.0,
                  n_eval=10_000, n_sim=64, success_rate=0.8125, ci_radius=0.013580986393225505,
                  mean_planner_s=0.0123, seed=7),
        ReportRow(method="retry", model_set="m1", width_set="4", budget_usd=0.25, deadline_s=60.0,
                  n_eval=10_000, n_sim=0, success_rate=0.5, ci_radius=0.013580986393225505,
                  mean_planner_s=0.0, seed=7),
    ])


def test_csv_has_a_header_and_one_line_per_row():
    lines = format_report(report(), "csv").splitlines()
    assert len(lines) == 3
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1].startswith("mcpp,m0|m1,1|4|16|64,0.25,60.0,10000,64,0.8125,")


def test_single_row_report():
    single = EvaluationReport(report().rows[:1])
    assert len(format_report(single, "csv").splitlines()) == 2


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip(fmt):
    assert parse_report(format_report(report(), fmt), fmt) == report()


def test_json_lists_the_columns():
    payload = json.loads(format_report(report(), "json"))
    assert payload["columns"] == list(REPORT_COLUMNS)
    assert payload["rows"][1]["method"] == "retry"


def test_empty_report_is_refused():
    with pytest.raises(InputError):
        format_report(EvaluationReport(), "csv")


@pytest.mark.parametrize("text, fmt", [
    ("not,a,report\n1,2,3\n", "csv"),
    ("{\"rows\": [{\"method\": \"mcpp\"}]}", "json"),
    ("[]", "json"),
])
def test_malformed_reports(text, fmt):
    with pytest.raises(WorkflowParseError):
        parse_report(text, fmt)


def test_emit_and_load(tmp_path):
    for name in ("nested/report.csv", "report.json"):
        path = tmp_path / name
        text = emit_report(report(), "json" if name.endswith(".json") else "csv", str(path))
        assert path.read_text(encoding="utf-8") == text
        assert load_report(str(path)) == report()


def test_load_missing_report(tmp_path):
    with pytest.raises(WorkflowParseError):
        load_report(str(tmp_path / "absent.csv"))


def test_undecodable_report(tmp_path):
    path = tmp_path / "report.csv"
    path.write_bytes(b"method\n\xff\n")
    with pytest.raises(WorkflowParseError):
        load_report(str(path))


def test_output_ignores_the_locale():
    expected = format_report(report(), "csv")
    previous = locale.setlocale(locale.LC_NUMERIC)
    try:
        for name in ("de_DE.UTF-8", "fr_FR.UTF-8"):
            try:
                locale.setlocale(locale.LC_NUMERIC, name)
            except locale.Error:
                continue
            assert format_report(report(), "csv") == expected
    finally:
        locale.setlocale(locale.LC_NUMERIC, previous)
    assert "0.8125" in expected
