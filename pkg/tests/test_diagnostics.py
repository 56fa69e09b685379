import json

from farfield_doa.diagnostics import DiagnosticReport
from farfield_doa.scenario import Scenario, validate


def test_report_files(tmp_path):
    report = DiagnosticReport()
    report.add_error("too_few_receivers", "need at least 2 receivers, found 1", "receivers")
    report.add_warning("near_field", "q = 0.5 exceeds 0.1")
    report.generate_report(tmp_path / "out")

    data = json.loads((tmp_path / "out" / "validation_report.json").read_text())
    assert data["total_errors"] == 1
    assert data["total_warnings"] == 1
    assert data["diagnostics"][0] == {
        "severity": "error",
        "code": "too_few_receivers",
        "message": "need at least 2 receivers, found 1",
        "field": "receivers",
    }
    summary = (tmp_path / "out" / "validation_summary.txt").read_text()
    assert "Errors: 1" in summary
    assert "Field: receivers" in summary


def test_clean_report_says_so(tmp_path):
    report = DiagnosticReport()
    for d in validate(Scenario.from_arrays([[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]])):
        report.add_issue(d.severity, d.code, d.message, d.field)
    report.generate_report(tmp_path)
    assert "No issues found." in (tmp_path / "validation_summary.txt").read_text()
