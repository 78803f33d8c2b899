import json

import pytest
from pydantic import ValidationError

from sov_verify.core.exceptions import IoError
from sov_verify.schemas.report import CheckRecord, Report, SuiteConfig
from sov_verify.services.reporting import emit_report, load_report, render_json, render_text, report_frame


def record(name, lhs, rhs, tol=1e-6, **extra):
    abs_err = abs(lhs - rhs)
    rel_err = abs_err / abs(rhs) if rhs else abs_err
    measured = rel_err if rhs else abs_err
    return CheckRecord(
        name=name, anchor=f"{name} anchor", lhs=lhs, rhs=rhs, abs_err=abs_err, rel_err=rel_err, tol=tol,
        passed=measured <= tol, **extra,
    )


@pytest.fixture
def report():
    return Report(
        suite="gamma",
        seed=7,
        checks=[
            record("exact", 1 + 2j, 1 + 2j),
            record("off", 1.1 + 0j, 1.0 + 0j),
            record("zero", 1e-9 + 0j, 0j),
        ],
    )


def test_summary_counts(report):
    summary = report.summary
    assert (summary.total, summary.passed, summary.failed, summary.errors) == (3, 2, 1, 0)
    assert not report.ok


def test_verdict_must_match_errors():
    with pytest.raises(ValidationError):
        CheckRecord(name="x", anchor="a", lhs=1, rhs=1, abs_err=0.5, rel_err=0.5, tol=1e-3, passed=True)
    errored = CheckRecord(
        name="x", anchor="a", lhs=0, rhs=0, abs_err=0, rel_err=0, tol=1e-3, passed=False, error="PoleEncountered: x"
    )
    assert errored.error.startswith("PoleEncountered")


def test_suite_config_validation():
    with pytest.raises(ValidationError):
        SuiteConfig(suite="gamma", tolerances={"gamma": 0.0})
    with pytest.raises(ValidationError):
        SuiteConfig(suite="gamma", budget=-1)
    assert SuiteConfig(suite="rules").seed == 20240517


def test_json_layout(report):
    payload = json.loads(render_json(report))
    assert payload["summary"]["passed"] == 2
    first = payload["checks"][0]
    assert first["pass"] is True
    assert first["anchor"] == "exact anchor"
    assert "passed" not in first


def test_emit_and_load(tmp_path, report):
    path = tmp_path / "nested" / "report.json"
    emit_report(report, str(path), "json")
    loaded = load_report(str(path))
    assert [c.name for c in loaded.checks] == ["exact", "off", "zero"]
    assert loaded.checks[0].lhs == 1 + 2j
    assert loaded.summary == report.summary


def test_empty_report(tmp_path):
    path = tmp_path / "empty.json"
    emit_report(Report(suite="rules", seed=1), str(path))
    payload = json.loads(path.read_text())
    assert payload["checks"] == []
    assert payload["summary"]["total"] == 0


def test_text_table(report):
    text = render_text(report)
    assert text.startswith("suite gamma (seed 7): 2/3 passed, 1 failed, 0 errors")
    assert "exact anchor" in text
    assert "1+2j" in text
    assert report_frame(report).shape[0] == 3


def test_text_marks_partial_report():
    partial = Report(suite="eigen", seed=1, budget_exceeded=True)
    assert "budget exceeded" in render_text(partial)


def test_emit_errors(tmp_path, report):
    with pytest.raises(IoError):
        emit_report(report, str(tmp_path / "r.xml"), "xml")
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        emit_report(report, str(blocker / "r.json"))
    with pytest.raises(IoError):
        load_report(str(tmp_path / "missing.json"))


def test_tables_are_rendered_and_kept(tmp_path):
    rows = [{"window": "1x", "lhs": "0.5+0j", "abs_err": 1e-3}, {"window": "aitken", "lhs": "0.501+0j", "abs_err": 1e-7}]
    report = Report(suite="gustafson", seed=3, checks=[record("first", 0.501 + 0j, 0.501 + 0j, table=rows)])
    text = render_text(report)
    assert "\nfirst:\n" in text
    assert "aitken" in text
    path = tmp_path / "report.json"
    emit_report(report, str(path))
    assert load_report(str(path)).checks[0].table == rows
    assert json.loads(render_json(report))["checks"][0]["table"][1]["window"] == "aitken"
