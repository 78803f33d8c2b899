import json
import logging
import os
from typing import Literal

import pandas as pd

from sov_verify.core.exceptions import IoError
from sov_verify.schemas.report import Report

logger = logging.getLogger(__name__)

COLUMNS = ["name", "anchor", "lhs", "rhs", "abs_err", "rel_err", "tol", "pass", "evals", "wall_time"]


def report_frame(report: Report) -> pd.DataFrame:
    """One row per check, in report order."""
    rows = [check.model_dump(by_alias=True) for check in report.checks]
    frame = pd.DataFrame(rows, columns=COLUMNS + ["error"])
    return frame


def render_text(report: Report) -> str:
    frame = report_frame(report)
    summary = report.summary
    header = (
        f"suite {report.suite} (seed {report.seed}): {summary.passed}/{summary.total} passed, "
        f"{summary.failed} failed, {summary.errors} errors"
    )
    if report.budget_exceeded:
        header += " [budget exceeded, partial]"
    if frame.empty:
        return header + "\n"
    table = frame[COLUMNS].copy()
    table["lhs"] = table["lhs"].map(lambda z: f"{z.real:.10g}{z.imag:+.10g}j")
    table["rhs"] = table["rhs"].map(lambda z: f"{z.real:.10g}{z.imag:+.10g}j")
    text = header + "\n" + table.to_string(index=False, float_format=lambda v: f"{v:.3g}") + "\n"
    for check in report.checks:
        if check.table:
            text += f"\n{check.name}:\n" + pd.DataFrame(check.table).to_string(index=False) + "\n"
    return text


def render_json(report: Report) -> str:
    payload = report.model_dump(mode="json", by_alias=True)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def emit_report(report: Report, path: str, format: Literal["json", "text"] = "json") -> None:
    """
    Write a report to disk

    Args:
        report: The report to write
        path: Target file; parent directories are created
        format: "json" for the schema-stable form, "text" for a table

    Raises:
        IoError: If the file cannot be written
    """
    if format == "json":
        content = render_json(report)
    elif format == "text":
        content = render_text(report)
    else:
        raise IoError(f"unknown report format {format!r}")
    try:
        folder = os.path.dirname(os.path.abspath(path))
        os.makedirs(folder, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(content)
    except OSError as e:
        raise IoError(f"Failed to write report {path}: {str(e)}")
    logger.info("Wrote %s report with %d checks to %s", format, len(report.checks), path)


def load_report(path: str) -> Report:
    """Read a JSON report written by `emit_report`."""
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise IoError(f"Failed to read report {path}: {str(e)}")
    payload.pop("summary", None)
    return Report.model_validate(payload)
