"""
Report serialisation.

CSV output has exactly the report columns in a fixed order; JSON mirrors the
rows. Numbers are written with Python's repr, so the decimal separator is
always '.', there are no thousands separators, and output does not depend on
the process locale.
"""

import csv
import io
import json
import logging
import os
from typing import Optional, Union

from pydantic import ValidationError

from config import REPORT_COLUMNS, ReportFormat
from src.core.errors import InputError, WorkflowParseError
from src.systems.harness import EvaluationReport, ReportRow

logger = logging.getLogger(__name__)


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_report(report: EvaluationReport, fmt: Union[ReportFormat, str] = ReportFormat.CSV) -> str:
    """
    Render a report as CSV or JSON text.

    Raises:
        InputError: If the report has no rows.
    """
    fmt = ReportFormat(fmt)
    if len(report) == 0:
        raise InputError("Cannot emit an empty report")
    if fmt is ReportFormat.JSON:
        payload = {"columns": list(REPORT_COLUMNS), "rows": [row.model_dump() for row in report]}
        return json.dumps(payload, indent=2) + "\n"
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in report:
        values = row.model_dump()
        writer.writerow([_cell(values[column]) for column in REPORT_COLUMNS])
    return buffer.getvalue()


def emit_report(report: EvaluationReport, fmt: Union[ReportFormat, str] = ReportFormat.CSV,
                path: Optional[str] = None) -> str:
    """
    Write a report to ``path``, or return it only when ``path`` is None.

    Args:
        report (EvaluationReport): Non-empty report.
        fmt (Union[ReportFormat, str]): ``csv`` or ``json``.
        path (Optional[str]): Destination file.

    Returns:
        str: The rendered text.

    Raises:
        InputError: If the report is empty.
        OSError: If the destination cannot be written.
    """
    text = format_report(report, fmt)
    if path is not None:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        logger.info("Wrote %d report rows to %s", len(report), path)
    return text


def parse_report(text: str, fmt: Union[ReportFormat, str]) -> EvaluationReport:
    """Inverse of format_report."""
    fmt = ReportFormat(fmt)
    try:
        if fmt is ReportFormat.JSON:
            rows = json.loads(text)["rows"]
        else:
            reader = csv.DictReader(io.StringIO(text))
            if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
                raise WorkflowParseError(f"Unexpected report columns {reader.fieldnames}")
            rows = list(reader)
        return EvaluationReport([ReportRow.model_validate(row) for row in rows])
    except (ValueError, KeyError, TypeError, ValidationError) as e:
        raise WorkflowParseError(f"Invalid {fmt.value} report: {e}") from e


def load_report(path: str) -> EvaluationReport:
    """
    Read a report written by emit_report; the format follows the extension.

    Raises:
        WorkflowParseError: If the file is unreadable or malformed.
    """
    fmt = ReportFormat.JSON if path.lower().endswith(".json") else ReportFormat.CSV
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            text = handle.read()
    except (OSError, UnicodeDecodeError) as e:
        raise WorkflowParseError(f"Cannot read {path}: {e}") from e
    return parse_report(text, fmt)
