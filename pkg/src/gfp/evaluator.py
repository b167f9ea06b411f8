"""Score prediction sets against gold answers and render accuracy tables,
error-taxonomy breakdowns, and gold-hint ablation curves.

Accuracy is re-derived here from each record's execution outcome and the gold
answer, never trusted from the prediction file, and is rendered to two
decimals with ties rounding half away from zero.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .core import (
    DEFAULT_TOLERANCE,
    GfpError,
    NumericTolerance,
    Problem,
    UnknownProblemId,
    index_problems,
)
from .executor import Category, error_category
from .inference import EvalRecord

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("dataset", "n", "accuracy", "understanding", "compilation")
AVERAGE_ROW_LABEL = "AVG"


class EmptyRecordSet(GfpError):
    """score() needs at least one record."""


class DuplicateFraction(GfpError):
    """Two ablation points claim the same hint fraction."""


@dataclass(frozen=True)
class Report:
    dataset_name: str
    n_items: int
    n_correct: int
    accuracy_percent: float
    n_understanding_errors: int
    n_compilation_errors: int
    mode: str


def _round2(value: float | Decimal) -> Decimal:
    if not isinstance(value, Decimal):
        value = Decimal(str(value))
    return value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


def format_accuracy(value: float | Decimal) -> str:
    return str(_round2(value))


def score(records: Sequence[EvalRecord], problems: Iterable[Problem] | Mapping[str, Problem],
          tol: NumericTolerance = DEFAULT_TOLERANCE,
          dataset_name: str = "dataset") -> Report:
    """Count correct / understanding / compilation outcomes over a record set."""
    if not records:
        raise EmptyRecordSet("cannot score an empty record set")
    by_id = problems if isinstance(problems, Mapping) else index_problems(problems)

    counts = {Category.CORRECT: 0, Category.UNDERSTANDING_ERROR: 0, Category.COMPILATION_ERROR: 0}
    for record in records:
        problem = by_id.get(record.problem_id)
        if problem is None:
            raise UnknownProblemId(f"prediction references unknown problem {record.problem_id!r}")
        counts[error_category(record.outcome, problem.gold_answer, tol)] += 1

    n = len(records)
    n_correct = counts[Category.CORRECT]
    return Report(
        dataset_name=dataset_name,
        n_items=n,
        n_correct=n_correct,
        accuracy_percent=100.0 * n_correct / n,
        n_understanding_errors=counts[Category.UNDERSTANDING_ERROR],
        n_compilation_errors=counts[Category.COMPILATION_ERROR],
        mode=_mode_of(records),
    )


def _mode_of(records: Sequence[EvalRecord]) -> str:
    sources = {(r.hint_source, r.gold_fraction) for r in records}
    if len(sources) != 1:
        return "mixed"
    source, fraction = next(iter(sources))
    if source == "generated":
        return "two_stage"
    return "gold" if fraction is None else f"gold({fraction:g})"


def _report_rows(reports: Sequence[Report]) -> list[tuple[str, str, str, str, str]]:
    rows = [
        (r.dataset_name, str(r.n_items), format_accuracy(r.accuracy_percent),
         str(r.n_understanding_errors), str(r.n_compilation_errors))
        for r in reports
    ]
    if len(reports) > 1:
        mean = sum(Decimal(str(r.accuracy_percent)) for r in reports) / len(reports)
        rows.append((AVERAGE_ROW_LABEL, "", format_accuracy(mean), "", ""))
    return rows


def render_report(reports: Sequence[Report], format: str = "markdown") -> str:
    """Render reports as a markdown or CSV table.

    Column order is fixed (dataset, n, accuracy, understanding, compilation).
    With more than one dataset an AVG row carrying the mean accuracy is
    appended.
    """
    rows = _report_rows(reports)
    if format == "markdown":
        lines = [
            "| " + " | ".join(REPORT_COLUMNS) + " |",
            "| " + " | ".join("---" for _ in REPORT_COLUMNS) + " |",
        ]
        lines.extend("| " + " | ".join(row) + " |" for row in rows)
        return "\n".join(lines) + "\n"
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    raise ValueError(f"unknown report format {format!r}")


def parse_report_csv(text: str) -> list[dict]:
    """Parse render_report CSV output back into dicts (AVG row excluded)."""
    reader = csv.DictReader(io.StringIO(text))
    return [row for row in reader if row["dataset"] != AVERAGE_ROW_LABEL]


def ablation_curve(reports_by_fraction: Mapping[float, Report] | Iterable[tuple[float, Report]],
                   ) -> str:
    """CSV of (fraction, accuracy) rows sorted ascending by fraction."""
    items = (reports_by_fraction.items()
             if isinstance(reports_by_fraction, Mapping)
             else list(reports_by_fraction))
    seen: set[float] = set()
    points: list[tuple[float, Report]] = []
    for fraction, report in items:
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"fraction must be in [0, 1], got {fraction}")
        if fraction in seen:
            raise DuplicateFraction(f"fraction {fraction} appears more than once")
        seen.add(fraction)
        points.append((fraction, report))
    points.sort(key=lambda fr: fr[0])

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(("fraction", "accuracy"))
    for fraction, report in points:
        writer.writerow((f"{fraction:g}", format_accuracy(report.accuracy_percent)))
    return buf.getvalue()


def parse_ablation_csv(text: str) -> list[tuple[float, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["fraction", "accuracy"]:
        raise GfpError(f"not an ablation CSV (header {header!r})")
    return [(float(f), float(a)) for f, a in reader if f]
