"""Markdown tables laid out like the published regression and directional result tables."""

from __future__ import annotations

from typing import Iterable, List, Optional, Tuple

from trendlab.evaluation.protocol import EvaluationReport

REGRESSION_COLUMNS = ("Dataset", "Model", "MAE", "RMSE", "RMSSE", "MASE")
DIRECTIONAL_COLUMNS = ("Dataset", "Model", "Train Accuracy", "Val Accuracy", "Test Accuracy",
                       "Recall", "Precision (Rise)", "Precision (Fall)", "F1 Score")
ABSENT = "n/a"

ReportRow = Tuple[str, str, EvaluationReport]


def _number(value: Optional[float]) -> str:
    return ABSENT if value is None else f"{value:.2f}"


def _percent(value: Optional[float]) -> str:
    return ABSENT if value is None else f"{100 * value:.2f}%"


def _table(columns: Iterable[str], rows: List[List[str]]) -> str:
    columns = list(columns)
    lines = ["| " + " | ".join(columns) + " |", "|" + "|".join("---" for _ in columns) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines)


def regression_table(rows: Iterable[ReportRow]) -> str:
    """Test-partition error metrics on price scale."""
    body = []
    for dataset, model, report in rows:
        scores = report.test.regression
        body.append([dataset, model, _number(scores.mae), _number(scores.rmse),
                     _number(scores.rmsse), _number(scores.mase)])
    return _table(REGRESSION_COLUMNS, body)


def directional_table(rows: Iterable[ReportRow]) -> str:
    """Accuracy per partition; recall, precisions and F1 on the test partition."""
    body = []
    for dataset, model, report in rows:
        parts = report.partitions
        test = parts["test"].directional
        body.append([dataset, model, _percent(parts["train"].directional.accuracy),
                     _percent(parts["validation"].directional.accuracy), _percent(test.accuracy),
                     _percent(test.recall), _percent(test.precision_rise), _percent(test.precision_fall),
                     _percent(test.f1)])
    return _table(DIRECTIONAL_COLUMNS, body)


def render_markdown(rows: Iterable[ReportRow], title: str = "Forecast evaluation",
                    notes: Optional[List[str]] = None) -> str:
    rows = list(rows)
    sections = [f"# {title}", "", "## Regression metrics (test, price scale)", "", regression_table(rows), "",
                "## Directional movement metrics", "", directional_table(rows), ""]
    if notes:
        sections += ["## Notes", ""] + [f"- {note}" for note in notes] + [""]
    return "\n".join(sections)
