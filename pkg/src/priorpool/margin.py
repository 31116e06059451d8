"""Non-inferiority margin survey ingestion.

Clinicians answer "how many additional returning patients per 100 would you
accept"; the margin is the median response.  Files arrive either in long form
(one value per row) or tally form (value,count per row); an optional header
row is skipped.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from pathlib import Path

from .errors import SchemaError, ToolkitError

__all__ = ["SurveyResponses", "NegativeValue", "parse_survey", "median_margin"]


class NegativeValue(ToolkitError):
    """Survey responses must be nonnegative."""


@dataclass(frozen=True)
class SurveyResponses:
    """Multiset of nonnegative survey answers (additional patients per 100)."""

    responses: tuple[float, ...]

    def __post_init__(self):
        if len(self.responses) < 1:
            raise SchemaError("survey must contain at least one response")
        for v in self.responses:
            if v < 0:
                raise NegativeValue(f"negative survey response: {v}")

    def __len__(self) -> int:
        return len(self.responses)


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def parse_survey(path) -> SurveyResponses:
    """Parse a survey CSV in long form or tally form.

    Long form: one nonnegative value per row.  Tally form: rows of
    value,count where count is a nonnegative integer; a row "2,20" yields
    twenty responses of 2.  Mixed widths raise SchemaError.
    """
    rows = []
    with open(Path(path), newline="") as fh:
        for raw in csv.reader(fh):
            cells = [c.strip() for c in raw if c.strip() != ""]
            if cells:
                rows.append(cells)
    if not rows:
        raise SchemaError(f"survey file {path} is empty")
    if not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]  # header row
        if not rows:
            raise SchemaError(f"survey file {path} has a header but no data")

    widths = {len(r) for r in rows}
    if widths == {1}:
        values = []
        for r in rows:
            if not _is_number(r[0]):
                raise SchemaError(f"non-numeric survey value: {r[0]!r}")
            values.append(float(r[0]))
    elif widths == {2}:
        values = []
        for r in rows:
            if not (_is_number(r[0]) and _is_number(r[1])):
                raise SchemaError(f"non-numeric tally row: {r!r}")
            value = float(r[0])
            count = float(r[1])
            if count != int(count) or count < 0:
                raise SchemaError(f"tally count must be a nonnegative integer: {r[1]!r}")
            values.extend([value] * int(count))
        if not values:
            raise SchemaError("tally rows sum to zero responses")
    else:
        raise SchemaError(
            f"rows must uniformly have 1 (long form) or 2 (tally form) columns, got widths {sorted(widths)}"
        )
    return SurveyResponses(responses=tuple(values))


def median_margin(r: SurveyResponses) -> float:
    """Sample median; even counts average the two middle order statistics."""
    return float(statistics.median(r.responses))
