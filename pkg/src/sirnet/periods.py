"""ISO year-month period labels."""
from __future__ import annotations

import re

from .errors import InputError

_MONTH = re.compile(r"^(\d{4})-(\d{2})$")


def parse_month(label: str) -> int:
    """Months since year 0 for a ``YYYY-MM`` label."""
    m = _MONTH.match(label.strip())
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise InputError(f"unparseable period {label!r}; expected YYYY-MM")
    return int(m.group(1)) * 12 + int(m.group(2)) - 1


def format_month(k: int) -> str:
    return f"{k // 12:04d}-{k % 12 + 1:02d}"


def month_range(start: str, end: str) -> list:
    a, b = parse_month(start), parse_month(end)
    if b < a:
        raise InputError(f"period range {start}..{end} is empty")
    return [format_month(k) for k in range(a, b + 1)]


def month_labels(start: str, count: int) -> list:
    a = parse_month(start)
    return [format_month(k) for k in range(a, a + count)]
