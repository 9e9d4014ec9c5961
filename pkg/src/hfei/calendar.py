"""Pseudo-week calendar.

Every month is cut into four buckets (days 1-7, 8-14, 15-21 and 22 to the
end of the month), so a year always has 48 pseudo-weeks and a quarter 12.
"""

from __future__ import annotations

import datetime as dt
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .exceptions import InputError, OrderingError

WEEKS_PER_MONTH = 4
WEEKS_PER_QUARTER = 12
WEEKS_PER_YEAR = 48

_FIRST_DAY = (1, 8, 15, 22)


@dataclass(frozen=True, order=True)
class PseudoWeekStamp:
    """A (year, month, week-of-month) point; compares lexicographically."""

    year: int
    month: int
    week: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise InputError(f"month must be in 1..12, got {self.month}")
        if not 1 <= self.week <= WEEKS_PER_MONTH:
            raise InputError(f"week must be in 1..4, got {self.week}")

    @property
    def ordinal(self) -> int:
        """Absolute position on the calendar; consecutive stamps differ by 1."""
        return WEEKS_PER_YEAR * self.year + WEEKS_PER_MONTH * (self.month - 1) + (self.week - 1)

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "PseudoWeekStamp":
        year, rem = divmod(int(ordinal), WEEKS_PER_YEAR)
        month, week = divmod(rem, WEEKS_PER_MONTH)
        return cls(year, month + 1, week + 1)

    @property
    def quarter(self) -> int:
        return (self.month - 1) // 3 + 1

    @property
    def is_month_end(self) -> bool:
        return self.week == WEEKS_PER_MONTH

    @property
    def is_quarter_end(self) -> bool:
        return self.week == WEEKS_PER_MONTH and self.month % 3 == 0

    def first_day(self) -> dt.date:
        return dt.date(self.year, self.month, _FIRST_DAY[self.week - 1])

    def last_day(self) -> dt.date:
        if self.week < WEEKS_PER_MONTH:
            return dt.date(self.year, self.month, _FIRST_DAY[self.week] - 1)
        nxt = dt.date(self.year + self.month // 12, self.month % 12 + 1, 1)
        return nxt - dt.timedelta(days=1)

    def shift(self, steps: int) -> "PseudoWeekStamp":
        return PseudoWeekStamp.from_ordinal(self.ordinal + steps)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}-W{self.week}"

    @classmethod
    def parse(cls, text: str) -> "PseudoWeekStamp":
        """Inverse of ``str()``: ``"2020-03-W1"``."""
        try:
            ym, w = text.strip().rsplit("-W", 1)
            y, m = ym.split("-")
            return cls(int(y), int(m), int(w))
        except (ValueError, AttributeError) as exc:
            raise InputError(f"cannot parse pseudo-week stamp {text!r}") from exc


class SeriesKind(enum.Enum):
    STOCK = "stock"
    FLOW = "flow"

    @classmethod
    def parse(cls, value) -> "SeriesKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError as exc:
            raise InputError(f"unknown series kind {value!r}; expected stock or flow") from exc


@dataclass(frozen=True)
class DailyRecord:
    date: dt.date
    value: float


def _as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value.strip())
        except ValueError as exc:
            raise InputError(f"invalid calendar date {value!r}") from exc
    raise InputError(f"invalid calendar date {value!r}")


def stamp_of_date(date) -> PseudoWeekStamp:
    """Map a calendar date to its pseudo-week.

    >>> stamp_of_date(dt.date(2020, 2, 29))
    PseudoWeekStamp(year=2020, month=2, week=4)
    """
    d = _as_date(date)
    week = min((d.day - 1) // 7 + 1, WEEKS_PER_MONTH)
    return PseudoWeekStamp(d.year, d.month, week)


def stamp_index(stamp: PseudoWeekStamp, origin: PseudoWeekStamp) -> int:
    """Number of pseudo-weeks from ``origin`` to ``stamp``."""
    if stamp < origin:
        raise OrderingError(f"stamp {stamp} precedes origin {origin}")
    return (
        WEEKS_PER_YEAR * (stamp.year - origin.year)
        + WEEKS_PER_MONTH * (stamp.month - origin.month)
        + (stamp.week - origin.week)
    )


def stamp_range(start: PseudoWeekStamp, stop: PseudoWeekStamp) -> list[PseudoWeekStamp]:
    """Inclusive run of consecutive stamps."""
    if stop < start:
        raise OrderingError(f"stamp {stop} precedes {start}")
    return [PseudoWeekStamp.from_ordinal(k) for k in range(start.ordinal, stop.ordinal + 1)]


def iter_year(year: int) -> Iterator[PseudoWeekStamp]:
    for month in range(1, 13):
        for week in range(1, WEEKS_PER_MONTH + 1):
            yield PseudoWeekStamp(year, month, week)


def aggregate_daily(
    records: Iterable[DailyRecord],
    kind: SeriesKind,
    zero_fill: bool = False,
) -> dict[PseudoWeekStamp, float]:
    """Collapse irregular daily records into pseudo-weekly values.

    Stocks are averaged within a bucket and flows summed. Buckets between
    the first and last record that received no data are NaN, except for
    flows with ``zero_fill`` where an empty bucket is a genuine zero.
    """
    kind = SeriesKind.parse(kind)
    buckets: dict[PseudoWeekStamp, list[float]] = {}
    for rec in sorted(records, key=lambda r: _as_date(r.date)):
        buckets.setdefault(stamp_of_date(rec.date), []).append(float(rec.value))
    if not buckets:
        return {}

    out: dict[PseudoWeekStamp, float] = {}
    for stamp in stamp_range(min(buckets), max(buckets)):
        vals = [v for v in buckets.get(stamp, ()) if not math.isnan(v)]
        if vals:
            out[stamp] = math.fsum(vals) / len(vals) if kind is SeriesKind.STOCK else math.fsum(vals)
        elif kind is SeriesKind.FLOW and zero_fill:
            out[stamp] = 0.0
        else:
            out[stamp] = math.nan
    return out


def spine_dates(stamps: Sequence[PseudoWeekStamp]) -> list[dt.date]:
    return [s.first_day() for s in stamps]
