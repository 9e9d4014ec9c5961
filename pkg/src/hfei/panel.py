"""Mixed-frequency panel on the pseudo-weekly spine.

Monthly values sit on the fourth pseudo-week of their month and quarterly
values on the fourth pseudo-week of the quarter's last month; every other
spine position of a low-frequency column is NaN.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .calendar import (
    WEEKS_PER_YEAR,
    PseudoWeekStamp,
    SeriesKind,
    stamp_range,
)
from .exceptions import InputError, InsufficientDataError, TransformError

logger = logging.getLogger(__name__)


class Frequency(enum.Enum):
    QUARTERLY = "quarterly"
    MONTHLY = "monthly"
    WEEKLY = "weekly"

    @classmethod
    def parse(cls, value) -> "Frequency":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        aliases = {"q": "quarterly", "m": "monthly", "w": "weekly"}
        try:
            return cls(aliases.get(text, text))
        except ValueError as exc:
            raise InputError(f"unknown frequency {value!r}") from exc

    @property
    def rank(self) -> int:
        return _FREQ_RANK[self]

    @property
    def window(self) -> int:
        """Number of pseudo-weeks averaged into one observation."""
        return _FREQ_WINDOW[self]


_FREQ_RANK = {Frequency.QUARTERLY: 0, Frequency.MONTHLY: 1, Frequency.WEEKLY: 2}
_FREQ_WINDOW = {Frequency.QUARTERLY: 12, Frequency.MONTHLY: 4, Frequency.WEEKLY: 1}


@dataclass(frozen=True)
class SeriesMeta:
    id: str
    frequency: Frequency
    kind: SeriesKind = SeriesKind.STOCK
    first_obs: PseudoWeekStamp | None = None
    zero_fill: bool = False

    def __post_init__(self):
        object.__setattr__(self, "frequency", Frequency.parse(self.frequency))
        object.__setattr__(self, "kind", SeriesKind.parse(self.kind))


def _observable(stamp: PseudoWeekStamp, freq: Frequency) -> bool:
    if freq is Frequency.WEEKLY:
        return True
    if freq is Frequency.MONTHLY:
        return stamp.is_month_end
    return stamp.is_quarter_end


@dataclass
class MixedPanel:
    """Columns aligned to a consecutive pseudo-week spine, NaN = missing.

    Columns are kept quarterly first, then monthly, then weekly.
    """

    index: list[PseudoWeekStamp]
    values: np.ndarray
    meta: list[SeriesMeta]
    means: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.index = list(self.index)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        T, n = self.values.shape
        if T != len(self.index):
            raise InputError(f"{T} rows but spine has {len(self.index)} stamps")
        if n != len(self.meta):
            raise InputError(f"{n} columns but {len(self.meta)} series descriptions")
        ids = [m.id for m in self.meta]
        if len(set(ids)) != len(ids):
            raise InputError(f"duplicate series ids in panel: {ids}")
        for a, b in zip(self.index, self.index[1:]):
            if b.ordinal != a.ordinal + 1:
                raise InputError(f"spine is not consecutive between {a} and {b}")
        ranks = [m.frequency.rank for m in self.meta]
        if ranks != sorted(ranks):
            raise InputError("series must be ordered quarterly, monthly, weekly")
        mask = np.array([[_observable(s, m.frequency) for m in self.meta] for s in self.index], dtype=bool)
        bad = ~np.isnan(self.values) & ~mask.reshape(T, n) if T else np.zeros((0, n), bool)
        if bad.any():
            t, i = np.argwhere(bad)[0]
            raise InputError(
                f"series {ids[i]} ({self.meta[i].frequency.value}) has a value at "
                f"{self.index[t]}, which is not one of its observation stamps"
            )

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.meta]

    @property
    def frequencies(self) -> list[Frequency]:
        return [m.frequency for m in self.meta]

    def count(self, freq) -> int:
        freq = Frequency.parse(freq)
        return sum(m.frequency is freq for m in self.meta)

    @property
    def n_q(self) -> int:
        return self.count(Frequency.QUARTERLY)

    @property
    def n_m(self) -> int:
        return self.count(Frequency.MONTHLY)

    @property
    def n_w(self) -> int:
        return self.count(Frequency.WEEKLY)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def column(self, series_id: str) -> np.ndarray:
        try:
            return self.values[:, self.ids.index(series_id)]
        except ValueError:
            raise InputError(f"no series {series_id!r} in panel") from None

    def position(self, series_id: str) -> int:
        try:
            return self.ids.index(series_id)
        except ValueError:
            raise InputError(f"no series {series_id!r} in panel") from None

    @classmethod
    def from_columns(
        cls,
        index: Sequence[PseudoWeekStamp],
        columns: Mapping[str, np.ndarray],
        meta: Mapping[str, SeriesMeta] | Sequence[SeriesMeta],
    ) -> "MixedPanel":
        """Assemble a panel, reordering columns into quarterly/monthly/weekly order."""
        if not isinstance(meta, Mapping):
            meta = {m.id: m for m in meta}
        missing = set(columns) - set(meta)
        if missing:
            raise InputError(f"no metadata for series {sorted(missing)}")
        order = sorted(columns, key=lambda k: meta[k].frequency.rank)  # stable
        values = np.column_stack([np.asarray(columns[k], float) for k in order]) if order else np.empty((len(index), 0))
        metas = []
        for k, col in zip(order, values.T):
            obs = np.flatnonzero(~np.isnan(col))
            first = index[obs[0]] if obs.size else None
            metas.append(replace(meta[k], first_obs=first))
        return cls(list(index), values, metas)

    def subset(self, ids: Sequence[str]) -> "MixedPanel":
        pos = [self.position(i) for i in ids]
        return type(self).from_columns(self.index, {self.ids[p]: self.values[:, p] for p in pos},
                                       [self.meta[p] for p in pos])


class GrowthPanel(MixedPanel):
    """A :class:`MixedPanel` holding year-over-year log growth rates."""


def trim_leading_unobserved(panel: MixedPanel) -> MixedPanel:
    """Drop spine stamps before the first observation of any series.

    A diffuse initial state backcasts the factor through an empty stretch by
    inverting its dynamics, so those periods are cut before estimation.
    """
    rows = np.flatnonzero(panel.observed.any(axis=1))
    if rows.size == 0:
        raise InputError("panel has no observations")
    first = int(rows[0])
    if first == 0:
        return panel
    out = type(panel).from_columns(panel.index[first:], {sid: panel.values[first:, i] for i, sid in enumerate(panel.ids)},
                                   panel.meta)
    if panel.means is not None:
        out.means = panel.means
    return out


def build_panel(
    series: Mapping[str, Mapping[PseudoWeekStamp, float]],
    meta: Mapping[str, SeriesMeta],
) -> MixedPanel:
    """Place per-series ``stamp -> value`` maps on a common spine.

    Monthly and quarterly maps may be keyed by any stamp inside the period;
    the value is moved to the period's observation stamp.
    """
    placed: dict[str, dict[PseudoWeekStamp, float]] = {}
    for sid, values in series.items():
        if sid not in meta:
            raise InputError(f"no metadata for series {sid!r}")
        freq = meta[sid].frequency
        out: dict[PseudoWeekStamp, float] = {}
        for stamp, v in values.items():
            target = period_end(stamp, freq)
            if target in out and not np.isnan(out[target]):
                raise InputError(f"series {sid!r} has two values for the period ending {target}")
            out[target] = float(v)
        placed[sid] = out
    stamps = [s for vals in placed.values() for s in vals]
    if not stamps:
        raise InputError("empty panel: no observations")
    index = stamp_range(min(stamps), max(stamps))
    pos = {s: k for k, s in enumerate(index)}
    columns = {}
    for sid, vals in placed.items():
        col = np.full(len(index), np.nan)
        for s, v in vals.items():
            col[pos[s]] = v
        columns[sid] = col
    return MixedPanel.from_columns(index, columns, meta)


def period_end(stamp: PseudoWeekStamp, freq) -> PseudoWeekStamp:
    freq = Frequency.parse(freq)
    if freq is Frequency.WEEKLY:
        return stamp
    if freq is Frequency.MONTHLY:
        return PseudoWeekStamp(stamp.year, stamp.month, 4)
    return PseudoWeekStamp(stamp.year, 3 * stamp.quarter, 4)


def yoy_transform(panel: MixedPanel) -> GrowthPanel:
    """Year-over-year log growth; the lag is 48 spine steps for every frequency."""
    vals = panel.values
    bad = ~np.isnan(vals) & (vals <= 0)
    if bad.any():
        t, i = np.argwhere(bad)[0]
        raise TransformError(
            f"series {panel.ids[i]!r} has non-positive level {vals[t, i]!r} at {panel.index[t]}"
        )
    logs = np.log(vals)
    growth = np.full_like(logs, np.nan)
    growth[WEEKS_PER_YEAR:] = logs[WEEKS_PER_YEAR:] - logs[:-WEEKS_PER_YEAR]
    return GrowthPanel.from_columns(
        panel.index, dict(zip(panel.ids, growth.T)), [replace(m, first_obs=None) for m in panel.meta]
    )


def demean(panel: MixedPanel) -> GrowthPanel:
    """Subtract each column's mean over its observed entries; means kept on ``.means``."""
    means = np.array([np.nanmean(c) if np.isfinite(c).any() else 0.0 for c in panel.values.T])
    out = GrowthPanel(panel.index, panel.values - means, panel.meta)
    out.means = means
    return out


def impute_weekly_gaps(
    series: np.ndarray,
    monthly_anchor: np.ndarray | None = None,
    index: Sequence[PseudoWeekStamp] | None = None,
    report: dict | None = None,
) -> np.ndarray:
    """Fill gaps in a weekly column.

    A missing fourth pseudo-week takes the month's anchor value when one is
    available (``index`` locates the fourth weeks; without it every
    non-missing anchor entry is used in place). Remaining gaps take the mean
    of the nearest observed values on either side. Gaps touching either end
    of the column stay missing.
    """
    out = np.array(series, dtype=float)
    n_anchor = 0
    if monthly_anchor is not None:
        anchor = np.asarray(monthly_anchor, dtype=float)
        if anchor.shape != out.shape:
            raise InputError("weekly column and monthly anchor must be aligned to the same spine")
        slots = ~np.isnan(anchor) & np.isnan(out)
        if index is not None:
            slots &= np.array([s.is_month_end for s in index], dtype=bool)
        out[slots] = anchor[slots]
        n_anchor = int(slots.sum())

    obs = np.flatnonzero(~np.isnan(out))
    n_neighbour = 0
    n_boundary = int(np.isnan(out).sum())
    if obs.size:
        gaps = np.flatnonzero(np.isnan(out))
        interior = gaps[(gaps > obs[0]) & (gaps < obs[-1])]
        if interior.size:
            nxt = np.searchsorted(obs, interior)
            out[interior] = 0.5 * (out[obs[nxt - 1]] + out[obs[nxt]])
        n_neighbour = int(interior.size)
        n_boundary = int(gaps.size - interior.size)
    if n_boundary and obs.size:
        logger.info("%d boundary gap(s) left missing", n_boundary)
    if report is not None:
        report.update(anchor=n_anchor, neighbour=n_neighbour, boundary=n_boundary)
    return out


def proxy_interpolate(
    target: np.ndarray,
    proxy: np.ndarray,
    stamps: Sequence[PseudoWeekStamp],
    break_stamp: PseudoWeekStamp | None = None,
    start: PseudoWeekStamp | None = None,
) -> np.ndarray:
    """Fill a sparse monthly column from a dense proxy.

    Fits ``target = a + b*proxy + c*1{stamp >= break_stamp}`` by least
    squares on the months where both are observed (from ``start`` on) and
    replaces only the missing target months with fitted values.
    """
    target = np.asarray(target, dtype=float)
    proxy = np.asarray(proxy, dtype=float)
    if target.shape != proxy.shape or len(stamps) != target.size:
        raise InputError("target, proxy and stamps must have equal length")
    in_range = np.ones(target.size, bool) if start is None else np.array([s >= start for s in stamps])
    X = [np.ones(target.size), proxy]
    if break_stamp is not None:
        dummy = np.array([s >= break_stamp for s in stamps], dtype=float)
        if dummy[in_range].min(initial=1.0) < dummy[in_range].max(initial=0.0):
            X.append(dummy)
    X = np.column_stack(X)
    fit_rows = in_range & ~np.isnan(target) & ~np.isnan(proxy)
    if fit_rows.sum() < 4:
        raise InsufficientDataError(f"proxy regression needs at least 4 observed pairs, got {int(fit_rows.sum())}")
    coef, *_ = np.linalg.lstsq(X[fit_rows], target[fit_rows], rcond=None)
    out = target.copy()
    fill = in_range & np.isnan(target) & ~np.isnan(proxy)
    out[fill] = X[fill] @ coef
    return out
