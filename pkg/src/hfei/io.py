"""Plain-text and flat-binary file formats used by the command line."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .calendar import DailyRecord, PseudoWeekStamp, SeriesKind, aggregate_daily, stamp_of_date
from .exceptions import InputError
from .panel import Frequency, GrowthPanel, MixedPanel, SeriesMeta, build_panel
from .samplers import Priors
from .statespace import ChainConfig, ModelSpec

STORE_FORMAT = "hfei-draws-1"
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def fmt(x) -> str:
    """17 significant digits: re-parsing gives back the same double."""
    x = float(x)
    return "nan" if math.isnan(x) else format(x, ".17g")


def parse_bool(text, what="flag") -> bool:
    t = str(text).strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise InputError(f"{what}: expected a boolean, got {text!r}")


def stamp_cells(stamp: PseudoWeekStamp) -> list[str]:
    """ISO date of the pseudo-week's first day and its week of month."""
    return [stamp.first_day().isoformat(), str(stamp.week)]


def stamp_from_cells(date: str, week: str) -> PseudoWeekStamp:
    s = stamp_of_date(date)
    if str(s.week) != week.strip():
        raise InputError(f"date {date} lies in week {s.week}, not week {week}")
    return s


# ---------------------------------------------------------------- config


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{no}: expected key = value")
            key, value = (p.strip() for p in line.split("=", 1))
            if not key:
                raise InputError(f"{path}:{no}: empty key")
            out[key] = value
    return out


_SPEC_KEYS = {"p_f": int, "p_q": int, "s": int, "sv_factor": parse_bool, "sv_idio": parse_bool,
              "n_q": int, "n_m": int, "n_w": int}
_CHAIN_KEYS = {"iterations": int, "burn_in": int}


def spec_to_flat(spec: ModelSpec) -> dict[str, str]:
    out = {k: str(int(getattr(spec, k))) for k in _SPEC_KEYS}
    out.update({k: str(getattr(spec.chain, k)) for k in _CHAIN_KEYS})
    out.update({f"prior.{f.name}": fmt(getattr(spec.priors, f.name)) for f in fields(Priors)})
    return out


def spec_from_flat(values: dict[str, str], base: ModelSpec | None = None) -> ModelSpec:
    """Apply recognised keys of a flat mapping to ``base``; unknown keys are ignored."""
    base = base or ModelSpec()

    def conv(fn, key):
        try:
            return fn(values[key])
        except (ValueError, TypeError) as exc:
            raise InputError(f"config key {key}: cannot parse {values[key]!r}") from exc

    top = {k: conv(fn, k) for k, fn in _SPEC_KEYS.items() if k in values}
    chain = {k: conv(fn, k) for k, fn in _CHAIN_KEYS.items() if k in values}
    pri = {f.name: conv(float, f"prior.{f.name}") for f in fields(Priors) if f"prior.{f.name}" in values}
    return replace(base, **top, chain=replace(base.chain, **chain) if chain else base.chain,
                   priors=replace(base.priors, **pri) if pri else base.priors)


def dataclass_from_flat(cls, values: dict[str, str], prefix: str, base=None):
    """Fill a flat dataclass from ``prefix.field`` keys, converting by the default's type."""
    base = base or cls()
    upd = {}
    for f in fields(cls):
        key = f"{prefix}{f.name}"
        if key not in values:
            continue
        default = getattr(base, f.name)
        try:
            if isinstance(default, bool):
                upd[f.name] = parse_bool(values[key], key)
            elif isinstance(default, int):
                upd[f.name] = int(values[key])
            else:
                upd[f.name] = float(values[key])
        except ValueError as exc:
            raise InputError(f"config key {key}: cannot parse {values[key]!r}") from exc
    return replace(base, **upd)


# ---------------------------------------------------------------- raw inputs


@dataclass(frozen=True)
class SeriesSetup:
    meta: SeriesMeta
    anchor: str | None = None
    proxy: str | None = None
    proxy_break: PseudoWeekStamp | None = None
    proxy_start: PseudoWeekStamp | None = None


def _rows(path, required):
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
        reader.fieldnames = header
        for row in reader:
            yield reader.line_num, {k: (v or "").strip() for k, v in row.items() if k is not None}


def read_series_table(path) -> dict[str, SeriesSetup]:
    """``series_id, frequency, kind, zero_fill`` plus optional ``anchor, proxy, proxy_break, proxy_start``."""
    out: dict[str, SeriesSetup] = {}
    errors = []

    def stamp(text):
        return stamp_of_date(text) if text else None

    for line, row in _rows(path, ("series_id", "frequency", "kind")):
        try:
            sid = row["series_id"]
            if not sid:
                raise InputError("empty series_id")
            if sid in out:
                raise InputError(f"series {sid!r} listed twice")
            meta = SeriesMeta(sid, Frequency.parse(row["frequency"]), SeriesKind.parse(row["kind"]),
                              zero_fill=parse_bool(row.get("zero_fill", ""), "zero_fill"))
            out[sid] = SeriesSetup(meta, row.get("anchor") or None, row.get("proxy") or None,
                                   stamp(row.get("proxy_break")), stamp(row.get("proxy_start")))
        except InputError as exc:
            errors.append(f"line {line}: {exc}")
    if errors:
        raise InputError(f"{path}: " + "; ".join(errors))
    return out


def read_observations(path) -> dict[str, list[DailyRecord]]:
    """``series_id, date, value`` rows; every bad row is reported before failing."""
    out: dict[str, list[DailyRecord]] = {}
    seen: dict[tuple, int] = {}
    errors, dups = [], []
    for line, row in _rows(path, ("series_id", "date", "value")):
        try:
            sid = row["series_id"]
            if not sid:
                raise InputError("empty series_id")
            stamp_of_date(row["date"])
            date = row["date"]
            value = float(row["value"]) if row["value"] else math.nan
        except (InputError, ValueError) as exc:
            errors.append(f"line {line}: {exc}")
            continue
        key = (sid, row["date"])
        if key in seen:
            dups.append(f"{sid} {row['date']} (lines {seen[key]} and {line})")
            continue
        seen[key] = line
        out.setdefault(sid, []).append(DailyRecord(date, value))
    if errors:
        raise InputError(f"{path}: unparseable rows: " + "; ".join(errors))
    if dups:
        raise InputError(f"{path}: duplicate (series, date) rows: " + "; ".join(dups))
    if not out:
        raise InputError(f"{path}: empty panel: no observations")
    return out


def level_panel(records: dict[str, list[DailyRecord]], setup: dict[str, SeriesSetup]) -> MixedPanel:
    """Levels on the pseudo-weekly spine: weekly series aggregated from daily records."""
    unknown = sorted(set(records) - set(setup))
    if unknown:
        raise InputError(f"observations for series without metadata: {', '.join(unknown)}")
    series = {}
    for sid, recs in records.items():
        meta = setup[sid].meta
        if meta.frequency is Frequency.WEEKLY:
            series[sid] = aggregate_daily(recs, meta.kind, meta.zero_fill)
        else:
            by_period: dict[PseudoWeekStamp, float] = {}
            for r in recs:
                key = stamp_of_date(r.date)
                if key in by_period:
                    raise InputError(f"series {sid!r} has two values in the period of {r.date}")
                by_period[key] = r.value
            series[sid] = by_period
    return build_panel(series, {sid: setup[sid].meta for sid in records})


# ---------------------------------------------------------------- panel file


def write_panel(path, panel: MixedPanel) -> None:
    """Header rows ``stamp/frequency/kind/zero_fill`` then one row per spine stamp."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stamp", *panel.ids])
        w.writerow(["frequency", *(m.frequency.value for m in panel.meta)])
        w.writerow(["kind", *(m.kind.value for m in panel.meta)])
        w.writerow(["zero_fill", *(str(int(m.zero_fill)) for m in panel.meta)])
        for stamp, row in zip(panel.index, panel.values):
            w.writerow([str(stamp), *("" if math.isnan(v) else fmt(v) for v in row)])


def read_panel(path) -> GrowthPanel:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 5 or rows[0][:1] != ["stamp"] or [r[0] for r in rows[1:4]] != ["frequency", "kind", "zero_fill"]:
        raise InputError(f"{path}: not a panel file")
    ids = rows[0][1:]
    meta = [SeriesMeta(i, Frequency.parse(f), SeriesKind.parse(k), zero_fill=parse_bool(z))
            for i, f, k, z in zip(ids, rows[1][1:], rows[2][1:], rows[3][1:])]
    index, vals = [], []
    for no, r in enumerate(rows[4:], start=5):
        if len(r) != len(ids) + 1:
            raise InputError(f"{path}:{no}: expected {len(ids) + 1} cells, got {len(r)}")
        index.append(PseudoWeekStamp.parse(r[0]))
        try:
            vals.append([float(c) if c else math.nan for c in r[1:]])
        except ValueError as exc:
            raise InputError(f"{path}:{no}: {exc}") from exc
    return GrowthPanel.from_columns(index, dict(zip(ids, np.array(vals, dtype=float).reshape(len(index), -1).T)), meta)


def write_observations(path, panel: MixedPanel) -> None:
    """Inverse of :func:`level_panel` for panels with one value per bucket."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "date", "value"])
        for i, sid in enumerate(panel.ids):
            for stamp, v in zip(panel.index, panel.values[:, i]):
                if not math.isnan(v):
                    w.writerow([sid, stamp.first_day().isoformat(), fmt(v)])


def write_series_table(path, meta) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "frequency", "kind", "zero_fill"])
        for m in meta:
            w.writerow([m.id, m.frequency.value, m.kind.value, str(int(m.zero_fill))])


# ---------------------------------------------------------------- draw store


def write_draws(directory, draws) -> None:
    """One little-endian float64 file per block plus ``manifest.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"format={STORE_FORMAT}", f"seed={'' if draws.seed is None else draws.seed}",
             f"spec_hash={_spec_hash(draws.spec)}", f"ids={','.join(draws.ids)}",
             f"gdp_index={draws.gdp_index}", f"init_scale={fmt(draws.init_scale)}"]
    lines += [f"spec.{k}={v}" for k, v in spec_to_flat(draws.spec).items()]
    for name in draws.BLOCKS:
        arr = np.ascontiguousarray(getattr(draws, name), dtype="<f8")
        arr.tofile(d / f"{name}.f64")
        lines.append(f"block.{name}={','.join(str(x) for x in arr.shape)}")
    (d / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_draws(directory):
    from .estimator import PosteriorDraws

    d = Path(directory)
    man = d / "manifest.txt"
    if not man.exists():
        raise InputError(f"{d}: no manifest.txt, not a draw store")
    kv = dict(line.split("=", 1) for line in man.read_text(encoding="utf-8").splitlines() if "=" in line)
    if kv.get("format") != STORE_FORMAT:
        raise InputError(f"{d}: unsupported store format {kv.get('format')!r}")
    spec = spec_from_flat({k[5:]: v for k, v in kv.items() if k.startswith("spec.")})
    if _spec_hash(spec) != kv["spec_hash"]:
        raise InputError(f"{d}: spec hash mismatch, manifest edited or corrupt")
    blocks = {}
    for name in PosteriorDraws.BLOCKS:
        shape = tuple(int(x) for x in kv[f"block.{name}"].split(",") if x)
        arr = np.fromfile(d / f"{name}.f64", dtype="<f8")
        if arr.size != int(np.prod(shape)):
            raise InputError(f"{d}: block {name} has {arr.size} values, manifest says {shape}")
        blocks[name] = arr.reshape(shape).astype(float)
    return PosteriorDraws(**blocks, spec=spec, seed=int(kv["seed"]) if kv["seed"] else None,
                          ids=kv["ids"].split(",") if kv["ids"] else [], gdp_index=int(kv["gdp_index"]),
                          init_scale=float(kv["init_scale"]))


def _spec_hash(spec):
    from .estimator import spec_hash

    return spec_hash(spec)


# ---------------------------------------------------------------- tables


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_table(path) -> tuple[list[str], list[list[str]]]:
    if not os.path.exists(path):
        raise InputError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    return rows[0], rows[1:]


def write_index(path, series) -> None:
    write_table(path, ["date", "week", "mean", "median", "p16", "p84"],
                ([*stamp_cells(s), fmt(a), fmt(b), fmt(c), fmt(e)]
                 for s, a, b, c, e in zip(series.stamps, series.mean, series.median, series.p16, series.p84)))


def read_index(path):
    """Stamps and a ``(T, 4)`` array of mean, median, p16, p84."""
    header, rows = read_table(path)
    if header != ["date", "week", "mean", "median", "p16", "p84"]:
        raise InputError(f"{path}: not an index file")
    stamps = [stamp_from_cells(r[0], r[1]) for r in rows]
    return stamps, np.array([[float(x) for x in r[2:]] for r in rows]).reshape(len(rows), 4)


def write_factor(path, stamps, factor) -> None:
    write_table(path, ["date", "week", "factor"], ([*stamp_cells(s), fmt(v)] for s, v in zip(stamps, factor)))


def read_factor(path):
    header, rows = read_table(path)
    if header[:3] != ["date", "week", "factor"]:
        raise InputError(f"{path}: not a factor file")
    return [stamp_from_cells(r[0], r[1]) for r in rows], np.array([float(r[2]) for r in rows])
