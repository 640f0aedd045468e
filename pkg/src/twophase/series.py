"""Minute-resolution index series: ingestion, trading calendar, segmentation,
and one-step increments.

A series is a sequence of (timestamp, value) records confined to declared
trading sessions.  Increments are taken between consecutive records; entries
that jump a session boundary (or skip more than one minute inside a session)
are flagged so that downstream statistics can exclude them.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

MINUTE = np.timedelta64(1, "m")

_TS_FORMATS = ("%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M")


@dataclass(frozen=True)
class Session:
    """One trading session on one date; minutes in [open, close) are valid."""

    date: dt.date
    open: dt.time
    close: dt.time

    def __post_init__(self) -> None:
        if self.close <= self.open:
            raise InputError(f"session on {self.date}: close {self.close} not after open {self.open}")

    @property
    def n_minutes(self) -> int:
        o = self.open.hour * 60 + self.open.minute
        c = self.close.hour * 60 + self.close.minute
        return c - o


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered list of trading sessions, possibly several per date."""

    sessions: tuple[Session, ...]
    name: str = ""

    def __post_init__(self) -> None:
        keys = [(s.date, s.open) for s in self.sessions]
        if keys != sorted(keys):
            raise InputError("calendar sessions must be sorted by (date, open)")
        if len(set(keys)) != len(keys):
            raise InputError("calendar contains duplicate sessions")

    def session_index(self, ts: dt.datetime) -> int | None:
        """Global ordinal of the session containing `ts`, or None."""
        lookup = self._by_date()
        for ordinal, sess in lookup.get(ts.date(), ()):
            if sess.open <= ts.time() < sess.close:
                return ordinal
        return None

    def _by_date(self) -> dict[dt.date, list[tuple[int, Session]]]:
        cached = getattr(self, "_date_cache", None)
        if cached is None:
            cached = {}
            for ordinal, sess in enumerate(self.sessions):
                cached.setdefault(sess.date, []).append((ordinal, sess))
            object.__setattr__(self, "_date_cache", cached)
        return cached

    @property
    def first_date(self) -> dt.date:
        return self.sessions[0].date

    @property
    def last_date(self) -> dt.date:
        return self.sessions[-1].date


def hk_calendar() -> TradingCalendar:
    """Built-in 'hk-1994-1997' preset.

    Weekday sessions from 1994-07-01 through 1997-05-28, morning 10:00-12:30,
    afternoon from 14:30 with three closing-time regimes: 15:45 until
    1995-08-31, 15:55 until 1996-12-31, and 16:00 afterwards.
    """
    sessions = []
    day = dt.date(1994, 7, 1)
    last = dt.date(1997, 5, 28)
    while day <= last:
        if day.weekday() < 5:
            if day <= dt.date(1995, 8, 31):
                close = dt.time(15, 45)
            elif day <= dt.date(1996, 12, 31):
                close = dt.time(15, 55)
            else:
                close = dt.time(16, 0)
            sessions.append(Session(day, dt.time(10, 0), dt.time(12, 30)))
            sessions.append(Session(day, dt.time(14, 30), close))
        day += dt.timedelta(days=1)
    return TradingCalendar(tuple(sessions), name="hk-1994-1997")


def _parse_time(text: str, where: str) -> dt.time:
    try:
        h, m = text.strip().split(":")
        return dt.time(int(h), int(m))
    except (ValueError, TypeError) as exc:
        raise InputError(f"{where}: bad time {text!r}") from exc


def load_calendar(spec: str | Path) -> TradingCalendar:
    """Load a calendar from a preset name or a JSON/CSV session table.

    JSON: a list of {"date", "open", "close"} objects.  CSV: header
    `date,open,close`.  Multiple rows per date declare multiple sessions.
    """
    if isinstance(spec, str) and spec == "hk-1994-1997":
        return hk_calendar()
    path = Path(spec)
    if not path.exists():
        raise InputError(f"calendar not found: {path}")
    rows: list[tuple[str, str, str]] = []
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON calendar: {exc}") from exc
        if not isinstance(data, list):
            raise InputError(f"{path}: calendar JSON must be a list of sessions")
        for i, item in enumerate(data):
            try:
                rows.append((item["date"], item["open"], item["close"]))
            except (KeyError, TypeError) as exc:
                raise InputError(f"{path}: session #{i} missing date/open/close") from exc
    else:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["date", "open", "close"]:
                raise InputError(f"{path}: calendar CSV must have header date,open,close")
            for item in reader:
                rows.append((item["date"], item["open"], item["close"]))
    sessions = []
    for i, (d, o, c) in enumerate(rows):
        try:
            date = dt.date.fromisoformat(d.strip())
        except ValueError as exc:
            raise InputError(f"{path}: session #{i}: bad date {d!r}") from exc
        sessions.append(Session(date, _parse_time(o, f"{path} session #{i}"),
                                _parse_time(c, f"{path} session #{i}")))
    sessions.sort(key=lambda s: (s.date, s.open))
    if not sessions:
        raise InputError(f"{path}: calendar declares no sessions")
    return TradingCalendar(tuple(sessions), name=str(path))


@dataclass(frozen=True)
class TickSeries:
    """Timestamped index values confined to a trading calendar.

    Attributes:
        timestamps: datetime64[m], strictly increasing
        values: float64, finite and positive
        calendar: declared trading sessions covering every timestamp
        session_ids: per-record global session ordinal
        source: free-form origin label
    """

    timestamps: np.ndarray
    values: np.ndarray
    calendar: TradingCalendar
    session_ids: np.ndarray
    source: str = ""

    def __post_init__(self) -> None:
        ts, vals, sids = self.timestamps, self.values, self.session_ids
        if len(ts) != len(vals) or len(ts) != len(sids):
            raise InputError("timestamps, values and session_ids must have equal length")
        if len(ts) == 0:
            raise InputError("series is empty")
        if not np.all(ts[1:] > ts[:-1]):
            raise InputError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)) or not np.all(vals > 0):
            raise InputError("values must be finite and positive")

    def __len__(self) -> int:
        return len(self.timestamps)


def make_series(timestamps: np.ndarray, values: np.ndarray,
                calendar: TradingCalendar, source: str = "") -> TickSeries:
    """Build a TickSeries, resolving each timestamp to its calendar session."""
    ts = np.asarray(timestamps, dtype="datetime64[m]")
    vals = np.asarray(values, dtype=float)
    sids = np.empty(len(ts), dtype=np.int64)
    for k, t in enumerate(ts):
        pyt = t.astype("datetime64[m]").item()
        sid = calendar.session_index(pyt)
        if sid is None:
            raise InputError(f"timestamp {t} falls outside every declared session")
        sids[k] = sid
    return TickSeries(ts, vals, calendar, sids, source)


def load_csv(path: str | Path, calendar: TradingCalendar, source: str | None = None) -> TickSeries:
    """Read a `timestamp,value` CSV into a validated TickSeries.

    Timestamps must be ISO-8601 to the minute.  Rows may arrive in any order
    and are normalized to ascending time.  Errors carry the 1-based line
    number of the offending row.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    stamps: list[dt.datetime] = []
    values: list[float] = []
    lines: list[int] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if [h.strip().lstrip("﻿") for h in header] != ["timestamp", "value"]:
            raise InputError(f"{path}: expected header 'timestamp,value', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            raw_ts, raw_val = row[0].strip(), row[1].strip()
            parsed = None
            for fmt in _TS_FORMATS:
                try:
                    parsed = dt.datetime.strptime(raw_ts, fmt)
                    break
                except ValueError:
                    continue
            if parsed is None:
                raise InputError(f"{path}:{lineno}: bad timestamp {raw_ts!r} (want ISO-8601 to the minute)")
            try:
                val = float(raw_val)
            except ValueError:
                raise InputError(f"{path}:{lineno}: bad value {raw_val!r}") from None
            if not np.isfinite(val) or val <= 0:
                raise InputError(f"{path}:{lineno}: value must be a positive finite number, got {raw_val}")
            stamps.append(parsed)
            values.append(val)
            lines.append(lineno)
    if not stamps:
        raise InputError(f"{path}: no data rows")

    order = sorted(range(len(stamps)), key=lambda k: stamps[k])
    for a, b in zip(order, order[1:]):
        if stamps[a] == stamps[b]:
            raise InputError(f"{path}:{lines[max(a, b)]}: duplicate timestamp {stamps[a].isoformat()}")

    ts = np.array([stamps[k] for k in order], dtype="datetime64[m]")
    vals = np.array([values[k] for k in order], dtype=float)
    # session lookup with line numbers preserved for diagnostics
    sids = np.empty(len(ts), dtype=np.int64)
    for k in range(len(ts)):
        sid = calendar.session_index(stamps[order[k]])
        if sid is None:
            raise InputError(
                f"{path}:{lines[order[k]]}: timestamp {stamps[order[k]].isoformat()} "
                f"falls outside every declared session")
        sids[k] = sid
    return TickSeries(ts, vals, calendar, sids, source if source is not None else str(path))


@dataclass(frozen=True)
class Segment:
    """Half-open index range [start, stop) of a parent series."""

    parent: TickSeries
    start: int
    stop: int
    label: str

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.stop <= len(self.parent)):
            raise InputError(f"segment {self.label!r}: bad range [{self.start}, {self.stop})")
        if self.stop - self.start < 2:
            raise InputError(f"segment {self.label!r}: needs at least 2 points")

    @property
    def timestamps(self) -> np.ndarray:
        return self.parent.timestamps[self.start:self.stop]

    @property
    def values(self) -> np.ndarray:
        return self.parent.values[self.start:self.stop]

    @property
    def session_ids(self) -> np.ndarray:
        return self.parent.session_ids[self.start:self.stop]

    def __len__(self) -> int:
        return self.stop - self.start


def whole_series_segment(series: TickSeries, label: str = "all") -> Segment:
    return Segment(series, 0, len(series), label)


def segment_by_calendar(series: TickSeries, boundaries: list[dt.date]) -> list[Segment]:
    """Partition a series at date boundaries; each boundary starts a new segment.

    With no boundaries the whole series is one segment.  Every boundary must
    lie strictly inside the series' date span so no segment comes out empty.
    """
    if sorted(boundaries) != list(boundaries):
        raise InputError("boundaries must be sorted ascending")
    if len(set(boundaries)) != len(boundaries):
        raise InputError("boundaries must be distinct")
    dates = series.timestamps.astype("datetime64[D]")
    first, last = dates[0], dates[-1]
    cuts = [0]
    for b in boundaries:
        b64 = np.datetime64(b, "D")
        if not (first < b64 <= last):
            raise InputError(f"boundary {b} outside data span [{first}, {last}]")
        cuts.append(int(np.searchsorted(dates, b64, side="left")))
    cuts.append(len(series))
    if sorted(cuts) != cuts:
        raise InputError("boundaries produce out-of-order cuts")
    segments = []
    for i, (a, b) in enumerate(zip(cuts, cuts[1:]), start=1):
        segments.append(Segment(series, a, b, label=str(i)))
    return segments


@dataclass(frozen=True)
class IncrementSeries:
    """One-step increments of a series (or a synthetic stand-in).

    Attributes:
        signed: i(t) = y(t+1) - y(t), index points
        absolute: |i(t)|
        flags: True where the increment spans a session boundary or a gap
            longer than one minute; flagged entries are excluded from
            downstream statistics unless explicitly restored
    """

    signed: np.ndarray
    absolute: np.ndarray
    flags: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        signed = np.asarray(self.signed, dtype=float)
        object.__setattr__(self, "signed", signed)
        object.__setattr__(self, "absolute", np.asarray(self.absolute, dtype=float))
        if self.flags is None:
            object.__setattr__(self, "flags", np.zeros(len(signed), dtype=bool))
        else:
            object.__setattr__(self, "flags", np.asarray(self.flags, dtype=bool))
        if len(self.absolute) != len(signed) or len(self.flags) != len(signed):
            raise InputError("signed, absolute and flags must have equal length")
        if not np.array_equal(self.absolute, np.abs(signed)):
            raise InputError("absolute series must equal |signed| elementwise")

    def __len__(self) -> int:
        return len(self.signed)

    @property
    def clean_absolute(self) -> np.ndarray:
        """Absolute increments with flagged entries removed."""
        return self.absolute[~self.flags]


def increments(segment: Segment, cross_sessions: bool = False) -> IncrementSeries:
    """Eq.-style one-step increments of a segment.

    With cross_sessions=False (the default pipeline), entries whose endpoints
    sit in different sessions, or more than one minute apart inside a session,
    are flagged.  cross_sessions=True clears all flags, restoring the naive
    record-wise behavior.
    """
    if len(segment) < 2:
        raise InputError(f"segment {segment.label!r} too short for increments")
    y = segment.values
    signed = np.diff(y)
    absolute = np.abs(signed)
    if cross_sessions:
        flags = np.zeros(len(signed), dtype=bool)
    else:
        sids = segment.session_ids
        dt_min = np.diff(segment.timestamps) / MINUTE
        flags = (sids[1:] != sids[:-1]) | (dt_min > 1)
    return IncrementSeries(signed, absolute, flags)
