"""Five-minute OHLCV bar parsing and RTH session assembly.

A session is one complete regular-trading-hours day: exactly ``expected_bars``
bars, aligned on the bar grid, first bar at the session open. Days that fail
any of those checks are skipped with a structured warning, never silently
repaired.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Iterable, Iterator, TextIO

BAR_HEADER = "timestamp,open,high,low,close,volume"
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"


class BarParseError(ValueError):
    """Malformed bar input; message carries the offending line number."""


@dataclass(frozen=True, slots=True)
class Bar:
    """One five-minute OHLCV record."""

    timestamp: datetime
    open: float
    high: float
    low: float
    close: float
    volume: int

    def __post_init__(self) -> None:
        if min(self.open, self.high, self.low, self.close) <= 0.0:
            raise ValueError(f"non-positive price in bar at {self.timestamp}")
        if self.low > self.high:
            raise ValueError(f"high < low in bar at {self.timestamp}")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise ValueError(f"open/close outside [low, high] in bar at {self.timestamp}")
        if self.volume < 0:
            raise ValueError(f"negative volume in bar at {self.timestamp}")


@dataclass(frozen=True, slots=True)
class SessionSpec:
    """RTH session geometry. Defaults: 09:30-16:00, 5-minute bars, 78 per day."""

    session_start: time = time(9, 30)
    session_end: time = time(16, 0)
    bar_minutes: int = 5
    expected_bars: int = 78

    def __post_init__(self) -> None:
        span = (
            datetime.combine(date(2000, 1, 3), self.session_end)
            - datetime.combine(date(2000, 1, 3), self.session_start)
        )
        minutes = span.total_seconds() / 60.0
        if minutes != self.bar_minutes * self.expected_bars:
            raise ValueError(
                f"expected_bars {self.expected_bars} does not tile "
                f"{minutes:.0f} minutes at {self.bar_minutes}-minute bars"
            )


@dataclass(frozen=True, slots=True)
class Session:
    """One complete RTH trading day."""

    date: date
    bars: tuple[Bar, ...]
    session_open: float
    session_high: float
    session_low: float
    session_close: float
    session_volume: int
    first_bar_volume: int

    @classmethod
    def from_bars(cls, day: date, bars: Iterable[Bar]) -> "Session":
        bars = tuple(bars)
        if not bars:
            raise ValueError(f"empty bar list for {day}")
        return cls(
            date=day,
            bars=bars,
            session_open=bars[0].open,
            session_high=max(b.high for b in bars),
            session_low=min(b.low for b in bars),
            session_close=bars[-1].close,
            session_volume=sum(b.volume for b in bars),
            first_bar_volume=bars[0].volume,
        )


@dataclass(frozen=True, slots=True)
class SkippedDay:
    """Structured warning for a day rejected by session assembly."""

    date: date
    reason: str
    bar_count: int

    def to_json(self) -> str:
        return json.dumps(
            {"date": self.date.isoformat(), "reason": self.reason, "bar_count": self.bar_count}
        )


@dataclass(frozen=True)
class BarFileFormat:
    """Delimited bar file layout; the default matches the documented interface."""

    delimiter: str = ","
    columns: tuple[str, ...] = ("timestamp", "open", "high", "low", "close", "volume")
    timestamp_format: str = TIMESTAMP_FORMAT


def parse_bars(stream: Iterable[str] | TextIO, fmt: BarFileFormat | None = None) -> list[Bar]:
    """Parse a header-bearing delimited bar file into ascending-timestamp Bars.

    Raises BarParseError naming the line number on any malformed row,
    duplicate timestamp, non-monotonic timestamp, or OHLC inconsistency.
    """
    fmt = fmt or BarFileFormat()
    lines = iter(stream)
    try:
        header = next(lines)
    except StopIteration:
        raise BarParseError("empty input: missing header line") from None
    names = tuple(h.strip() for h in header.rstrip("\n").split(fmt.delimiter))
    if names != fmt.columns:
        raise BarParseError(f"line 1: bad header {names!r}, expected {fmt.columns!r}")

    col = {name: i for i, name in enumerate(fmt.columns)}
    bars: list[Bar] = []
    prev_ts: datetime | None = None
    for lineno, line in enumerate(lines, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split(fmt.delimiter)
        if len(parts) != len(fmt.columns):
            raise BarParseError(f"line {lineno}: expected {len(fmt.columns)} fields, got {len(parts)}")
        try:
            ts = datetime.strptime(parts[col["timestamp"]], fmt.timestamp_format)
            bar = Bar(
                timestamp=ts,
                open=float(parts[col["open"]]),
                high=float(parts[col["high"]]),
                low=float(parts[col["low"]]),
                close=float(parts[col["close"]]),
                volume=int(parts[col["volume"]]),
            )
        except (ValueError, OverflowError) as exc:
            raise BarParseError(f"line {lineno}: {exc}") from exc
        if prev_ts is not None:
            if ts == prev_ts:
                raise BarParseError(f"line {lineno}: duplicate timestamp {ts}")
            if ts < prev_ts:
                raise BarParseError(f"line {lineno}: non-monotonic timestamp {ts} after {prev_ts}")
        prev_ts = ts
        bars.append(bar)
    return bars


def _expected_grid(day: date, spec: SessionSpec) -> list[datetime]:
    start = datetime.combine(day, spec.session_start)
    step = timedelta(minutes=spec.bar_minutes)
    return [start + k * step for k in range(spec.expected_bars)]


def assemble_sessions(
    bars: list[Bar], spec: SessionSpec | None = None
) -> tuple[list[Session], list[SkippedDay]]:
    """Group bars into complete RTH sessions; skip and log partial days.

    Only bars whose wall-clock time falls in [session_start, session_end)
    are considered. A day survives iff its retained bars sit exactly on the
    bar grid with no gaps, i.e. ``expected_bars`` bars starting at
    session_start. Returns (sessions sorted by date, skipped-day warnings).
    """
    spec = spec or SessionSpec()
    by_day: dict[date, list[Bar]] = {}
    for bar in bars:
        t = bar.timestamp.time()
        if spec.session_start <= t < spec.session_end:
            by_day.setdefault(bar.timestamp.date(), []).append(bar)

    sessions: list[Session] = []
    skipped: list[SkippedDay] = []
    for day in sorted(by_day):
        day_bars = sorted(by_day[day], key=lambda b: b.timestamp)
        if len(day_bars) != spec.expected_bars:
            skipped.append(SkippedDay(day, "partial day: wrong bar count", len(day_bars)))
            continue
        grid = _expected_grid(day, spec)
        if [b.timestamp for b in day_bars] != grid:
            skipped.append(SkippedDay(day, "misaligned or gapped timestamps", len(day_bars)))
            continue
        sessions.append(Session.from_bars(day, day_bars))
    return sessions, skipped


def bar_to_row(bar: Bar, fmt: BarFileFormat | None = None) -> str:
    fmt = fmt or BarFileFormat()
    return fmt.delimiter.join(
        (
            bar.timestamp.strftime(fmt.timestamp_format),
            repr(bar.open),
            repr(bar.high),
            repr(bar.low),
            repr(bar.close),
            str(bar.volume),
        )
    )


def sessions_to_rows(sessions: Iterable[Session], fmt: BarFileFormat | None = None) -> Iterator[str]:
    """Serialize sessions back to bar rows (header first). Exact round-trip:
    float fields use shortest-repr formatting."""
    fmt = fmt or BarFileFormat()
    yield fmt.delimiter.join(fmt.columns)
    for session in sessions:
        for bar in session.bars:
            yield bar_to_row(bar, fmt)


def write_bars_csv(path: str | Path, bars: Iterable[Bar], fmt: BarFileFormat | None = None) -> None:
    fmt = fmt or BarFileFormat()
    with open(path, "w") as f:
        f.write(fmt.delimiter.join(fmt.columns) + "\n")
        for bar in bars:
            f.write(bar_to_row(bar, fmt) + "\n")


def read_bars_csv(path: str | Path, fmt: BarFileFormat | None = None) -> list[Bar]:
    with open(path) as f:
        return parse_bars(f, fmt)


def write_warnings_jsonl(path: str | Path, skipped: Iterable[SkippedDay]) -> None:
    with open(path, "w") as f:
        for item in skipped:
            f.write(item.to_json() + "\n")
