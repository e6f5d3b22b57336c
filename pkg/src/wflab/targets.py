"""Binary target construction: daily close-vs-open, first-hour survival,
intraday from the 10:30 bar open, and the ATR-normalized variant.

All threshold comparisons are strict. The 10:30 reference is the open of
the 13th RTH bar, the first bar not seen by the first-hour feature window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .market_data import Session

FIRST_HOUR_BARS = 12
BAR_1030_INDEX = 12  # 13th bar, timestamp 10:30

KINDS = (
    "daily_close_vs_open",
    "first_hour_survival",
    "intraday_from_1030",
    "intraday_vol_adjusted",
)
SIDES = ("long", "short")


@dataclass(frozen=True, slots=True)
class TargetSpec:
    kind: str
    side: str = "long"
    threshold_points: float = 10.0
    atr_multiplier: float = 1.0
    atr_baseline: float = 10.34

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        if self.threshold_points <= 0.0:
            raise ValueError("threshold_points must be positive")
        if self.kind == "intraday_vol_adjusted" and self.atr_multiplier <= 0.0:
            raise ValueError("atr_multiplier must be positive for the vol-adjusted target")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "side": self.side,
            "threshold_points": self.threshold_points,
            "atr_multiplier": self.atr_multiplier,
            "atr_baseline": self.atr_baseline,
        }


@dataclass(frozen=True)
class LabelSeries:
    spec: TargetSpec
    labels: dict[date, int]

    @property
    def base_rate(self) -> float:
        return base_rate(self)

    def dates(self) -> list[date]:
        return sorted(self.labels)


def base_rate(series: LabelSeries) -> float:
    if not series.labels:
        raise ValueError("empty label series")
    return sum(series.labels.values()) / len(series.labels)


def label_daily(sessions: list[Session], side: str = "long", threshold: float = 2.0) -> LabelSeries:
    """1 iff the session close beats the session open by more than
    ``threshold`` points (strict), on the requested side."""
    spec = TargetSpec("daily_close_vs_open", side, threshold)
    labels: dict[date, int] = {}
    for s in sessions:
        if side == "long":
            labels[s.date] = int(s.session_close > s.session_open + threshold)
        else:
            labels[s.date] = int(s.session_open > s.session_close + threshold)
    return LabelSeries(spec, labels)


def label_first_hour_survival(
    sessions: list[Session], side: str = "long", threshold: float = 2.0
) -> LabelSeries:
    """Scan bars 1-12: 1 iff the favorable threshold off the session open is
    touched strictly before the adverse one. A bar touching both resolves
    pessimistically to 0, as does no touch at all."""
    spec = TargetSpec("first_hour_survival", side, threshold)
    labels: dict[date, int] = {}
    for s in sessions:
        ref = s.session_open
        up_level = ref + threshold
        down_level = ref - threshold
        label = 0
        for bar in s.bars[:FIRST_HOUR_BARS]:
            up = bar.high >= up_level
            down = bar.low <= down_level
            if up and down:
                label = 0
                break
            if up:
                label = 1 if side == "long" else 0
                break
            if down:
                label = 1 if side == "short" else 0
                break
        labels[s.date] = label
    return LabelSeries(spec, labels)


def label_intraday(sessions: list[Session], side: str = "long", threshold: float = 10.0) -> LabelSeries:
    """1 iff the session close beats the 10:30 bar open by more than
    ``threshold`` points (strict), on the requested side."""
    spec = TargetSpec("intraday_from_1030", side, threshold)
    labels: dict[date, int] = {}
    for s in sessions:
        ref = s.bars[BAR_1030_INDEX].open
        if side == "long":
            labels[s.date] = int(s.session_close > ref + threshold)
        else:
            labels[s.date] = int(ref > s.session_close + threshold)
    return LabelSeries(spec, labels)


def label_intraday_vol_adjusted(
    sessions: list[Session],
    atr_ratio: dict[date, float],
    side: str = "long",
    k: float = 1.0,
    baseline: float = 10.34,
) -> LabelSeries:
    """Intraday target with a per-day threshold k * atr_ratio * baseline.
    Dates without an ATR ratio are excluded from the series."""
    spec = TargetSpec("intraday_vol_adjusted", side, baseline, atr_multiplier=k, atr_baseline=baseline)
    labels: dict[date, int] = {}
    for s in sessions:
        ratio = atr_ratio.get(s.date)
        if ratio is None:
            continue
        threshold = k * ratio * baseline
        ref = s.bars[BAR_1030_INDEX].open
        if side == "long":
            labels[s.date] = int(s.session_close > ref + threshold)
        else:
            labels[s.date] = int(ref > s.session_close + threshold)
    return LabelSeries(spec, labels)


def write_labels(path: str | Path, series: LabelSeries) -> None:
    """Two-column ``date,label`` file plus a JSON sidecar echoing the spec."""
    path = Path(path)
    with open(path, "w") as f:
        f.write("date,label\n")
        for day in series.dates():
            f.write(f"{day.isoformat()},{series.labels[day]}\n")
    with open(path.with_suffix(path.suffix + ".spec.json"), "w") as f:
        json.dump(series.spec.to_dict(), f, indent=2)
        f.write("\n")


def read_labels(path: str | Path) -> LabelSeries:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".spec.json")) as f:
        raw = json.load(f)
    spec = TargetSpec(**raw)
    labels: dict[date, int] = {}
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header != "date,label":
            raise ValueError(f"bad label header: {header!r}")
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            day, label = line.split(",")
            labels[date.fromisoformat(day)] = int(label)
    return LabelSeries(spec, labels)
