"""First-60-minutes feature matrix: scalar summaries of bars 1-12 plus the
12-bar return sequence consumed by the sequence model.

Everything here derives from bars 1-12 of the session and prior-session
daily data only; nothing at or after 10:30 is touched. The exact column
roster is the explicit manifest below.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from .daily_features import DailyRow
from .market_data import Session
from .matrix import FeatureMatrix

N_SEQ_BARS = 12

SEQUENCE_COLUMNS: tuple[str, ...] = tuple(f"bar_ret_{i}" for i in range(1, N_SEQ_BARS + 1))
SCALAR_COLUMNS: tuple[str, ...] = (
    "cum_ret_6",
    "cum_ret_12",
    "range_6",
    "range_12",
    "vol_sum_6",
    "vol_sum_12",
    "up_count",
    "down_count",
    "max_up",
    "max_down",
    "close_pos_12",
    "vol_z_12",
    "opening_gap",
    "atr_ratio_val",
    "first_bar_ret",
)
INTRADAY_COLUMNS: tuple[str, ...] = SEQUENCE_COLUMNS + SCALAR_COLUMNS


@dataclass(frozen=True, slots=True)
class IntradayConfig:
    """bar_ret scale: relative (close/open - 1) or point difference (close - open)."""

    bar_ret_mode: str = "relative"
    vol_z_window: int = 20

    def __post_init__(self) -> None:
        if self.bar_ret_mode not in ("relative", "points"):
            raise ValueError(f"unknown bar_ret_mode {self.bar_ret_mode!r}")


def build_intraday_features(
    sessions: list[Session],
    daily_rows: list[DailyRow],
    cfg: IntradayConfig | None = None,
) -> tuple[FeatureMatrix, int]:
    """One row per session from bars 1-12; rows with any missing value are
    dropped. Returns (matrix, dropped-row count).

    ``daily_rows`` supplies opening_gap (the overnight gap) and the prior-day
    ATR ratio; both are missing during the daily warm-up and so bound the
    intraday matrix's own warm-up.
    """
    cfg = cfg or IntradayConfig()
    if len(daily_rows) != len(sessions):
        raise ValueError("daily_rows must align 1:1 with sessions")
    by_date: dict[date, DailyRow] = {r.date: r for r in daily_rows}

    n = len(sessions)
    values = np.full((n, len(INTRADAY_COLUMNS)), np.nan)
    col = {name: j for j, name in enumerate(INTRADAY_COLUMNS)}

    vol_sums_12 = np.array(
        [float(sum(b.volume for b in s.bars[:N_SEQ_BARS])) for s in sessions]
    )

    for i, session in enumerate(sessions):
        head = session.bars[:N_SEQ_BARS]
        opens = np.array([b.open for b in head])
        closes = np.array([b.close for b in head])
        highs = np.array([b.high for b in head])
        lows = np.array([b.low for b in head])
        vols = np.array([float(b.volume) for b in head])

        if cfg.bar_ret_mode == "relative":
            rets = closes / opens - 1.0
            cum_6 = closes[5] / opens[0] - 1.0
            cum_12 = closes[11] / opens[0] - 1.0
        else:
            rets = closes - opens
            cum_6 = closes[5] - opens[0]
            cum_12 = closes[11] - opens[0]

        for k in range(N_SEQ_BARS):
            values[i, k] = rets[k]
        values[i, col["cum_ret_6"]] = cum_6
        values[i, col["cum_ret_12"]] = cum_12
        values[i, col["range_6"]] = highs[:6].max() - lows[:6].min()
        values[i, col["range_12"]] = highs.max() - lows.min()
        values[i, col["vol_sum_6"]] = vols[:6].sum()
        values[i, col["vol_sum_12"]] = vols.sum()
        values[i, col["up_count"]] = float((rets > 0.0).sum())
        values[i, col["down_count"]] = float((rets < 0.0).sum())
        values[i, col["max_up"]] = max(0.0, float(rets.max()))
        values[i, col["max_down"]] = min(0.0, float(rets.min()))
        rng12 = highs.max() - lows.min()
        values[i, col["close_pos_12"]] = (
            (closes[11] - lows.min()) / rng12 if rng12 > 0.0 else 0.5
        )
        values[i, col["first_bar_ret"]] = rets[0]

        # 12-bar volume z-score against the prior vol_z_window sessions' sums
        w = cfg.vol_z_window
        if i >= w:
            window = vol_sums_12[i - w : i]
            std = window.std(ddof=1)
            if std > 0.0:
                values[i, col["vol_z_12"]] = (vol_sums_12[i] - window.mean()) / std

        daily = by_date[session.date]
        if daily.overnight_gap is not None:
            values[i, col["opening_gap"]] = daily.overnight_gap
        if daily.atr_ratio is not None:
            values[i, col["atr_ratio_val"]] = daily.atr_ratio

    keep = ~np.isnan(values).any(axis=1)
    matrix = FeatureMatrix(tuple(s.date for s in sessions), INTRADAY_COLUMNS, values).restrict(keep)
    return matrix, int(n - matrix.n_rows)


def sequences_from_matrix(matrix: FeatureMatrix) -> np.ndarray:
    """(n, 12, 1) return-sequence tensor, bar_ret_1..bar_ret_12 in order."""
    seq = matrix.select(list(SEQUENCE_COLUMNS))
    return seq.reshape(matrix.n_rows, N_SEQ_BARS, 1)
