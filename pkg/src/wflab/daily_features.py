"""Daily feature matrix: per-session aggregates, lags, rolling statistics,
expanding-window tokenization, and the per-feature statistics report.

Every rolling statistic at day N is computed from days < N only. Warm-up
and zero-variance denominators yield missing values, which propagate to row
dropping in the tokenized matrix rather than being filled with zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from datetime import date
from pathlib import Path

import numpy as np

from .market_data import Session
from .matrix import FeatureMatrix
from .tokenizer import TokenizerConfig, tokenize_with_gaps

DAILY_CONTINUOUS: tuple[str, ...] = (
    "daily_return",
    "overnight_gap",
    "range_ratio",
    "close_pos",
    "vol_zscore",
    "lag_ret_1",
    "lag_ret_2",
    "lag_ret_3",
    "lag_ret_5",
    "lag_gap_1",
    "lag_gap_2",
    "lag_gap_3",
    "rolling_ret_5",
    "rolling_ret_10",
    "rolling_ret_20",
    "volatility_10",
    "volatility_20",
    "atr_ratio",
    "first_30m_return",
    "last_30m_return",
    "first_bar_vol_dev",
    "prior_close_pos",
    "prior_range_ratio",
    "prior_vol_zscore",
)
DAILY_PASSTHROUGH: tuple[str, ...] = ("dow_0", "dow_1", "dow_2", "dow_3", "dow_4", "regime_label")
DAILY_COLUMNS: tuple[str, ...] = DAILY_CONTINUOUS + DAILY_PASSTHROUGH
TOKENIZED_COLUMNS: tuple[str, ...] = tuple(f"{c}_token" for c in DAILY_CONTINUOUS) + DAILY_PASSTHROUGH


@dataclass(frozen=True, slots=True)
class DailyRow:
    """One session's feature row; None marks a warm-up/degenerate hole."""

    date: date
    daily_return: float | None
    overnight_gap: float | None
    range_ratio: float | None
    close_pos: float | None
    vol_zscore: float | None
    lag_ret_1: float | None
    lag_ret_2: float | None
    lag_ret_3: float | None
    lag_ret_5: float | None
    lag_gap_1: float | None
    lag_gap_2: float | None
    lag_gap_3: float | None
    rolling_ret_5: float | None
    rolling_ret_10: float | None
    rolling_ret_20: float | None
    volatility_10: float | None
    volatility_20: float | None
    atr_ratio: float | None
    first_30m_return: float | None
    last_30m_return: float | None
    first_bar_vol_dev: float | None
    prior_close_pos: float | None
    prior_range_ratio: float | None
    prior_vol_zscore: float | None
    dow_0: int
    dow_1: int
    dow_2: int
    dow_3: int
    dow_4: int
    regime_label: int


def _prior_mean(values: np.ndarray, window: int) -> np.ndarray:
    """mean(values[t-window:t]) with NaN for t < window."""
    n = values.shape[0]
    out = np.full(n, np.nan)
    for t in range(window, n):
        out[t] = values[t - window : t].mean()
    return out


def _prior_std(values: np.ndarray, window: int) -> np.ndarray:
    """Sample std of values[t-window:t] with NaN for t < window."""
    n = values.shape[0]
    out = np.full(n, np.nan)
    for t in range(window, n):
        out[t] = values[t - window : t].std(ddof=1)
    return out


def _prior_sum(values: np.ndarray, window: int) -> np.ndarray:
    n = values.shape[0]
    out = np.full(n, np.nan)
    for t in range(window, n):
        out[t] = values[t - window : t].sum()
    return out


def _lag(values: np.ndarray, k: int) -> np.ndarray:
    out = np.full(values.shape[0], np.nan)
    out[k:] = values[: values.shape[0] - k]
    return out


def _zscore_vs_prior(values: np.ndarray, window: int) -> np.ndarray:
    """(x_t - mean_prior)/std_prior; zero-variance denominators go missing."""
    mean = _prior_mean(values, window)
    std = _prior_std(values, window)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (values - mean) / std
    out[std == 0.0] = np.nan
    return out


def true_ranges(sessions: list[Session]) -> np.ndarray:
    """True range per session; the first session falls back to high - low
    (no prior close exists)."""
    highs = np.array([s.session_high for s in sessions])
    lows = np.array([s.session_low for s in sessions])
    closes = np.array([s.session_close for s in sessions])
    tr = highs - lows
    if len(sessions) > 1:
        prev_close = closes[:-1]
        tr = np.concatenate(
            [
                tr[:1],
                np.maximum.reduce(
                    [
                        highs[1:] - lows[1:],
                        np.abs(highs[1:] - prev_close),
                        np.abs(lows[1:] - prev_close),
                    ]
                ),
            ]
        )
    return tr


def compute_daily_rows(
    sessions: list[Session], regime_labels: dict[date, int] | None = None
) -> list[DailyRow]:
    """Build one DailyRow per session, all rolling statistics strictly prior.

    ``regime_labels`` is an optional externally supplied date -> int map; when
    absent (globally or for a date) the label column is 0 so the matrix keeps
    its full column set.
    """
    if not sessions:
        raise ValueError("empty session list")
    if len(sessions) < 2:
        raise ValueError("need at least 2 sessions for gap features")

    n = len(sessions)
    opens = np.array([s.session_open for s in sessions])
    highs = np.array([s.session_high for s in sessions])
    lows = np.array([s.session_low for s in sessions])
    closes = np.array([s.session_close for s in sessions])
    volumes = np.array([float(s.session_volume) for s in sessions])
    first_volumes = np.array([float(s.first_bar_volume) for s in sessions])
    bar6_close = np.array([s.bars[5].close for s in sessions])
    bar73_open = np.array([s.bars[72].open for s in sessions])

    daily_return = closes / opens - 1.0

    overnight_gap = np.full(n, np.nan)
    overnight_gap[1:] = opens[1:] / closes[:-1] - 1.0

    day_range = highs - lows
    mean_range_20 = _prior_mean(day_range, 20)
    with np.errstate(invalid="ignore", divide="ignore"):
        range_ratio = day_range / mean_range_20
    range_ratio[mean_range_20 == 0.0] = np.nan

    close_pos = np.where(day_range > 0.0, (closes - lows) / np.where(day_range > 0.0, day_range, 1.0), 0.5)

    vol_zscore = _zscore_vs_prior(volumes, 20)

    tr = true_ranges(sessions)
    atr_fast = _prior_mean(tr, 10)
    atr_slow = _prior_mean(tr, 40)
    with np.errstate(invalid="ignore", divide="ignore"):
        atr_ratio = atr_fast / atr_slow
    atr_ratio[atr_slow == 0.0] = np.nan

    first_30m_return = bar6_close / opens - 1.0
    last_30m_return = closes / bar73_open - 1.0
    first_bar_vol_dev = _zscore_vs_prior(first_volumes, 20)

    cols = {
        "daily_return": daily_return,
        "overnight_gap": overnight_gap,
        "range_ratio": range_ratio,
        "close_pos": close_pos,
        "vol_zscore": vol_zscore,
        "lag_ret_1": _lag(daily_return, 1),
        "lag_ret_2": _lag(daily_return, 2),
        "lag_ret_3": _lag(daily_return, 3),
        "lag_ret_5": _lag(daily_return, 5),
        "lag_gap_1": _lag(overnight_gap, 1),
        "lag_gap_2": _lag(overnight_gap, 2),
        "lag_gap_3": _lag(overnight_gap, 3),
        "rolling_ret_5": _prior_sum(daily_return, 5),
        "rolling_ret_10": _prior_sum(daily_return, 10),
        "rolling_ret_20": _prior_sum(daily_return, 20),
        "volatility_10": _prior_std(daily_return, 10),
        "volatility_20": _prior_std(daily_return, 20),
        "atr_ratio": atr_ratio,
        "first_30m_return": first_30m_return,
        "last_30m_return": last_30m_return,
        "first_bar_vol_dev": first_bar_vol_dev,
        "prior_close_pos": _lag(close_pos, 1),
        "prior_range_ratio": _lag(range_ratio, 1),
        "prior_vol_zscore": _lag(vol_zscore, 1),
    }

    regime_labels = regime_labels or {}
    rows: list[DailyRow] = []
    for i, session in enumerate(sessions):
        weekday = session.date.weekday()
        values = {name: _opt(cols[name][i]) for name in DAILY_CONTINUOUS}
        rows.append(
            DailyRow(
                date=session.date,
                **values,
                dow_0=int(weekday == 0),
                dow_1=int(weekday == 1),
                dow_2=int(weekday == 2),
                dow_3=int(weekday == 3),
                dow_4=int(weekday == 4),
                regime_label=int(regime_labels.get(session.date, 0)),
            )
        )
    return rows


def _opt(v: float) -> float | None:
    return None if math.isnan(v) else float(v)


def rows_to_matrix(rows: list[DailyRow]) -> FeatureMatrix:
    """Raw (untokenized) daily matrix; missing encoded as NaN."""
    values = np.full((len(rows), len(DAILY_COLUMNS)), np.nan)
    for i, row in enumerate(rows):
        for j, name in enumerate(DAILY_COLUMNS):
            v = getattr(row, name)
            if v is not None:
                values[i, j] = float(v)
    return FeatureMatrix(tuple(r.date for r in rows), DAILY_COLUMNS, values)


def build_tokenized_matrix(
    rows: list[DailyRow], cfg: TokenizerConfig | None = None
) -> tuple[FeatureMatrix, int]:
    """Tokenize every continuous feature with expanding thresholds, then drop
    rows carrying any missing value. Returns (matrix, dropped-row count).

    The tokenizer's min_history gate runs on the shared date axis, so a
    feature with a long raw warm-up (e.g. the 40-day ATR ratio) does not pay
    the gate a second time: its tokens begin the day the raw value does.
    """
    cfg = cfg or TokenizerConfig()
    raw = rows_to_matrix(rows)
    n = raw.n_rows

    token_values = np.full((n, len(TOKENIZED_COLUMNS)), np.nan)
    for j, name in enumerate(DAILY_CONTINUOUS):
        col = raw.values[:, j]
        present = ~np.isnan(col)
        tokens, token_present = tokenize_with_gaps(col, present, cfg)
        token_values[token_present, j] = tokens[token_present]
    offset = len(DAILY_CONTINUOUS)
    token_values[:, offset:] = raw.values[:, offset:]

    keep = ~np.isnan(token_values).any(axis=1)
    matrix = FeatureMatrix(raw.dates, TOKENIZED_COLUMNS, token_values).restrict(keep)
    return matrix, int(n - matrix.n_rows)


@dataclass(frozen=True, slots=True)
class FeatureStat:
    """One row of the per-feature statistics report."""

    name: str
    mean: float
    std: float
    minimum: float
    maximum: float
    next_day_corr: float
    missing: int
    degenerate: bool  # zero variance on either side of the correlation


def feature_stats(rows: list[DailyRow], next_day_return: dict[date, float]) -> list[FeatureStat]:
    """Per-feature mean/std/min/max, Pearson correlation with the next
    session's return (pairwise-complete), and missing count."""
    if not rows:
        raise ValueError("empty rows")
    raw = rows_to_matrix(rows)
    nxt = np.array(
        [next_day_return.get(r.date, np.nan) for r in rows], dtype=np.float64
    )

    stats: list[FeatureStat] = []
    for j, name in enumerate(DAILY_COLUMNS):
        col = raw.values[:, j]
        present = ~np.isnan(col)
        vals = col[present]
        missing = int((~present).sum())
        if vals.size == 0:
            stats.append(FeatureStat(name, math.nan, math.nan, math.nan, math.nan, 0.0, missing, True))
            continue
        mean = float(vals.mean())
        std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        pair = present & ~np.isnan(nxt)
        x, y = col[pair], nxt[pair]
        degenerate = x.size < 2 or float(x.std()) == 0.0 or float(y.std()) == 0.0
        corr = 0.0 if degenerate else float(np.corrcoef(x, y)[0, 1])
        stats.append(
            FeatureStat(name, mean, std, float(vals.min()), float(vals.max()), corr, missing, degenerate)
        )
    return stats


STATS_HEADER = "feature,mean,std,min,max,next_day_corr,missing,degenerate"


def write_feature_stats_csv(path: str | Path, stats: list[FeatureStat]) -> None:
    with open(path, "w") as f:
        f.write(STATS_HEADER + "\n")
        for s in stats:
            f.write(
                f"{s.name},{s.mean!r},{s.std!r},{s.minimum!r},{s.maximum!r},"
                f"{s.next_day_corr!r},{s.missing},{int(s.degenerate)}\n"
            )


def read_regime_sidecar(path: str | Path) -> dict[date, int]:
    """Two-column ``date,label`` file with header."""
    out: dict[date, int] = {}
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header != "date,label":
            raise ValueError(f"bad regime sidecar header: {header!r}")
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            day, label = line.split(",")
            out[date.fromisoformat(day)] = int(label)
    return out


def daily_row_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(DailyRow))
