"""Expanding-window decile tokenization with strict no-lookahead thresholds.

The token for index N is derived exclusively from values at indices < N:
thresholds are the q/n_bins empirical quantiles (linear interpolation
between order statistics) of the history, and a value maps to the count of
thresholds strictly below it. Values equal to a threshold fall in the lower
bin. Indices with fewer than ``min_history`` prior observations emit missing.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

MISSING_TOKEN = -1


@dataclass(frozen=True, slots=True)
class TokenizerConfig:
    n_bins: int = 10
    min_history: int = 20

    def __post_init__(self) -> None:
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if self.min_history < self.n_bins:
            raise ValueError("min_history must be >= n_bins")


def _interp_quantiles(sorted_values: np.ndarray, n_bins: int) -> np.ndarray:
    """Quantiles q/n_bins (q=1..n_bins-1) of a pre-sorted array, linear
    interpolation between closest order statistics."""
    n = sorted_values.shape[0]
    if n == 0:
        raise ValueError("insufficient history: need at least one value")
    q = np.arange(1, n_bins) / n_bins
    pos = q * (n - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac


def expanding_thresholds(history: list[float] | np.ndarray, n_bins: int = 10) -> np.ndarray:
    """Decile-style bin thresholds of ``history``: the q/n_bins quantiles for
    q = 1..n_bins-1, non-decreasing. Raises on history shorter than n_bins."""
    values = np.asarray(history, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("history must be one-dimensional")
    if values.shape[0] < n_bins:
        raise ValueError(f"insufficient history: {values.shape[0]} values for {n_bins} bins")
    return _interp_quantiles(np.sort(values), n_bins)


def token_for_value(value: float, thresholds: np.ndarray, n_bins: int) -> int:
    """Count of thresholds strictly below ``value``, clamped to [0, n_bins-1].
    An empty threshold set yields token 0."""
    idx = int(np.searchsorted(thresholds, value, side="left"))
    return min(max(idx, 0), n_bins - 1)


def tokenize_series(series: list[float] | np.ndarray, cfg: TokenizerConfig | None = None) -> np.ndarray:
    """Tokenize a complete (no-missing) ordered series.

    Output[N] is computed from thresholds over series[0..N-1] only; the first
    ``min_history`` indices are MISSING_TOKEN (-1). The sorted history is
    maintained incrementally, so the whole pass is O(n^2) worst case but cheap
    for daily-length series.
    """
    cfg = cfg or TokenizerConfig()
    values = np.asarray(series, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("series must be one-dimensional")
    out = np.full(values.shape[0], MISSING_TOKEN, dtype=np.int64)
    history: list[float] = []
    for n, v in enumerate(values):
        if n >= cfg.min_history:
            thresholds = _interp_quantiles(np.asarray(history), cfg.n_bins)
            out[n] = token_for_value(float(v), thresholds, cfg.n_bins)
        bisect.insort(history, float(v))
    return out


def tokenize_with_gaps(
    values: np.ndarray, present: np.ndarray, cfg: TokenizerConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Tokenize a series that has missing entries (feature warm-up holes).

    Threshold history at index N is the prior *present* values; the
    min_history gate counts prior indices of the shared date axis, so a
    feature that first appears after a long warm-up starts tokenizing as
    soon as its raw value exists. With an empty history the token is 0
    (no thresholds lie below any value). Returns (tokens, token_present).
    """
    n = values.shape[0]
    tokens = np.full(n, MISSING_TOKEN, dtype=np.int64)
    token_present = np.zeros(n, dtype=bool)
    history: list[float] = []
    for i in range(n):
        if present[i] and i >= cfg.min_history:
            if history:
                thresholds = _interp_quantiles(np.asarray(history), cfg.n_bins)
                tokens[i] = token_for_value(float(values[i]), thresholds, cfg.n_bins)
            else:
                tokens[i] = 0
            token_present[i] = True
        if present[i]:
            bisect.insort(history, float(values[i]))
    return tokens, token_present
