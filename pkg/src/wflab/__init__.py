"""wflab: leakage-free walk-forward evaluation lab for intraday directional
ML on five-minute OHLCV futures bars."""

__version__ = "0.1.0"
