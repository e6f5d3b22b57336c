"""Date-indexed feature matrix with fixed column order and CSV export."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class FeatureMatrix:
    """Aligned per-day feature rows. Missing values are NaN; exports render
    them as empty fields."""

    dates: tuple[date, ...]
    columns: tuple[str, ...]
    values: np.ndarray  # (n_dates, n_columns) float64

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.dates), len(self.columns)):
            raise ValueError(
                f"value shape {self.values.shape} does not match "
                f"{len(self.dates)} dates x {len(self.columns)} columns"
            )

    @property
    def n_rows(self) -> int:
        return len(self.dates)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def select(self, names: list[str] | tuple[str, ...]) -> np.ndarray:
        idx = [self.columns.index(n) for n in names]
        return self.values[:, idx]

    def row_for(self, day: date) -> np.ndarray:
        return self.values[self.dates.index(day)]

    def restrict(self, mask: np.ndarray) -> "FeatureMatrix":
        kept = tuple(d for d, keep in zip(self.dates, mask) if keep)
        return FeatureMatrix(kept, self.columns, self.values[mask])


def _format_value(v: float) -> str:
    if np.isnan(v):
        return ""
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_matrix_csv(path: str | Path, matrix: FeatureMatrix) -> None:
    with open(path, "w") as f:
        f.write("date," + ",".join(matrix.columns) + "\n")
        for day, row in zip(matrix.dates, matrix.values):
            f.write(day.isoformat() + "," + ",".join(_format_value(v) for v in row) + "\n")


def read_matrix_csv(path: str | Path) -> FeatureMatrix:
    with open(path) as f:
        header = f.readline().rstrip("\n").split(",")
        if header[0] != "date":
            raise ValueError(f"bad matrix header: first column {header[0]!r}, expected 'date'")
        columns = tuple(header[1:])
        dates: list[date] = []
        rows: list[list[float]] = []
        for line in f:
            parts = line.rstrip("\n").split(",")
            dates.append(date.fromisoformat(parts[0]))
            rows.append([float(p) if p != "" else float("nan") for p in parts[1:]])
    values = np.array(rows, dtype=np.float64).reshape(len(dates), len(columns))
    return FeatureMatrix(tuple(dates), columns, values)
