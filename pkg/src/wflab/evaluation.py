"""Walk-forward folds, classification metrics with calibration summaries,
retrain-per-shuffle permutation testing, and feature-importance stability.

The permutation test applies one global permutation to the concatenated
train+test label vector per iteration (config-switchable to train-only),
refits the supplied trainer and evaluates against the shuffled test labels.
Per-iteration seeds are derived independently from the master seed, so
iterations may run in any order or in parallel with bit-stable results.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import date
from typing import Callable, Sequence

import numpy as np

ALPHA = 0.05

TrainerFn = Callable[..., np.ndarray]  # trainer(X_train, y_train, X_test, seed) -> P(y=1)


class PermutationTrainerError(RuntimeError):
    """Trainer failure inside the permutation loop; names the iteration."""


@dataclass(frozen=True)
class FoldSpec:
    """Expanding-window walk-forward roster: ((start_year, end_year), test_year)."""

    folds: tuple[tuple[tuple[int, int], int], ...] = (
        ((2022, 2022), 2023),
        ((2022, 2023), 2024),
        ((2022, 2024), 2025),
    )

    def __post_init__(self) -> None:
        if not self.folds:
            raise ValueError("fold roster is empty")
        prev: tuple[int, int] | None = None
        test_years: list[int] = []
        for (start, end), test_year in self.folds:
            if start > end:
                raise ValueError(f"bad train range {start}-{end}")
            if test_year <= end:
                raise ValueError(f"test year {test_year} not strictly after train range {start}-{end}")
            if prev is not None and (start > prev[0] or end < prev[1]):
                raise ValueError("train ranges must be expanding")
            prev = (start, end)
            test_years.append(test_year)
        if len(set(test_years)) != len(test_years):
            raise ValueError("test windows must be disjoint")


@dataclass(frozen=True)
class Fold:
    index: int  # 1-based
    train_years: tuple[int, int]
    test_year: int
    train_idx: np.ndarray
    test_idx: np.ndarray


def make_folds(dates: Sequence[date], spec: FoldSpec | None = None) -> list[Fold]:
    """Partition date-indexed rows into walk-forward folds by calendar year."""
    spec = spec or FoldSpec()
    years = np.array([d.year for d in dates])
    folds: list[Fold] = []
    for k, ((start, end), test_year) in enumerate(spec.folds, start=1):
        train_idx = np.flatnonzero((years >= start) & (years <= end))
        test_idx = np.flatnonzero(years == test_year)
        if train_idx.size == 0:
            raise ValueError(f"fold {k}: no training rows in {start}-{end}")
        if test_idx.size == 0:
            raise ValueError(f"fold {k}: no test rows in {test_year}")
        folds.append(Fold(k, (start, end), test_year, train_idx, test_idx))
    return folds


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    mean_prob_actual_pos: float
    mean_prob_actual_neg: float
    n: int
    tp: int
    fp: int
    fn: int
    tn: int
    degenerate_fields: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "mean_prob_actual_pos": self.mean_prob_actual_pos,
            "mean_prob_actual_neg": self.mean_prob_actual_neg,
            "n": self.n,
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "degenerate_fields": list(self.degenerate_fields),
        }


def classification_metrics(probs: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> Metrics:
    """Confusion-matrix rates at ``prob >= threshold`` plus the calibration
    summary (mean predicted probability over actual positives/negatives).
    Zero-denominator rates are reported as 0 and flagged."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape[0] == 0:
        raise ValueError("empty input")
    if probs.shape[0] != labels.shape[0]:
        raise ValueError("probs/labels length mismatch")

    pred = probs >= threshold
    actual = labels == 1
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    fn = int(np.sum(~pred & actual))
    tn = int(np.sum(~pred & ~actual))
    n = probs.shape[0]

    degenerate: list[str] = []
    accuracy = (tp + tn) / n
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    if precision + recall > 0.0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    if actual.any():
        mean_pos = float(probs[actual].mean())
    else:
        mean_pos = 0.0
        degenerate.append("mean_prob_actual_pos")
    if (~actual).any():
        mean_neg = float(probs[~actual].mean())
    else:
        mean_neg = 0.0
        degenerate.append("mean_prob_actual_neg")

    return Metrics(
        accuracy=float(accuracy),
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        mean_prob_actual_pos=mean_pos,
        mean_prob_actual_neg=mean_neg,
        n=n,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        degenerate_fields=tuple(degenerate),
    )


@dataclass(frozen=True)
class PermResult:
    actual_accuracy: float
    n_iterations: int
    shuffled_accuracies: tuple[float, ...]
    shuffled_mean: float
    shuffled_std: float
    shuffled_max: float
    p_value: float  # inclusive proportion count(shuffled >= actual)/n
    p_value_smoothed: float  # (count + 1)/(n + 1)
    verdict: str

    def to_dict(self) -> dict:
        return {
            "actual_accuracy": self.actual_accuracy,
            "n_iterations": self.n_iterations,
            "shuffled_accuracies": list(self.shuffled_accuracies),
            "shuffled_mean": self.shuffled_mean,
            "shuffled_std": self.shuffled_std,
            "shuffled_max": self.shuffled_max,
            "p_value": self.p_value,
            "p_value_smoothed": self.p_value_smoothed,
            "alpha": ALPHA,
            "verdict": self.verdict,
        }


def _derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])


def _accuracy(probs: np.ndarray, labels: np.ndarray, threshold: float) -> float:
    return float(((probs >= threshold) == (np.asarray(labels) == 1)).mean())


def _perm_iteration(args: tuple) -> tuple[int, float]:
    (i, trainer, x_train, x_test, y_all, n_train, seed, threshold, scope) = args
    try:
        rng = np.random.default_rng(np.random.SeedSequence((seed, i + 1, 0)))
        if scope == "global":
            perm = rng.permutation(y_all.shape[0])
            y_shuffled = y_all[perm]
            y_fit, y_eval = y_shuffled[:n_train], y_shuffled[n_train:]
        else:  # train_only
            perm = rng.permutation(n_train)
            y_fit, y_eval = y_all[:n_train][perm], y_all[n_train:]
        probs = trainer(x_train, y_fit, x_test, seed=_derive_seed(seed, i + 1, 1))
        return i, _accuracy(probs, y_eval, threshold)
    except Exception as exc:
        raise PermutationTrainerError(f"iteration {i}: {exc}") from exc


def permutation_test(
    trainer: TrainerFn,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_test: np.ndarray,
    y_test: np.ndarray,
    n: int = 200,
    seed: int = 0,
    threshold: float = 0.5,
    shuffle_scope: str = "global",
    threads: int = 1,
) -> PermResult:
    """Retrain-per-shuffle significance test.

    The actual accuracy comes from an unshuffled fit; each of the n
    iterations shuffles the labels (globally across train+test by default),
    refits, and evaluates against the shuffled test labels. p is the
    inclusive proportion of shuffled accuracies >= the actual one.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if shuffle_scope not in ("global", "train_only"):
        raise ValueError(f"unknown shuffle_scope {shuffle_scope!r}")
    y_train = np.asarray(y_train)
    y_test = np.asarray(y_test)
    y_all = np.concatenate([y_train, y_test])
    n_train = y_train.shape[0]

    try:
        actual_probs = trainer(x_train, y_train, x_test, seed=_derive_seed(seed, 0, 1))
    except Exception as exc:
        raise PermutationTrainerError(f"actual fit: {exc}") from exc
    actual = _accuracy(actual_probs, y_test, threshold)

    jobs = [
        (i, trainer, x_train, x_test, y_all, n_train, seed, threshold, shuffle_scope)
        for i in range(n)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_perm_iteration, jobs))
    else:
        results = [_perm_iteration(job) for job in jobs]
    results.sort(key=lambda pair: pair[0])
    shuffled = np.array([acc for _, acc in results])

    count = int(np.sum(shuffled >= actual))
    p = count / n
    verdict = (
        "PASS — statistically significant" if p < ALPHA else "FAIL — not statistically significant"
    )
    return PermResult(
        actual_accuracy=actual,
        n_iterations=n,
        shuffled_accuracies=tuple(float(a) for a in shuffled),
        shuffled_mean=float(shuffled.mean()),
        shuffled_std=float(shuffled.std(ddof=1)) if n > 1 else 0.0,
        shuffled_max=float(shuffled.max()),
        p_value=p,
        p_value_smoothed=(count + 1) / (n + 1),
        verdict=verdict,
    )


@dataclass(frozen=True)
class CalibrationPoint:
    bin_center: float
    mean_predicted: float
    positive_rate: float
    count: int


def calibration_curve(probs: np.ndarray, labels: np.ndarray, n_bins: int = 10) -> list[CalibrationPoint]:
    """Equal-width probability bins on [0, 1]; empty bins are omitted."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape[0] == 0:
        raise ValueError("empty input")
    bins = np.minimum((probs * n_bins).astype(int), n_bins - 1)
    points: list[CalibrationPoint] = []
    for b in range(n_bins):
        mask = bins == b
        count = int(mask.sum())
        if count == 0:
            continue
        points.append(
            CalibrationPoint(
                bin_center=(b + 0.5) / n_bins,
                mean_predicted=float(probs[mask].mean()),
                positive_rate=float((labels[mask] == 1).mean()),
                count=count,
            )
        )
    return points


@dataclass(frozen=True)
class RankMatrix:
    features: tuple[str, ...]  # union of per-fold top_k, display order
    ranks: np.ndarray  # (n_features, n_folds), 1 = top importance
    top5_consistent: tuple[str, ...]  # in every fold's top 5
    top1_stable: bool

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "ranks": self.ranks.tolist(),
            "top5_consistent": list(self.top5_consistent),
            "top1_stable": self.top1_stable,
        }


def importance_rank_matrix(
    per_fold_importances: list[dict[str, float]], top_k: int = 10
) -> RankMatrix:
    """Rank features per fold (1 = top), restrict the matrix to the union of
    each fold's top_k, and flag cross-fold stability."""
    if len(per_fold_importances) < 2:
        raise ValueError("need importances from at least 2 folds")
    if any(not imp for imp in per_fold_importances):
        raise ValueError("empty importance map")

    rankings: list[list[str]] = []
    for imp in per_fold_importances:
        rankings.append(sorted(imp, key=lambda name: (-imp[name], name)))

    union: set[str] = set()
    for ranking in rankings:
        union.update(ranking[:top_k])

    rank_of = [{name: r + 1 for r, name in enumerate(ranking)} for ranking in rankings]
    # Display order: best rank anywhere, then name.
    features = tuple(
        sorted(union, key=lambda name: (min(rk.get(name, len(rk) + 1) for rk in rank_of), name))
    )
    ranks = np.array(
        [[rk.get(name, len(rk) + 1) for rk in rank_of] for name in features], dtype=np.int64
    )
    top5 = [set(ranking[:5]) for ranking in rankings]
    top5_consistent = tuple(sorted(set.intersection(*top5)))
    top1_stable = len({ranking[0] for ranking in rankings}) == 1
    return RankMatrix(features, ranks, top5_consistent, top1_stable)
