"""Histogram gradient boosting for binary classification, built natively.

Logistic loss, equal-count histogram binning fit once on training data,
best-first leaf-wise tree growth capped by max_leaf_nodes, Newton leaf
values -G/(H + l2) shrunk by the learning rate. Fitting is fully
deterministic given (X, y, config): ties in split gain break toward the
lowest feature index, then the lowest bin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from numba import njit


@dataclass(frozen=True, slots=True)
class GbmConfig:
    max_leaf_nodes: int = 15
    min_samples_leaf: int = 50
    learning_rate: float = 0.05
    max_iter: int = 200
    l2_regularization: float = 1.0
    n_histogram_bins: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.max_leaf_nodes, self.min_samples_leaf, self.max_iter) < 1:
            raise ValueError("tree limits must be positive")
        if self.learning_rate <= 0.0 or self.l2_regularization <= 0.0:
            raise ValueError("learning_rate and l2_regularization must be positive")
        if self.n_histogram_bins < 2:
            raise ValueError("n_histogram_bins must be >= 2")


@dataclass(slots=True)
class TreeNode:
    feature: int = -1  # -1 marks a leaf
    split_bin: int = -1  # route left iff bin <= split_bin
    left: int = -1
    right: int = -1
    value: float = 0.0  # leaf contribution in log-odds, already shrunk
    n_samples: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


Tree = list[TreeNode]


@dataclass
class GbmModel:
    config: GbmConfig
    n_features: int
    init_logit: float
    bin_edges: list[np.ndarray]
    trees: list[Tree]
    loss_trace: list[float]  # [0] is the pre-boosting baseline


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def fit_bin_edges(X: np.ndarray, n_bins: int) -> list[np.ndarray]:
    """Per-feature bin boundaries: midpoints between distinct values when few,
    equal-count quantile edges (deduplicated) otherwise."""
    edges: list[np.ndarray] = []
    for f in range(X.shape[1]):
        col = X[:, f]
        distinct = np.unique(col)
        if distinct.size <= n_bins:
            e = (distinct[:-1] + distinct[1:]) / 2.0
        else:
            q = np.arange(1, n_bins) / n_bins
            e = np.unique(np.quantile(col, q))
        edges.append(e.astype(np.float64))
    return edges


def bin_matrix(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    """Map raw values to bin indices; a value equal to a boundary falls in
    the lower bin."""
    binned = np.empty(X.shape, dtype=np.int64)
    for f, e in enumerate(edges):
        binned[:, f] = np.searchsorted(e, X[:, f], side="left")
    return binned


class _NodeState:
    """A growable leaf: its rows, gradient sums, histograms, and best split."""

    __slots__ = ("rows", "hist_g", "hist_h", "hist_c", "grad", "hess", "gain", "feature", "bin")

    def __init__(
        self,
        rows: np.ndarray,
        hist_g: np.ndarray,
        hist_h: np.ndarray,
        hist_c: np.ndarray,
        grad: float,
        hess: float,
    ):
        self.rows = rows
        self.hist_g = hist_g
        self.hist_h = hist_h
        self.hist_c = hist_c
        self.grad = grad
        self.hess = hess
        self.gain = -np.inf
        self.feature = -1
        self.bin = -1


@njit(cache=True)
def _hist_kernel(binned_sub, g_sub, h_sub, n_bins_max):  # pragma: no cover - jitted
    m, d = binned_sub.shape
    hist_g = np.zeros((d, n_bins_max))
    hist_h = np.zeros((d, n_bins_max))
    hist_c = np.zeros((d, n_bins_max), dtype=np.int64)
    total_g = 0.0
    total_h = 0.0
    for i in range(m):
        total_g += g_sub[i]
        total_h += h_sub[i]
        for f in range(d):
            b = binned_sub[i, f]
            hist_g[f, b] += g_sub[i]
            hist_h[f, b] += h_sub[i]
            hist_c[f, b] += 1
    return hist_g, hist_h, hist_c, total_g, total_h


@njit(cache=True)
def _split_kernel(hist_g, hist_h, hist_c, total_g, total_h, total_c, lam, min_leaf):  # pragma: no cover
    """Scan features then bins with strict > comparison, so ties resolve to
    the lowest feature index, then the lowest bin. Returns gain 0 and -1
    markers when no loss-reducing split exists."""
    d, nb = hist_g.shape
    best_gain = 0.0
    best_f = -1
    best_b = -1
    parent = total_g * total_g / (total_h + lam)
    for f in range(d):
        g_left = 0.0
        h_left = 0.0
        c_left = 0
        for b in range(nb - 1):
            g_left += hist_g[f, b]
            h_left += hist_h[f, b]
            c_left += hist_c[f, b]
            if c_left < min_leaf or total_c - c_left < min_leaf:
                continue
            g_right = total_g - g_left
            h_right = total_h - h_left
            gain = 0.5 * (
                g_left * g_left / (h_left + lam)
                + g_right * g_right / (h_right + lam)
                - parent
            )
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
    return best_gain, best_f, best_b


def _node_state(
    binned: np.ndarray, rows: np.ndarray, g: np.ndarray, h: np.ndarray, n_bins_max: int
) -> _NodeState:
    hist_g, hist_h, hist_c, total_g, total_h = _hist_kernel(binned[rows], g[rows], h[rows], n_bins_max)
    return _NodeState(rows, hist_g, hist_h, hist_c, total_g, total_h)


def _find_best_split(state: _NodeState, cfg: GbmConfig) -> None:
    gain, feature, split_bin = _split_kernel(
        state.hist_g,
        state.hist_h,
        state.hist_c,
        state.grad,
        state.hess,
        len(state.rows),
        cfg.l2_regularization,
        cfg.min_samples_leaf,
    )
    if feature >= 0:
        state.gain = float(gain)
        state.feature = int(feature)
        state.bin = int(split_bin)
    else:
        state.gain = -np.inf
        state.feature = -1
        state.bin = -1


def _grow_tree(
    binned: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: GbmConfig, n_bins_max: int
) -> Tree:
    n = binned.shape[0]
    lam = cfg.l2_regularization
    shrink = cfg.learning_rate

    root = _node_state(binned, np.arange(n), g, h, n_bins_max)
    _find_best_split(root, cfg)

    nodes: Tree = [TreeNode(n_samples=n)]
    # (state, node index); kept in insertion order, scanned for the max-gain
    # leaf so tie-breaks are by node creation order.
    open_leaves: list[tuple[_NodeState, int]] = [(root, 0)]
    n_leaves = 1

    while n_leaves < cfg.max_leaf_nodes:
        best_i = -1
        best_gain = 0.0
        for i, (state, _) in enumerate(open_leaves):
            if state.gain > best_gain:
                best_gain = state.gain
                best_i = i
        if best_i < 0:
            break

        state, node_idx = open_leaves.pop(best_i)
        go_left = binned[state.rows, state.feature] <= state.bin
        left_state = _node_state(binned, state.rows[go_left], g, h, n_bins_max)
        right_state = _node_state(binned, state.rows[~go_left], g, h, n_bins_max)
        _find_best_split(left_state, cfg)
        _find_best_split(right_state, cfg)

        left_idx = len(nodes)
        right_idx = left_idx + 1
        nodes.append(TreeNode(n_samples=len(left_state.rows)))
        nodes.append(TreeNode(n_samples=len(right_state.rows)))
        parent = nodes[node_idx]
        parent.feature = state.feature
        parent.split_bin = state.bin
        parent.left = left_idx
        parent.right = right_idx
        open_leaves.append((left_state, left_idx))
        open_leaves.append((right_state, right_idx))
        n_leaves += 1

    for state, node_idx in open_leaves:
        nodes[node_idx].value = -state.grad / (state.hess + lam) * shrink
    if len(nodes) == 1:
        # No loss-reducing split exists; the stump contributes exactly zero.
        nodes[0].value = 0.0
    return nodes


def _tree_predict_binned(nodes: Tree, binned: np.ndarray) -> np.ndarray:
    out = np.zeros(binned.shape[0])
    stack: list[tuple[int, np.ndarray]] = [(0, np.arange(binned.shape[0]))]
    while stack:
        node_idx, rows = stack.pop()
        node = nodes[node_idx]
        if node.is_leaf:
            out[rows] = node.value
        else:
            go_left = binned[rows, node.feature] <= node.split_bin
            stack.append((node.left, rows[go_left]))
            stack.append((node.right, rows[~go_left]))
    return out


def fit_gbm(X: np.ndarray, y: np.ndarray, cfg: GbmConfig | None = None) -> GbmModel:
    """Fit the boosted ensemble on logistic loss.

    X must be fully observed; y binary with both classes present and at
    least 2 * min_samples_leaf rows.
    """
    cfg = cfg or GbmConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"row/label mismatch: {X.shape[0]} rows, {y.shape[0]} labels")
    if np.isnan(X).any():
        raise ValueError("X contains missing values; drop incomplete rows upstream")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary 0/1")
    if y.min() == y.max():
        raise ValueError("single-class y: both classes must be present")
    if X.shape[0] < 2 * cfg.min_samples_leaf:
        raise ValueError(
            f"need at least {2 * cfg.min_samples_leaf} rows for min_samples_leaf={cfg.min_samples_leaf}"
        )

    edges = fit_bin_edges(X, cfg.n_histogram_bins)
    binned = bin_matrix(X, edges)
    n_bins_max = max(e.size + 1 for e in edges)

    base_rate = float(y.mean())
    init_logit = float(np.log(base_rate / (1.0 - base_rate)))
    raw = np.full(X.shape[0], init_logit)

    trees: list[Tree] = []
    loss_trace = [_log_loss(y, _sigmoid(raw))]
    for _ in range(cfg.max_iter):
        p = _sigmoid(raw)
        g = p - y
        h = p * (1.0 - p)
        tree = _grow_tree(binned, g, h, cfg, n_bins_max)
        trees.append(tree)
        raw = raw + _tree_predict_binned(tree, binned)
        loss_trace.append(_log_loss(y, _sigmoid(raw)))

    return GbmModel(
        config=cfg,
        n_features=X.shape[1],
        init_logit=init_logit,
        bin_edges=edges,
        trees=trees,
        loss_trace=loss_trace,
    )


def predict_raw_gbm(model: GbmModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature columns, got {X.shape}")
    binned = bin_matrix(X, model.bin_edges)
    raw = np.full(X.shape[0], model.init_logit)
    for tree in model.trees:
        raw += _tree_predict_binned(tree, binned)
    return raw


def predict_proba_gbm(model: GbmModel, X: np.ndarray) -> np.ndarray:
    """P(y=1) per row, strictly inside (0, 1)."""
    return _sigmoid(predict_raw_gbm(model, X))


@dataclass(frozen=True)
class ImportanceResult:
    importances: dict[str, float]  # mean accuracy drop per feature
    ranking: list[str]  # descending importance


def permutation_importance(
    model: GbmModel,
    X: np.ndarray,
    y: np.ndarray,
    n_repeats: int = 10,
    seed: int = 0,
    feature_names: list[str] | None = None,
) -> ImportanceResult:
    """Mean accuracy drop when one column is shuffled, over n_repeats seeded
    shuffles per feature. Repeats use independently derived seeds so they can
    run in any order."""
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    names = feature_names or [f"feature_{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError("feature_names length must match X columns")

    base_pred = predict_proba_gbm(model, X) >= 0.5
    base_acc = float((base_pred == (y == 1)).mean())

    drops = np.zeros((n_repeats, X.shape[1]))
    for r in range(n_repeats):
        rng = np.random.default_rng(np.random.SeedSequence((seed, r)))
        for f in range(X.shape[1]):
            perm = rng.permutation(X.shape[0])
            shuffled = X.copy()
            shuffled[:, f] = X[perm, f]
            pred = predict_proba_gbm(model, shuffled) >= 0.5
            drops[r, f] = base_acc - float((pred == (y == 1)).mean())

    means = drops.mean(axis=0)
    importances = {name: float(m) for name, m in zip(names, means)}
    ranking = sorted(names, key=lambda nm: (-importances[nm], nm))
    return ImportanceResult(importances, ranking)


def model_to_json(model: GbmModel) -> str:
    doc = {
        "kind": "wflab.gbm",
        "config": asdict(model.config),
        "n_features": model.n_features,
        "init_logit": model.init_logit,
        "bin_edges": [e.tolist() for e in model.bin_edges],
        "trees": [
            [
                {
                    "feature": nd.feature,
                    "split_bin": nd.split_bin,
                    "left": nd.left,
                    "right": nd.right,
                    "value": nd.value,
                    "n_samples": nd.n_samples,
                }
                for nd in tree
            ]
            for tree in model.trees
        ],
        "loss_trace": model.loss_trace,
    }
    return json.dumps(doc, indent=2)


def model_from_json(text: str) -> GbmModel:
    doc = json.loads(text)
    if doc.get("kind") != "wflab.gbm":
        raise ValueError("not a serialized GBM model")
    trees = [
        [TreeNode(**{k: nd[k] for k in ("feature", "split_bin", "left", "right", "value", "n_samples")}) for nd in tree]
        for tree in doc["trees"]
    ]
    return GbmModel(
        config=GbmConfig(**doc["config"]),
        n_features=doc["n_features"],
        init_logit=doc["init_logit"],
        bin_edges=[np.asarray(e, dtype=np.float64) for e in doc["bin_edges"]],
        trees=trees,
        loss_trace=list(doc["loss_trace"]),
    )


def save_model(path: str | Path, model: GbmModel) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path: str | Path) -> GbmModel:
    return model_from_json(Path(path).read_text())
