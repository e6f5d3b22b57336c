"""Minimal LSTM binary classifier with hand-written BPTT and Adam.

Single LSTM layer, inverted dropout on the final hidden state, dense
sigmoid head, binary cross-entropy. Everything runs in double precision and
is bit-reproducible from the config seed: weight init, epoch shuffles and
dropout masks all come from one generator consumed in a fixed order. A
central-finite-difference gradient checker guards the backward pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

GATE_NAMES = ("input", "forget", "cell", "output")  # z-block order
PARAM_NAMES = ("w_input", "w_recurrent", "bias", "w_head", "b_head")


@dataclass(frozen=True, slots=True)
class LstmConfig:
    hidden_units: int = 16
    dropout_rate: float = 0.3
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 50
    early_stop_patience: int = 5
    validation_fraction: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if not 0.0 < self.validation_fraction < 0.5:
            raise ValueError("validation_fraction must be in (0, 0.5)")


Params = dict[str, np.ndarray]


def init_params(cfg: LstmConfig, input_dim: int, rng: np.random.Generator) -> Params:
    """Uniform +-1/sqrt(fan_in) weights; forget-gate bias starts at 1."""
    h = cfg.hidden_units
    sx = 1.0 / np.sqrt(input_dim)
    sh = 1.0 / np.sqrt(h)
    bias = np.zeros(4 * h)
    bias[h : 2 * h] = 1.0
    return {
        "w_input": rng.uniform(-sx, sx, size=(input_dim, 4 * h)),
        "w_recurrent": rng.uniform(-sh, sh, size=(h, 4 * h)),
        "bias": bias,
        "w_head": rng.uniform(-sh, sh, size=h),
        "b_head": np.zeros(1),
    }


def n_parameters(params: Params) -> int:
    return sum(p.size for p in params.values())


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward(params: Params, x: np.ndarray) -> tuple[np.ndarray, list[dict]]:
    """Run the recurrence over (B, T, D) input; returns (final hidden, cache)."""
    b, t_steps, _ = x.shape
    h_units = params["w_head"].shape[0]
    h = np.zeros((b, h_units))
    c = np.zeros((b, h_units))
    cache: list[dict] = []
    for t in range(t_steps):
        z = x[:, t, :] @ params["w_input"] + h @ params["w_recurrent"] + params["bias"]
        i = _sigmoid(z[:, :h_units])
        f = _sigmoid(z[:, h_units : 2 * h_units])
        g = np.tanh(z[:, 2 * h_units : 3 * h_units])
        o = _sigmoid(z[:, 3 * h_units :])
        c_prev = c
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h_prev_entry = cache[-1]["h"] if cache else np.zeros((b, h_units))
        cache.append(
            {"x": x[:, t, :], "i": i, "f": f, "g": g, "o": o, "c_prev": c_prev, "tanh_c": tanh_c,
             "h_prev": h_prev_entry, "h": None}
        )
        h = o * tanh_c
        cache[-1]["h"] = h
    return h, cache


def apply_dropout(h: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: kept units are scaled by 1/(1-rate) at train time so
    inference needs no rescaling."""
    if rate <= 0.0:
        return h
    mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
    return h * mask


def _head_probs(params: Params, h: np.ndarray) -> np.ndarray:
    return _sigmoid(h @ params["w_head"] + params["b_head"][0])


def bce_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())


def _forward_backward(
    params: Params, x: np.ndarray, y: np.ndarray, dropout_mask: np.ndarray | None = None
) -> tuple[float, Params]:
    """BCE loss and gradients for one batch. ``dropout_mask`` (if given) is
    the already-scaled inverted-dropout mask applied to the final hidden
    state."""
    b = x.shape[0]
    h_units = params["w_head"].shape[0]
    h_final, cache = _forward(params, x)
    h_used = h_final if dropout_mask is None else h_final * dropout_mask
    p = _head_probs(params, h_used)
    loss = bce_loss(y, p)

    dlogit = (p - y) / b
    grads: Params = {
        "w_input": np.zeros_like(params["w_input"]),
        "w_recurrent": np.zeros_like(params["w_recurrent"]),
        "bias": np.zeros_like(params["bias"]),
        "w_head": h_used.T @ dlogit,
        "b_head": np.array([dlogit.sum()]),
    }

    dh = np.outer(dlogit, params["w_head"])
    if dropout_mask is not None:
        dh = dh * dropout_mask
    dc_next = np.zeros((b, h_units))
    for t in range(len(cache) - 1, -1, -1):
        ct = cache[t]
        do = dh * ct["tanh_c"]
        dc = dc_next + dh * ct["o"] * (1.0 - ct["tanh_c"] ** 2)
        di = dc * ct["g"]
        df = dc * ct["c_prev"]
        dg = dc * ct["i"]
        dc_next = dc * ct["f"]

        dz = np.concatenate(
            [
                di * ct["i"] * (1.0 - ct["i"]),
                df * ct["f"] * (1.0 - ct["f"]),
                dg * (1.0 - ct["g"] ** 2),
                do * ct["o"] * (1.0 - ct["o"]),
            ],
            axis=1,
        )
        grads["w_input"] += ct["x"].T @ dz
        grads["w_recurrent"] += ct["h_prev"].T @ dz
        grads["bias"] += dz.sum(axis=0)
        dh = dz @ params["w_recurrent"].T
    return loss, grads


class _Adam:
    def __init__(self, params: Params, cfg: LstmConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Params, grads: Params) -> None:
        cfg = self.cfg
        self.t += 1
        for k in params:
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * grads[k]
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * grads[k] ** 2
            m_hat = self.m[k] / (1.0 - cfg.beta1**self.t)
            v_hat = self.v[k] / (1.0 - cfg.beta2**self.t)
            params[k] = params[k] - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


@dataclass
class LstmModel:
    config: LstmConfig
    input_dim: int
    params: Params
    history: list[dict]  # per epoch: {"epoch", "train_loss", "val_loss"}
    best_epoch: int


def _check_sequences(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[1] != 12:
        raise ValueError(f"sequences must be (n, 12, d), got {x.shape}")
    if np.isnan(x).any():
        raise ValueError("sequences contain missing values")
    return x


def fit_lstm(sequences: np.ndarray, y: np.ndarray, cfg: LstmConfig | None = None) -> LstmModel:
    """Train with minibatch Adam, chronological validation tail, and early
    stopping on validation loss; the best-validation snapshot is restored."""
    cfg = cfg or LstmConfig()
    x = _check_sequences(sequences)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("label length mismatch")
    if y.min() == y.max():
        raise ValueError("single-class y: both classes must be present")
    if n <= cfg.batch_size:
        raise ValueError(f"need more than batch_size={cfg.batch_size} samples, got {n}")

    n_val = max(1, int(round(n * cfg.validation_fraction)))
    x_train, y_train = x[: n - n_val], y[: n - n_val]
    x_val, y_val = x[n - n_val :], y[n - n_val :]

    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, x.shape[2], rng)
    opt = _Adam(params, cfg)

    history: list[dict] = []
    best_val = np.inf
    best_epoch = -1
    best_params: Params = {k: v.copy() for k, v in params.items()}
    stale = 0

    n_train = x_train.shape[0]
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb, yb = x_train[batch], y_train[batch]
            mask = None
            if cfg.dropout_rate > 0.0:
                mask = (rng.random((xb.shape[0], cfg.hidden_units)) >= cfg.dropout_rate) / (
                    1.0 - cfg.dropout_rate
                )
            loss, grads = _forward_backward(params, xb, yb, dropout_mask=mask)
            opt.step(params, grads)
            total += loss * xb.shape[0]
        train_loss = total / n_train

        h_val, _ = _forward(params, x_val)
        val_loss = bce_loss(y_val, _head_probs(params, h_val))
        history.append({"epoch": epoch, "train_loss": float(train_loss), "val_loss": float(val_loss)})

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break

    return LstmModel(config=cfg, input_dim=x.shape[2], params=best_params,
                     history=history, best_epoch=best_epoch)


def predict_proba_lstm(model: LstmModel, sequences: np.ndarray) -> np.ndarray:
    """Forward pass with dropout disabled; strictly inside (0, 1)."""
    x = _check_sequences(sequences)
    if x.shape[2] != model.input_dim:
        raise ValueError(f"expected input dim {model.input_dim}, got {x.shape[2]}")
    h, _ = _forward(model.params, x)
    return _head_probs(model.params, h)


def gradient_check(
    cfg: LstmConfig, batch_x: np.ndarray, batch_y: np.ndarray, epsilon: float = 1e-5
) -> float:
    """Max relative error between analytic BPTT gradients and central finite
    differences of the BCE loss, over every parameter. Dropout is off."""
    x = _check_sequences(batch_x)
    y = np.asarray(batch_y, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, x.shape[2], rng)
    _, grads = _forward_backward(params, x, y)

    def loss_at(p: Params) -> float:
        h, _ = _forward(p, x)
        return bce_loss(y, _head_probs(p, h))

    worst = 0.0
    for name in PARAM_NAMES:
        flat = params[name].ravel()
        grad_flat = grads[name].ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            up = loss_at(params)
            flat[idx] = orig - epsilon
            down = loss_at(params)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * epsilon)
            analytic = grad_flat[idx]
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def _gate_blocks(arr: np.ndarray, h: int) -> dict[str, list]:
    return {name: arr[..., k * h : (k + 1) * h].tolist() for k, name in enumerate(GATE_NAMES)}


def model_to_json(model: LstmModel) -> str:
    h = model.config.hidden_units
    doc = {
        "kind": "wflab.lstm",
        "config": asdict(model.config),
        "input_dim": model.input_dim,
        "weights": {
            "input_to_hidden": _gate_blocks(model.params["w_input"], h),
            "hidden_to_hidden": _gate_blocks(model.params["w_recurrent"], h),
            "bias": _gate_blocks(model.params["bias"], h),
            "head_weights": model.params["w_head"].tolist(),
            "head_bias": float(model.params["b_head"][0]),
        },
        "history": model.history,
        "best_epoch": model.best_epoch,
    }
    return json.dumps(doc, indent=2)


def model_from_json(text: str) -> LstmModel:
    doc = json.loads(text)
    if doc.get("kind") != "wflab.lstm":
        raise ValueError("not a serialized LSTM model")
    cfg = LstmConfig(**doc["config"])
    w = doc["weights"]

    def join(block: dict[str, list]) -> np.ndarray:
        return np.concatenate([np.asarray(block[name], dtype=np.float64) for name in GATE_NAMES], axis=-1)

    params: Params = {
        "w_input": join(w["input_to_hidden"]),
        "w_recurrent": join(w["hidden_to_hidden"]),
        "bias": join(w["bias"]),
        "w_head": np.asarray(w["head_weights"], dtype=np.float64),
        "b_head": np.array([w["head_bias"]]),
    }
    return LstmModel(cfg, doc["input_dim"], params, doc["history"], doc["best_epoch"])


def save_model(path: str | Path, model: LstmModel) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path: str | Path) -> LstmModel:
    return model_from_json(Path(path).read_text())
