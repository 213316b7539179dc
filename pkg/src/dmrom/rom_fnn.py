"""Per-coordinate feedforward ROMs with weight decay and cross-validated grids.

Each embedding coordinate gets its own single-hidden-layer network mapping
(current coordinates, current stimulus) to that coordinate one step ahead.
Hidden size and weight decay are chosen by grid search under repeated k-fold
cross-validation over the one-step training pairs; forecasts iterate the
trained networks closed-loop, feeding outputs back as inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class FnnModel:
    """One-step predictor for a single embedding coordinate.

    Output is w_out . S(w1.T z + b1) + b_out with z the concatenated
    (coordinates, stimulus) input and S the logistic function.
    """

    w1: np.ndarray        # (d+p) x H input-to-hidden weights
    b1: np.ndarray        # H hidden biases
    w_out: np.ndarray     # H hidden-to-output weights
    b_out: float
    target_index: int     # 1-based coordinate this model predicts
    hidden_size: int = field(init=False)

    def __post_init__(self):
        w1 = np.atleast_2d(np.asarray(self.w1, dtype=float))
        b1 = np.asarray(self.b1, dtype=float).ravel()
        w_out = np.asarray(self.w_out, dtype=float).ravel()
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w_out", w_out)
        object.__setattr__(self, "b_out", float(self.b_out))
        h = w1.shape[1]
        if h < 1:
            raise ValueError("hidden layer must have at least one unit")
        if b1.shape != (h,) or w_out.shape != (h,):
            raise ValueError(
                f"inconsistent parameter shapes: w1 {w1.shape}, b1 {b1.shape}, w_out {w_out.shape}"
            )
        for name, arr in (("w1", w1), ("b1", b1), ("w_out", w_out)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
        if not np.isfinite(self.b_out):
            raise ValueError("non-finite output bias")
        if self.target_index < 1:
            raise ValueError(f"target_index must be >= 1, got {self.target_index}")
        object.__setattr__(self, "hidden_size", h)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    """Grid-search and optimization settings for FNN training."""

    hidden_sizes: tuple = (2, 4, 8, 16)
    decay_values: tuple = (1e-4, 1e-3, 1e-2, 1e-1)
    folds: int = 10
    repeats: int = 10
    max_epochs: int = 2000
    learning_rate: float = 0.05
    seed: int = 0
    tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "decay_values", tuple(float(v) for v in self.decay_values))
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if any(v <= 0 for v in self.decay_values):
            raise ValueError("decay values must be positive")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.max_epochs < 1 or self.learning_rate <= 0:
            raise ValueError("max_epochs and learning_rate must be positive")


def _stack_inputs(psi, stim) -> np.ndarray:
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    if stim is None:
        return psi
    stim = np.asarray(stim, dtype=float)
    if stim.ndim == 1:
        stim = stim.reshape(psi.shape[0], -1)
    if stim.shape[1] == 0:
        return psi
    if stim.shape[0] != psi.shape[0]:
        raise ValueError(
            f"stimulus rows ({stim.shape[0]}) do not match coordinate rows ({psi.shape[0]})"
        )
    return np.hstack([psi, stim])


def _forward_batch(w1, b1, w_out, b_out, z):
    s = expit(z @ w1 + b1)
    return s @ w_out + b_out, s


def fnn_forward(model: FnnModel, psi, stim=None) -> float:
    """Network output for a single (coordinates, stimulus) input."""
    psi = np.asarray(psi, dtype=float).ravel()
    z = psi if stim is None else np.concatenate([psi, np.asarray(stim, dtype=float).ravel()])
    if z.shape[0] != model.input_dim:
        raise ValueError(f"input length {z.shape[0]} does not match model width {model.input_dim}")
    out, _ = _forward_batch(model.w1, model.b1, model.w_out, model.b_out, z[None, :])
    return float(out[0])


def fnn_loss(model: FnnModel, psi, stim, targets, decay: float = 0.0) -> float:
    """Mean squared error plus decay times the squared norm of all parameters."""
    z = _stack_inputs(psi, stim)
    y = np.asarray(targets, dtype=float).ravel()
    out, _ = _forward_batch(model.w1, model.b1, model.w_out, model.b_out, z)
    penalty = (
        np.sum(model.w1**2) + np.sum(model.b1**2) + np.sum(model.w_out**2) + model.b_out**2
    )
    return float(np.mean((out - y) ** 2) + decay * penalty)


def fnn_gradient(model: FnnModel, psi, stim, targets, decay: float = 0.0) -> dict:
    """Exact gradients of `fnn_loss` with respect to every parameter."""
    z = _stack_inputs(psi, stim)
    y = np.asarray(targets, dtype=float).ravel()
    if z.shape[0] == 0:
        raise ValueError("empty batch")
    if z.shape[0] != y.shape[0]:
        raise ValueError(f"batch size mismatch: {z.shape[0]} inputs, {y.shape[0]} targets")
    out, s = _forward_batch(model.w1, model.b1, model.w_out, model.b_out, z)
    go = 2.0 * (out - y) / y.shape[0]
    da = (go[:, None] * model.w_out[None, :]) * s * (1.0 - s)
    return {
        "w1": z.T @ da + 2.0 * decay * model.w1,
        "b1": da.sum(axis=0) + 2.0 * decay * model.b1,
        "w_out": s.T @ go + 2.0 * decay * model.w_out,
        "b_out": float(go.sum() + 2.0 * decay * model.b_out),
    }


def cv_partitions(n_pairs: int, folds: int, repeats: int, seed: int):
    """Validation-fold index sets: `repeats` seeded permutation splits of 0..n_pairs-1.

    Every repeat partitions the pair indices into `folds` disjoint arrays that
    together cover each index exactly once; the same partitions are reused for
    every grid cell so cells compete on identical folds.
    """
    if n_pairs < folds:
        raise ValueError(f"cannot split {n_pairs} pairs into {folds} folds")
    partitions = []
    for ri in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 1000 + ri)))
        perm = rng.permutation(n_pairs)
        partitions.append(np.array_split(perm, folds))
    return partitions


def _train_once(z, y, hidden, decay, rng, cfg: TrainConfig):
    """Full-batch gradient descent from a seeded uniform initialization."""
    n, dim = z.shape
    w1 = rng.uniform(-0.5, 0.5, size=(dim, hidden))
    b1 = rng.uniform(-0.5, 0.5, size=hidden)
    w_out = rng.uniform(-0.5, 0.5, size=hidden)
    b_out = rng.uniform(-0.5, 0.5)
    lr = cfg.learning_rate
    prev = np.inf
    for _ in range(cfg.max_epochs):
        out, s = _forward_batch(w1, b1, w_out, b_out, z)
        resid = out - y
        loss = float(np.mean(resid**2)) + decay * (
            np.sum(w1**2) + np.sum(b1**2) + np.sum(w_out**2) + b_out**2
        )
        if not np.isfinite(loss):
            return w1, b1, w_out, b_out, loss
        if abs(prev - loss) < cfg.tol:
            break
        prev = loss
        go = 2.0 * resid / n
        da = (go[:, None] * w_out[None, :]) * s * (1.0 - s)
        w_out = w_out - lr * (s.T @ go + 2.0 * decay * w_out)
        b_out = b_out - lr * (go.sum() + 2.0 * decay * b_out)
        w1 = w1 - lr * (z.T @ da + 2.0 * decay * w1)
        b1 = b1 - lr * (da.sum(axis=0) + 2.0 * decay * b1)
    return w1, b1, w_out, b_out, prev


def fnn_train(train_coords, stim, target_index: int, cfg: TrainConfig):
    """Grid search + repeated k-fold CV for one coordinate's one-step model.

    Parameters
    ----------
    train_coords : ndarray, shape (n, d)
        Reduced coordinates over the training window.
    stim : ndarray of shape (n, p) or None
        Stimulus inputs aligned with the coordinates.
    target_index : int
        1-based coordinate to predict one step ahead.
    cfg : TrainConfig

    Returns
    -------
    (FnnModel, list of dict)
        The model retrained on all one-step pairs with the winning
        (hidden size, decay), and the per-fold CV records
        {hidden, decay, repeat, fold, mse}.
    """
    coords = np.atleast_2d(np.asarray(train_coords, dtype=float))
    n, d = coords.shape
    if not 1 <= target_index <= d:
        raise ValueError(f"target_index must lie in 1..{d}, got {target_index}")
    if n - 1 < cfg.folds:
        raise ValueError(
            f"need at least folds+1 = {cfg.folds + 1} training rows, got {n}"
        )
    grid = [(h, lam) for h in cfg.hidden_sizes for lam in cfg.decay_values]
    if not grid:
        raise ValueError("empty hyperparameter grid")
    z_all = _stack_inputs(coords[:-1], None if stim is None else np.asarray(stim)[:-1])
    y_all = coords[1:, target_index - 1]
    n_pairs = n - 1

    partitions = cv_partitions(n_pairs, cfg.folds, cfg.repeats, cfg.seed)

    records = []
    for gi, (hidden, lam) in enumerate(grid):
        for ri in range(cfg.repeats):
            for fi, val_idx in enumerate(partitions[ri]):
                mask = np.ones(n_pairs, dtype=bool)
                mask[val_idx] = False
                rng = np.random.default_rng(
                    np.random.SeedSequence((cfg.seed, target_index, gi, ri, fi))
                )
                w1, b1, w_out, b_out, loss = _train_once(
                    z_all[mask], y_all[mask], hidden, lam, rng, cfg
                )
                if np.isfinite(loss):
                    pred, _ = _forward_batch(w1, b1, w_out, b_out, z_all[val_idx])
                    mse = float(np.mean((pred - y_all[val_idx]) ** 2))
                else:
                    mse = float("nan")
                records.append(
                    {"hidden": hidden, "decay": lam, "repeat": ri, "fold": fi, "mse": mse}
                )

    best_hidden, best_lam, _ = best_grid_cell(records)
    best_gi = grid.index((best_hidden, best_lam))
    rng = np.random.default_rng(
        np.random.SeedSequence((cfg.seed, target_index, best_gi, 999999))
    )
    w1, b1, w_out, b_out, loss = _train_once(z_all, y_all, best_hidden, best_lam, rng, cfg)
    if not np.isfinite(loss):
        raise RuntimeError(
            f"final retraining diverged for hidden={best_hidden}, decay={best_lam}"
        )
    model = FnnModel(w1=w1, b1=b1, w_out=w_out, b_out=b_out, target_index=target_index)
    return model, records


def best_grid_cell(records):
    """Winning (hidden, decay, mean CV mse) over a set of fold records.

    A cell with any non-finite fold mse counts as failed and is excluded;
    ties prefer the smaller hidden size, then the smaller decay.
    """
    cells = {}
    for r in records:
        cells.setdefault((r["hidden"], r["decay"]), []).append(r["mse"])
    scored = []
    for (hidden, decay), mses in cells.items():
        arr = np.asarray(mses, dtype=float)
        score = float(arr.mean()) if np.all(np.isfinite(arr)) else float("inf")
        scored.append((score, hidden, decay))
    score, hidden, decay = min(scored)
    if not np.isfinite(score):
        raise RuntimeError("all hyperparameter grid cells diverged")
    return hidden, decay, score


def fnn_forecast(models, init, stim_seq, h: int) -> np.ndarray:
    """Closed-loop h-step forecast of all coordinates.

    Step outputs are fed back as the next step's coordinate inputs; the test
    series itself is never consulted.
    """
    models = sorted(models, key=lambda m: m.target_index)
    d = len(models)
    if [m.target_index for m in models] != list(range(1, d + 1)):
        raise ValueError("need exactly one model per coordinate 1..d")
    init = np.asarray(init, dtype=float).ravel()
    if init.shape[0] != d:
        raise ValueError(f"init has length {init.shape[0]}, expected {d}")
    if h == 0:
        return np.zeros((0, d))
    if stim_seq is None:
        stim_seq = np.zeros((h, 0))
    stim_seq = np.asarray(stim_seq, dtype=float)
    if stim_seq.ndim == 1:
        stim_seq = stim_seq.reshape(h, -1)
    if stim_seq.shape[0] < h:
        raise ValueError(f"stimulus sequence covers {stim_seq.shape[0]} steps, horizon is {h}")
    out = np.empty((h, d))
    state = init
    for s in range(h):
        z = np.concatenate([state, stim_seq[s]])
        for j, model in enumerate(models):
            out[s, j] = fnn_forward(model, z[: d], z[d:])
        if not np.all(np.isfinite(out[s])):
            raise RuntimeError(f"forecast diverged (non-finite state) at step {s + 1}")
        state = out[s]
    return out


def save_fnn_model(model: FnnModel, path, decay: float = None) -> None:
    payload = {
        "w1": [[float(v) for v in row] for row in model.w1],
        "b1": [float(v) for v in model.b1],
        "w_out": [float(v) for v in model.w_out],
        "b_out": model.b_out,
        "target_index": model.target_index,
        "hidden_size": model.hidden_size,
        "decay": decay,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_fnn_model(path) -> FnnModel:
    with open(path) as fh:
        payload = json.load(fh)
    try:
        return FnnModel(
            w1=np.asarray(payload["w1"], dtype=float),
            b1=np.asarray(payload["b1"], dtype=float),
            w_out=np.asarray(payload["w_out"], dtype=float),
            b_out=payload["b_out"],
            target_index=payload["target_index"],
        )
    except KeyError as exc:
        raise ValueError(f"corrupt model file {path}: missing {exc}") from exc


def write_cv_report(records, path) -> None:
    with open(path, "w") as fh:
        fh.write("hidden,decay,repeat,fold,mse\n")
        for r in records:
            fh.write(
                f"{r['hidden']},{repr(float(r['decay']))},{r['repeat']},{r['fold']},"
                f"{repr(float(r['mse']))}\n"
            )
