"""One-hidden-layer perceptron on EDR scores.

The network output is ``W2 @ g(W1 @ x_std + b0)`` with the logistic
activation ``g`` and a linear output layer without bias (an output bias is
available through :class:`TrainConfig`). Training minimizes the mean squared
Euclidean error by full-batch gradient descent with momentum, stopped early on
a validation part; among restarts the weights with the lowest loss on a test
part are kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .edr import array_from_json, array_to_json

__all__ = [
    "MlpModel",
    "TrainConfig",
    "TrainHistory",
    "fit_standardization",
    "forward",
    "loss",
    "gradient",
    "one_hot",
    "train",
    "predict_class",
]


@dataclass
class MlpModel:
    W1: np.ndarray
    b0: np.ndarray
    W2: np.ndarray
    input_mean: np.ndarray
    input_std: np.ndarray
    task: str = "regression"
    c: np.ndarray | None = None

    def __post_init__(self):
        if np.any(~(np.asarray(self.input_std) > 0)):
            raise ValueError("input_std must be positive")

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.W2.shape[0]

    def params(self) -> dict:
        p = {"W1": self.W1, "b0": self.b0, "W2": self.W2}
        if self.c is not None:
            p["c"] = self.c
        return p

    def with_params(self, **kw) -> "MlpModel":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = {
            "task": self.task,
            "activation": "logistic",
            "input_mean": array_to_json(self.input_mean),
            "input_std": array_to_json(self.input_std),
        }
        for k, v in self.params().items():
            d[k] = array_to_json(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        return cls(
            W1=array_from_json(d["W1"]),
            b0=array_from_json(d["b0"]),
            W2=array_from_json(d["W2"]),
            input_mean=array_from_json(d["input_mean"]),
            input_std=array_from_json(d["input_std"]),
            task=d["task"],
            c=array_from_json(d["c"]) if "c" in d else None,
        )


@dataclass(frozen=True)
class TrainConfig:
    q2: int
    restarts: int = 10
    max_epochs: int = 2000
    learning_rate: float = 0.01
    momentum: float = 0.9
    patience: int = 50
    rng_seed: int = 0
    output_bias: bool = False
    init: str = "uniform"

    def __post_init__(self):
        if self.q2 < 1:
            raise ValueError("q2 must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.init not in ("uniform", "zeros"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class TrainHistory:
    """Per-restart learning curves and the index of the kept restart."""

    train_loss: list[list[float]] = field(default_factory=list)
    val_loss: list[list[float]] = field(default_factory=list)
    best_epoch: list[int] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    diverged: list[bool] = field(default_factory=list)
    weights: list[dict] = field(default_factory=list, repr=False)
    chosen: int = -1

    def summary(self) -> dict:
        return {
            "restarts": len(self.test_loss),
            "chosen": self.chosen,
            "best_epoch": list(self.best_epoch),
            "epochs_run": [len(v) - 1 for v in self.val_loss],
            "test_loss": list(self.test_loss),
            "diverged": list(self.diverged),
        }


def fit_standardization(X) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[~(std > 0)] = 1.0
    return mean, std


def _hidden(model: MlpModel, X: np.ndarray) -> np.ndarray:
    Z = (X - model.input_mean) / model.input_std
    return expit(Z @ model.W1.T + model.b0), Z


def forward(model: MlpModel, x) -> np.ndarray:
    """Network output for one score vector ``(q,)`` or a batch ``(n, q)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input scores")
    X = np.atleast_2d(x)
    if X.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} inputs, got {X.shape[1]}")
    Hd, _ = _hidden(model, X)
    out = Hd @ model.W2.T
    if model.c is not None:
        out = out + model.c
    return out[0] if x.ndim == 1 else out


def _as_targets(model: MlpModel, y) -> np.ndarray:
    Y = np.asarray(y, dtype=float)
    if Y.ndim <= 1 and model.n_outputs == 1:
        Y = Y.reshape(-1, 1)
    Y = np.atleast_2d(Y)
    if Y.shape[1] != model.n_outputs:
        raise ValueError(f"target dimension {Y.shape[1]} does not match {model.n_outputs} outputs")
    return Y


def loss(model: MlpModel, x, y) -> float:
    """Squared error ``||psi(x) - y||^2``, averaged over rows for a batch."""
    out = np.atleast_2d(forward(model, x))
    Y = _as_targets(model, y)
    if Y.shape[0] != out.shape[0]:
        raise ValueError("inputs and targets differ in length")
    return float(np.mean(np.sum((out - Y) ** 2, axis=1)))


def gradient(model: MlpModel, X, Y) -> dict:
    """Exact gradient of the mean squared error over a batch."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = _as_targets(model, Y)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    Hd, Z = _hidden(model, X)
    out = Hd @ model.W2.T
    if model.c is not None:
        out = out + model.c
    R = 2.0 * (out - Y) / n
    delta = (R @ model.W2) * Hd * (1.0 - Hd)
    g = {"W1": delta.T @ Z, "b0": delta.sum(axis=0), "W2": R.T @ Hd}
    if model.c is not None:
        g["c"] = R.sum(axis=0)
    return g


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    return np.eye(n_classes)[labels - 1]


def _initial_model(q, q2, out, mean, std, task, cfg: TrainConfig, rng) -> MlpModel:
    if cfg.init == "zeros":
        W1, b0, W2 = np.zeros((q2, q)), np.zeros(q2), np.zeros((out, q2))
    else:
        r1, r2 = 1.0 / np.sqrt(q), 1.0 / np.sqrt(q2)
        W1 = rng.uniform(-r1, r1, size=(q2, q))
        b0 = rng.uniform(-r1, r1, size=q2)
        W2 = rng.uniform(-r2, r2, size=(out, q2))
    c = np.zeros(out) if cfg.output_bias else None
    return MlpModel(W1, b0, W2, mean, std, task, c)


def _run_restart(model, Xtr, Ytr, Xva, Yva, cfg: TrainConfig):
    vel = {k: np.zeros_like(v) for k, v in model.params().items()}
    tr_curve = [loss(model, Xtr, Ytr)]
    va_curve = [loss(model, Xva, Yva)]
    best = (va_curve[0], 0, model.params())
    for epoch in range(1, cfg.max_epochs + 1):
        g = gradient(model, Xtr, Ytr)
        new = {}
        for k, v in model.params().items():
            vel[k] = cfg.momentum * vel[k] - cfg.learning_rate * g[k]
            new[k] = v + vel[k]
        model = model.with_params(**new)
        tr, va = loss(model, Xtr, Ytr), loss(model, Xva, Yva)
        tr_curve.append(tr)
        va_curve.append(va)
        if not (np.isfinite(tr) and np.isfinite(va)):
            return None, tr_curve, va_curve, best[1]
        if va < best[0]:
            best = (va, epoch, model.params())
        elif epoch - best[1] >= cfg.patience:
            break
    return model.with_params(**best[2]), tr_curve, va_curve, best[1]


def train(scores, targets, cfg: TrainConfig, split, task: str = "regression", n_classes: int | None = None):
    """Train with early stopping and restart selection.

    Parameters
    ----------
    scores : ndarray, shape (N, q)
    targets : ndarray
        Reals (regression) or labels ``1..H`` (classification).
    cfg : TrainConfig
    split : tuple of index arrays
        ``(train, validation, test)``; must be disjoint and nonempty.

    Returns
    -------
    model : MlpModel
    history : TrainHistory
    """
    S = np.atleast_2d(np.asarray(scores, dtype=float))
    tr, va, te = (np.asarray(ix, dtype=int) for ix in split)
    if min(tr.size, va.size, te.size) == 0:
        raise ValueError("train, validation and test parts must be nonempty")
    if len(np.intersect1d(tr, va)) or len(np.intersect1d(tr, te)) or len(np.intersect1d(va, te)):
        raise ValueError("train, validation and test parts must be disjoint")
    if task == "classification":
        H = int(n_classes or np.max(targets))
        Y = one_hot(targets, H)
    else:
        Y = np.asarray(targets, dtype=float).reshape(len(S), -1)
    q, out = S.shape[1], Y.shape[1]
    mean, std = fit_standardization(S[tr])
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.restarts)
    hist = TrainHistory()
    best = (np.inf, -1, None)
    for r, ss in enumerate(seeds):
        init = _initial_model(q, cfg.q2, out, mean, std, task, cfg, np.random.default_rng(ss))
        # overflow is detected and recorded as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            model, tr_c, va_c, b_ep = _run_restart(init, S[tr], Y[tr], S[va], Y[va], cfg)
        hist.train_loss.append(tr_c)
        hist.val_loss.append(va_c)
        hist.best_epoch.append(b_ep)
        hist.diverged.append(model is None)
        if model is None:
            hist.test_loss.append(np.inf)
            hist.weights.append({})
            continue
        te_loss = loss(model, S[te], Y[te])
        hist.test_loss.append(te_loss)
        hist.weights.append(model.params())
        if te_loss < best[0]:
            best = (te_loss, r, model)
    if best[2] is None:
        raise FloatingPointError("every training restart diverged")
    hist.chosen = best[1]
    return best[2], hist


def predict_class(model: MlpModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Arg-max class labels (1-based, ties to the smallest) and raw outputs."""
    if model.task != "classification":
        raise ValueError("predict_class needs a classification model")
    out = np.atleast_2d(forward(model, x))
    labels = np.argmax(out, axis=1) + 1
    if np.asarray(x).ndim == 1:
        return labels[0], out[0]
    return labels, out
