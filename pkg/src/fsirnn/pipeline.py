"""End-to-end models: spline projection, EDR front end, predictor.

Supported methods (case-insensitive):

=========  ==============  =========  ====================
name       front end       predictor  required parameters
=========  ==============  =========  ====================
SIR-NNr    penalized SIR   MLP        alpha, q, q2
SIR-NNp    truncated SIR   MLP        k_n, q, q2
SIR-NNk    truncated SIR   MLP        k_n, q, q2
SIR-L      penalized SIR   linear     alpha, q
SIR-K      penalized SIR   kernel     alpha, q, h
PCA-NN     functional PCA  MLP        k_n, q2
=========  ==============  =========  ====================
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import edr as edr_mod
from . import estimators as est
from . import mlp as mlp_mod
from . import spline_basis as sb
from .edr import array_from_json, array_to_json

__all__ = [
    "METHODS",
    "MethodSpec",
    "PipelineModel",
    "BenchmarkReport",
    "fit_pipeline",
    "predict",
    "sep",
    "error_rate",
    "kernel_predict",
    "make_splits",
    "benchmark",
    "save_model",
    "load_model",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1

METHODS = {
    "sir-nnr": ("penalized", "mlp", ("alpha", "q", "q2")),
    "sir-nnp": ("truncated", "mlp", ("k_n", "q", "q2")),
    "sir-nnk": ("truncated", "mlp", ("k_n", "q", "q2")),
    "sir-l": ("penalized", "linear", ("alpha", "q")),
    "sir-k": ("penalized", "kernel", ("alpha", "q", "h")),
    "pca-nn": ("pca", "mlp", ("k_n", "q2")),
}

# optional parameters and their defaults; None means "derived from the data"
OPTIONAL = {
    "n_knots": None,
    "order": 4,
    "slices": 10,
    "restarts": 10,
    "max_epochs": 2000,
    "learning_rate": 0.01,
    "momentum": 0.9,
    "patience": 50,
    "output_bias": False,
    "mlp_split": (0.6, 0.2, 0.2),
    "metric": "exact",
}


@dataclass(frozen=True)
class MethodSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        key = self.name.lower()
        if key not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; choose from {sorted(METHODS)}")
        required = METHODS[key][2]
        missing = [p for p in required if p not in self.params]
        if missing:
            raise ValueError(f"method {self.name} needs parameter(s) {', '.join(missing)}")
        unknown = set(self.params) - set(required) - set(OPTIONAL)
        if unknown:
            raise ValueError(f"method {self.name} does not accept {', '.join(sorted(unknown))}")
        object.__setattr__(self, "name", key)

    @property
    def front_end(self) -> str:
        return METHODS[self.name][0]

    @property
    def predictor(self) -> str:
        return METHODS[self.name][1]

    def get(self, key):
        return self.params.get(key, OPTIONAL.get(key))

    def to_dict(self) -> dict:
        return {"name": self.name, "params": {k: _plain(v) for k, v in sorted(self.params.items())}}


def _plain(v):
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass
class PipelineModel:
    basis: sb.SplineBasis
    grid: np.ndarray
    edr: edr_mod.EdrModel
    spec: MethodSpec
    task: str
    predictor: dict
    n_classes: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def n_inputs(self) -> int:
        return self.edr.q

    def to_dict(self) -> dict:
        pred = dict(self.predictor)
        if pred["kind"] == "mlp":
            pred["model"] = pred["model"].to_dict()
        else:
            pred = {k: array_to_json(v) if isinstance(v, np.ndarray) else v for k, v in pred.items()}
        return {
            "version": FORMAT_VERSION,
            "task": self.task,
            "n_classes": self.n_classes,
            "method": self.spec.to_dict(),
            "grid": array_to_json(self.grid),
            "basis": self.basis.to_dict(),
            "edr": self.edr.to_dict(),
            "predictor": pred,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineModel":
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        pred = dict(d["predictor"])
        if pred["kind"] == "mlp":
            pred["model"] = mlp_mod.MlpModel.from_dict(pred["model"])
        else:
            pred = {k: array_from_json(v) if isinstance(v, dict) else v for k, v in pred.items()}
        params = dict(d["method"]["params"])
        if "mlp_split" in params:
            params["mlp_split"] = tuple(params["mlp_split"])
        return cls(
            basis=sb.SplineBasis.from_dict(d["basis"]),
            grid=array_from_json(d["grid"]),
            edr=edr_mod.EdrModel.from_dict(d["edr"]),
            spec=MethodSpec(d["method"]["name"], params),
            task=d["task"],
            predictor=pred,
            n_classes=int(d["n_classes"]),
            metadata=d.get("metadata", {}),
        )


def save_model(model: PipelineModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> PipelineModel:
    with open(path, encoding="utf-8") as fh:
        return PipelineModel.from_dict(json.load(fh))


def default_basis(grid, n_knots=None, order=4) -> sb.SplineBasis:
    grid = np.asarray(grid, dtype=float)
    if n_knots is None:
        n_knots = max(0, min(40, grid.size - order))
    return sb.make_basis((grid[0], grid[-1]), int(n_knots), int(order))


def sep(predictions, truth) -> float:
    """Standard error of prediction, taken as the root mean squared error."""
    p, t = np.asarray(predictions, float).ravel(), np.asarray(truth, float).ravel()
    if p.size == 0 or p.size != t.size:
        raise ValueError("predictions and truth must have equal nonzero length")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def error_rate(labels, truth) -> float:
    p, t = np.asarray(labels).ravel(), np.asarray(truth).ravel()
    if p.size == 0 or p.size != t.size:
        raise ValueError("labels and truth must have equal nonzero length")
    return float(np.mean(p != t))


def kernel_predict(scores_train, targets_train, x, h: float, return_flag: bool = False):
    """Nadaraya-Watson estimate with a Gaussian kernel on EDR scores.

    ``targets_train`` is ``(N,)`` for regression or an ``(N, H)`` indicator
    matrix for classification. If every weight underflows to zero the global
    target mean is returned and flagged.
    """
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    S = np.atleast_2d(np.asarray(scores_train, float))
    T = np.asarray(targets_train, float)
    X = np.atleast_2d(np.asarray(x, float))
    d2 = ((X[:, None, :] - S[None, :, :]) ** 2).sum(axis=2)
    W = np.exp(-d2 / (2.0 * h * h))
    tot = W.sum(axis=1)
    flagged = tot == 0
    tot[flagged] = 1.0
    out = (W @ T.reshape(len(S), -1)) / tot[:, None]
    if flagged.any():
        out[flagged] = T.reshape(len(S), -1).mean(axis=0)
    if T.ndim == 1:
        out = out[:, 0]
    if np.asarray(x).ndim == 1:
        out, flagged = out[0], flagged[0]
    return (out, flagged) if return_flag else out


def _mlp_split(n, fractions, rng):
    f = np.asarray(fractions, float)
    if f.size != 3 or np.any(f <= 0):
        raise ValueError("mlp_split needs three positive fractions")
    f = f / f.sum()
    perm = rng.permutation(n)
    a = max(1, int(round(f[0] * n)))
    b = max(a + 1, a + int(round(f[1] * n)))
    if b >= n:
        raise ValueError(f"too few observations ({n}) for a train/validation/test split")
    return perm[:a], perm[a:b], perm[b:]


def _front_end(spec: MethodSpec, ops, cc, basis, n_classes: int = 0):
    q = int(spec.get("q")) if "q" in spec.params else 0
    if n_classes and q > n_classes - 1:
        # the between-class matrix has rank at most H - 1
        warnings.warn(f"q={q} capped at {n_classes - 1} for {n_classes} classes", stacklevel=3)
        q = n_classes - 1
    if spec.front_end == "penalized":
        return edr_mod.fit_edr(ops, float(spec.get("alpha")), q, cc.mean_coeffs, basis)
    if spec.front_end == "truncated":
        return edr_mod.fit_edr_truncated(cc, ops.G, ops.M_e, int(spec.get("k_n")), q, basis)
    return edr_mod.fit_pca(cc, ops.G, int(spec.get("k_n")), basis)


def fit_pipeline(data: est.CurveDataset, spec: MethodSpec, seed: int = 0) -> PipelineModel:
    """Fit basis projection, EDR front end and predictor on ``data``."""
    try:
        basis = default_basis(data.grid, spec.get("n_knots"), spec.get("order"))
        ops, cc, _ = est.build_operators(data, basis, n_slices=int(spec.get("slices")), metric=spec.get("metric"))
        edr = _front_end(spec, ops, cc, basis, data.n_classes)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise type(exc)(f"{spec.name}: {exc}") from exc
    S = edr_mod.project_edr(edr, cc.C + cc.mean_coeffs)
    H = data.n_classes
    meta = {"seed": int(seed), "n_train": len(data), "eigenvalues": edr.eigenvalues.tolist()}
    if spec.predictor == "mlp":
        rng = np.random.default_rng(seed)
        split = _mlp_split(len(data), spec.get("mlp_split"), rng)
        cfg = mlp_mod.TrainConfig(
            q2=int(spec.get("q2")),
            restarts=int(spec.get("restarts")),
            max_epochs=int(spec.get("max_epochs")),
            learning_rate=float(spec.get("learning_rate")),
            momentum=float(spec.get("momentum")),
            patience=int(spec.get("patience")),
            output_bias=bool(spec.get("output_bias")),
            rng_seed=int(seed),
        )
        net, hist = mlp_mod.train(S, data.response, cfg, split, task=data.task, n_classes=H or None)
        predictor = {"kind": "mlp", "model": net}
        meta["training"] = hist.summary()
        meta["mlp_split_sizes"] = [len(s) for s in split]
        meta["internal_test_loss"] = hist.test_loss[hist.chosen]
    elif spec.predictor == "linear":
        X = np.column_stack([np.ones(len(S)), S])
        T = mlp_mod.one_hot(data.response, H) if data.task == "classification" else data.response
        beta = np.linalg.lstsq(X, T, rcond=None)[0]
        predictor = {"kind": "linear", "coef": np.atleast_2d(beta.T).reshape(-1, X.shape[1])}
    else:
        T = mlp_mod.one_hot(data.response, H) if data.task == "classification" else data.response
        predictor = {"kind": "kernel", "scores": S, "targets": np.asarray(T, float), "h": float(spec.get("h"))}
    model = PipelineModel(basis, data.grid.copy(), edr, spec, data.task, predictor, H, meta)
    train_pred = predict(model, data.curves)
    meta["train_predictions"] = (train_pred[0] if data.task == "classification" else train_pred).tolist()
    return model


def _predict_scores(model: PipelineModel, S: np.ndarray):
    pred = model.predictor
    if pred["kind"] == "mlp":
        out = np.atleast_2d(mlp_mod.forward(pred["model"], S)) if len(S) else np.zeros((0, pred["model"].n_outputs))
    elif pred["kind"] == "linear":
        out = np.column_stack([np.ones(len(S)), S]) @ pred["coef"].T
    else:
        out = np.atleast_2d(kernel_predict(pred["scores"], pred["targets"], S, pred["h"])).reshape(len(S), -1)
    if model.task == "classification":
        return np.argmax(out, axis=1) + 1, out
    return out[:, 0]


def predict(model: PipelineModel, curves, grid=None):
    """Responses (regression) or ``(labels, output scores)`` (classification)."""
    if grid is not None:
        grid = np.asarray(grid, float)
        if grid.shape != model.grid.shape or not np.array_equal(grid, model.grid):
            raise ValueError(
                f"grid mismatch: model grid has {model.grid.size} points "
                f"[{model.grid[0]}..{model.grid[-1]}], got {grid.size} points"
                + (f" [{grid[0]}..{grid[-1]}]" if grid.size else "")
            )
    curves = np.asarray(curves, float)
    if curves.ndim == 1:
        curves = curves[None, :] if curves.size else curves.reshape(0, model.grid.size)
    if curves.shape[1] != model.grid.size:
        raise ValueError(f"curves have {curves.shape[1]} points, model grid has {model.grid.size}")
    C = sb.project_curves(model.basis, model.grid, curves)
    S = edr_mod.project_edr(model.edr, C) if len(C) else np.zeros((0, model.edr.q))
    return _predict_scores(model, S)


@dataclass
class BenchmarkReport:
    method: str
    metric: str
    values: list
    seconds: list
    internal_test_loss: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0

    @property
    def min(self) -> float:
        return float(np.min(self.values))

    @property
    def max(self) -> float:
        return float(np.max(self.values))

    def summary(self) -> dict:
        return {
            "method": self.method,
            "metric": self.metric,
            "n_splits": len(self.values),
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
            "mean_seconds": float(np.mean(self.seconds)),
        }


def make_splits(data: est.CurveDataset, n_splits: int, learn_size: int, test_size: int, seed: int = 0):
    """Seeded learning/test index pairs; stratified per class for classification."""
    N = len(data)
    if learn_size < 1 or test_size < 1 or learn_size + test_size > N:
        raise ValueError(f"split sizes {learn_size}+{test_size} do not fit {N} observations")
    rng = np.random.default_rng(seed)
    splits = []
    if data.task == "classification":
        H = data.n_classes
        if learn_size % H or test_size % H:
            raise ValueError(f"stratified split sizes must be multiples of {H} classes")
        per_l, per_t = learn_size // H, test_size // H
        members = [np.flatnonzero(data.response == h) for h in range(1, H + 1)]
        short = [h + 1 for h, m in enumerate(members) if m.size < per_l + per_t]
        if short:
            raise ValueError(f"classes {short} have fewer than {per_l + per_t} observations")
        for _ in range(n_splits):
            learn, test = [], []
            for m in members:
                p = rng.permutation(m)
                learn.append(p[:per_l])
                test.append(p[per_l : per_l + per_t])
            splits.append((np.sort(np.concatenate(learn)), np.sort(np.concatenate(test))))
    else:
        for _ in range(n_splits):
            p = rng.permutation(N)
            splits.append((np.sort(p[:learn_size]), np.sort(p[learn_size : learn_size + test_size])))
    return splits


def benchmark(
    data: est.CurveDataset,
    methods: list[MethodSpec],
    n_splits: int,
    learn_size: int,
    test_size: int,
    seed: int = 0,
    progress=None,
) -> dict[str, BenchmarkReport]:
    """Paired comparison of ``methods`` over shared random splits.

    Keys of the result are ``"<index>:<method name>"`` so identical specs stay
    distinguishable.
    """
    splits = make_splits(data, n_splits, learn_size, test_size, seed)
    metric = "error_rate" if data.task == "classification" else "sep"
    reports = {f"{i}:{m.name}": BenchmarkReport(m.name, metric, [], []) for i, m in enumerate(methods)}
    fit_seeds = np.random.SeedSequence(seed).generate_state(n_splits)
    for s, (learn, test) in enumerate(splits):
        learn_data, test_data = data.subset(learn), data.subset(test)
        for i, m in enumerate(methods):
            rep = reports[f"{i}:{m.name}"]
            t0 = time.perf_counter()
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message="q=")
                model = fit_pipeline(learn_data, m, seed=int(fit_seeds[s]))
            out = predict(model, test_data.curves)
            if data.task == "classification":
                value = error_rate(out[0], test_data.response)
            else:
                value = sep(out, test_data.response)
            rep.seconds.append(time.perf_counter() - t0)
            rep.values.append(value)
            rep.internal_test_loss.append(model.metadata.get("internal_test_loss"))
            if progress:
                progress(s, m.name, value)
    return reports


def write_benchmark(reports: dict[str, BenchmarkReport], csv_path, json_path, include_timing=True) -> None:
    """Per-split CSV (split_id, method, metric, seconds) and a JSON summary."""
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("split_id,method,metric,seconds\n")
        n = max(len(r.values) for r in reports.values())
        for s in range(n):
            for r in reports.values():
                secs = f"{r.seconds[s]:.6f}" if include_timing else ""
                fh.write(f"{s},{r.method},{r.values[s]!r},{secs}\n")
    summary = {}
    for key, r in reports.items():
        d = r.summary()
        if not include_timing:
            d.pop("mean_seconds")
        d["internal_test_loss"] = r.internal_test_loss
        summary[key] = d
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
