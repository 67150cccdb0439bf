"""Synthetic functional data with a known EDR structure.

Curves are Gaussian in a G-orthonormal frame ordered from smoothest to
roughest (eigenfunctions of the roughness penalty), so the linear conditional
expectation condition of SIR holds exactly. The response depends on the
curves only through a few inner products ``<X, a_j>``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import norm

from . import edr as edr_mod
from . import estimators as est
from . import mlp as mlp_mod
from . import pipeline as pl
from . import spline_basis as sb

__all__ = [
    "SynthSpec",
    "GroundTruth",
    "smooth_frame",
    "smooth_directions",
    "default_spec",
    "generate",
    "gamma_metric_error",
    "consistency_study",
    "write_study",
    "mlp_restart_study",
]

LINKS = ("linear", "sine", "product")


def smooth_frame(basis: sb.SplineBasis) -> tuple[np.ndarray, np.ndarray]:
    """G-orthonormal coefficient frame sorted by increasing roughness.

    Returns the frame ``F`` (columns, ``F^T G F = I``) and the roughness
    ``[f_i, f_i]`` of each column.
    """
    G, P = sb.gram_matrix(basis), sb.penalty_matrix(basis)
    rough, F = scipy.linalg.eigh(P, G)
    rough = np.maximum(rough, 0.0)
    for j in range(F.shape[1]):
        if F[np.argmax(np.abs(F[:, j])), j] < 0:
            F[:, j] = -F[:, j]
    return F, rough


def smooth_directions(basis: sb.SplineBasis, q: int, rng, smoothness: float = 1.0) -> np.ndarray:
    """Random directions whose frame weights decay with roughness."""
    F, rough = smooth_frame(basis)
    scale = 1.0 / (1.0 + smoothness * rough / max(rough[2], 1e-12)) if rough.size > 2 else np.ones(rough.size)
    Z = rng.normal(size=(rough.size, q)) * scale[:, None]
    A = F @ Z
    G = sb.gram_matrix(basis)
    # L2-orthonormalize so the directions are linearly independent
    R = np.linalg.cholesky(A.T @ G @ A)
    return A @ np.linalg.inv(R).T


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic dataset.

    ``covariance_spectrum[i]`` is the variance of the curves along the i-th
    frame function of :func:`smooth_frame`; missing entries are zero.
    """

    basis: sb.SplineBasis
    true_directions: np.ndarray
    covariance_spectrum: np.ndarray
    N: int
    link: str = "linear"
    noise_sd: float = 0.1
    seed: int = 0
    grid: np.ndarray | None = None
    task: str = "regression"
    n_classes: int = 2

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.true_directions, float))
        if A.shape[0] != self.basis.n_basis:
            A = A.T
        if A.shape[0] != self.basis.n_basis:
            raise ValueError("true_directions must have K rows")
        if np.linalg.matrix_rank(A) < A.shape[1]:
            raise ValueError("true directions must be linearly independent")
        spec = np.asarray(self.covariance_spectrum, float)
        if spec.size > self.basis.n_basis or np.any(spec <= 0) or np.any(np.diff(spec) > 0):
            raise ValueError("covariance spectrum must be positive, nonincreasing and at most K long")
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}")
        if self.link == "product" and A.shape[1] < 2:
            raise ValueError("product link needs at least two directions")
        if self.N < 2 or self.noise_sd < 0:
            raise ValueError("need N >= 2 and noise_sd >= 0")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        object.__setattr__(self, "true_directions", A)
        object.__setattr__(self, "covariance_spectrum", spec)

    @property
    def observation_grid(self) -> np.ndarray:
        if self.grid is not None:
            return np.asarray(self.grid, float)
        lo, hi = self.basis.domain
        return np.linspace(lo, hi, 100)

    def coefficient_covariance(self) -> np.ndarray:
        F, _ = smooth_frame(self.basis)
        Fk = F[:, : self.covariance_spectrum.size]
        return Fk @ np.diag(self.covariance_spectrum) @ Fk.T

    def population_covariance(self) -> np.ndarray:
        """Coefficient-space matrix of the covariance operator (``G Sigma G``)."""
        G = sb.gram_matrix(self.basis)
        return G @ self.coefficient_covariance() @ G


@dataclass
class GroundTruth:
    directions: np.ndarray
    coeffs: np.ndarray
    scores: np.ndarray
    signal: np.ndarray
    thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))


def default_spec(N: int, seed: int = 0, **kw) -> SynthSpec:
    """Template used by the consistency checks.

    Cubic splines with 16 interior knots on [0, 10], polynomially decaying
    spectrum along the smoothness frame, one smooth direction normalized to
    unit variance of its score. The roughness penalty scales with the cube
    of the inverse domain width, so the width fixes how strongly a given
    alpha smooths; on [0, 10] the rule ``0.5 * N ** (-1/3)`` is not
    bias-dominated at the sample sizes of interest.
    """
    basis = kw.pop("basis", None) or sb.make_basis((0.0, 10.0), 16, 4)
    K = basis.n_basis
    spectrum = kw.pop("covariance_spectrum", None)
    if spectrum is None:
        spectrum = 1.0 / np.arange(1, K + 1) ** 2
    directions = kw.pop("true_directions", None)
    if directions is None:
        directions = smooth_directions(basis, kw.pop("q_true", 1), np.random.default_rng(12345))
    spec = SynthSpec(basis, directions, spectrum, N, seed=seed, **kw)
    Gam = spec.population_covariance()
    A = spec.true_directions
    A = A / np.sqrt(np.einsum("ij,ik,kj->j", A, Gam, A))
    return replace(spec, true_directions=A)


def _link(name: str, S: np.ndarray) -> np.ndarray:
    if name == "linear":
        return S.sum(axis=1)
    if name == "sine":
        return np.sin(S[:, 0]) + S[:, 1:].sum(axis=1)
    return S[:, 0] * S[:, 1]


def generate(spec: SynthSpec) -> tuple[est.CurveDataset, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    F, _ = smooth_frame(spec.basis)
    k = spec.covariance_spectrum.size
    Z = rng.normal(size=(spec.N, k)) * np.sqrt(spec.covariance_spectrum)
    C = Z @ F[:, :k].T
    G = sb.gram_matrix(spec.basis)
    scores = C @ G @ spec.true_directions
    signal = _link(spec.link, scores)
    noisy = signal + spec.noise_sd * rng.normal(size=spec.N)
    grid = spec.observation_grid
    curves = sb.reconstruct(spec.basis, C, grid)
    thresholds = np.zeros(0)
    if spec.task == "classification":
        # population quantiles of the noisy index give balanced classes
        a = spec.true_directions[:, 0]
        sd = np.sqrt(a @ spec.population_covariance() @ a + spec.noise_sd**2)
        thresholds = sd * norm.ppf(np.arange(1, spec.n_classes) / spec.n_classes)
        response = 1 + np.searchsorted(thresholds, scores[:, 0] + (noisy - signal))
        data = est.CurveDataset(grid, curves, response, "classification")
    else:
        data = est.CurveDataset(grid, curves, noisy)
    return data, GroundTruth(spec.true_directions, C, scores, signal, thresholds)


def gamma_metric_error(estimate, truth, M_X) -> float:
    """Covariance-metric distance between estimated and true first directions.

    The truth is scaled to unit covariance norm, and the estimate so that its
    covariance inner product with the truth equals one, which also removes
    the sign indeterminacy.
    """
    a = estimate.A[:, 0] if isinstance(estimate, edr_mod.EdrModel) else np.asarray(estimate, float)
    t = np.asarray(truth, float)
    M = np.asarray(M_X, float)
    t = t / np.sqrt(t @ M @ t)
    cross = a @ M @ t
    if abs(cross) <= 1e-12 * np.sqrt(max(a @ M @ a, 0.0)):
        return float("inf")
    d = a / cross - t
    return float(max(d @ M @ d, 0.0))


def consistency_study(
    template: Callable[[int, int], SynthSpec],
    N_list: Sequence[int],
    alpha_rule: Callable[[int], float] | float = 0.5,
    replicates: int = 20,
    seed: int = 0,
    n_slices: int = 10,
) -> dict:
    """Error of the first estimated direction across sample sizes.

    ``alpha_rule`` is either a callable ``N -> alpha`` or a constant ``c``
    giving ``alpha = c * N ** (-1/3)``.

    Returns
    -------
    dict with ``rows`` (N, replicate, alpha, error) and ``medians`` per N.
    """
    N_list = [int(n) for n in N_list]
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be strictly ascending")
    if replicates < 3:
        raise ValueError("need at least 3 replicates")
    rule = alpha_rule if callable(alpha_rule) else (lambda n, c=float(alpha_rule): c * n ** (-1.0 / 3.0))
    rows = []
    for N in N_list:
        for r in range(replicates):
            ss = np.random.SeedSequence([seed, N, r])
            spec = template(N, int(ss.generate_state(1)[0]))
            data, truth = generate(spec)
            ops, cc, _ = est.build_operators(data, spec.basis, n_slices=n_slices)
            alpha = float(rule(N))
            model = edr_mod.fit_edr(ops, alpha, 1, cc.mean_coeffs, spec.basis)
            err = gamma_metric_error(model, truth.directions[:, 0], ops.M_X)
            rows.append({"N": N, "replicate": r, "alpha": alpha, "error": err})
    medians = {N: float(np.median([row["error"] for row in rows if row["N"] == N])) for N in N_list}
    return {"rows": rows, "medians": medians}


def write_study(study: dict, csv_path, json_path) -> None:
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "replicate", "alpha", "error"])
        for row in study["rows"]:
            w.writerow([row["N"], row["replicate"], repr(row["alpha"]), repr(row["error"])])
    summary = {"medians": {str(k): v for k, v in study["medians"].items()}}
    for key in study:
        if key not in ("rows", "medians"):
            summary[key] = study[key]
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")


def mlp_restart_study(
    spec: SynthSpec,
    method: pl.MethodSpec,
    sweep_restarts: int = 64,
    holdout: int = 5000,
    seed: int = 0,
) -> dict:
    """Compare the protocol-trained network with a dense restart sweep.

    The pipeline is fitted on ``spec.N`` observations. The sweep reruns the
    same training with ``sweep_restarts`` restarts on the same scores and
    split; every restart's weights are scored on an independent holdout
    sample, as is the pipeline's network.
    """
    data, _ = generate(spec)
    hold, _ = generate(replace(spec, N=holdout, seed=spec.seed + 1_000_003))
    model = pl.fit_pipeline(data, method, seed=seed)
    pipe_loss = float(np.mean((pl.predict(model, hold.curves) - hold.response) ** 2))

    C = sb.project_curves(model.basis, data.grid, data.curves)
    S = edr_mod.project_edr(model.edr, C)
    S_hold = edr_mod.project_edr(model.edr, sb.project_curves(model.basis, hold.grid, hold.curves))
    split = pl._mlp_split(len(data), method.get("mlp_split"), np.random.default_rng(seed))
    net = model.predictor["model"]
    cfg = mlp_mod.TrainConfig(
        q2=net.n_hidden,
        restarts=sweep_restarts,
        max_epochs=int(method.get("max_epochs")),
        learning_rate=float(method.get("learning_rate")),
        momentum=float(method.get("momentum")),
        patience=int(method.get("patience")),
        output_bias=bool(method.get("output_bias")),
        rng_seed=seed,
    )
    _, hist = mlp_mod.train(S, data.response, cfg, split)
    sweep = []
    for w in hist.weights:
        if not w:
            continue
        m = net.with_params(**w)
        sweep.append(mlp_mod.loss(m, S_hold, hold.response))
    return {
        "N": spec.N,
        "pipeline_loss": pipe_loss,
        "sweep_min": float(min(sweep)),
        "sweep_losses": sweep,
        "ratio": pipe_loss / float(min(sweep)),
    }
