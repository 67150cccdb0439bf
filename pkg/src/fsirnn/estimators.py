"""Empirical SIR operators in spline-coefficient space.

All quadratic forms are taken in the L2 geometry of the spline space: a curve
with coefficient row ``c`` and a direction with coefficients ``a`` have inner
product ``c @ G @ a``. The grid surrogates ``B^T B`` / ``B2^T B2`` can be passed
instead of ``G`` / ``P`` to reproduce the purely discrete formulas.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import spline_basis as sb

__all__ = [
    "CurveDataset",
    "CenteredCoefficients",
    "SliceAssignment",
    "OperatorPair",
    "NumericalWarning",
    "center",
    "slice_regression",
    "slice_classes",
    "conditional_means",
    "between_matrix",
    "between_matrix_classif",
    "covariance_data",
    "covariance_penalized",
    "ensure_positive_definite",
    "build_operators",
]


class NumericalWarning(UserWarning):
    """Emitted when a matrix needed jitter to become positive definite."""


@dataclass
class CurveDataset:
    """Curves observed on a shared grid together with their response.

    ``response`` holds reals for regression and integer labels ``1..H`` for
    classification.
    """

    grid: np.ndarray
    curves: np.ndarray
    response: np.ndarray
    task: str = "regression"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.curves = np.atleast_2d(np.asarray(self.curves, dtype=float))
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "classification":
            labels = np.asarray(self.response)
            if labels.size and not np.all(labels == np.round(labels)):
                raise ValueError("class labels must be integers")
            self.response = labels.astype(int)
        else:
            self.response = np.asarray(self.response, dtype=float)
        n, d = self.curves.shape
        if d != self.grid.size:
            raise ValueError(f"curves have {d} columns, grid has {self.grid.size} points")
        if self.response.shape != (n,):
            raise ValueError(f"response length {self.response.shape} does not match {n} curves")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.task == "classification" and n:
            H = self.n_classes
            counts = np.bincount(self.response, minlength=H + 1)[1:]
            if self.response.min() < 1 or np.any(counts == 0):
                raise ValueError(f"class labels must cover 1..{H} with every class nonempty")

    def __len__(self):
        return self.curves.shape[0]

    @property
    def n_classes(self) -> int:
        return int(self.response.max()) if self.task == "classification" else 0

    def subset(self, idx) -> "CurveDataset":
        idx = np.asarray(idx)
        return CurveDataset(self.grid, self.curves[idx], self.response[idx], self.task)


@dataclass(frozen=True)
class CenteredCoefficients:
    C: np.ndarray
    mean_coeffs: np.ndarray


@dataclass(frozen=True)
class SliceAssignment:
    """Slice index (1-based) per observation."""

    slice_of: np.ndarray
    counts: np.ndarray
    boundaries: np.ndarray | None = None

    @property
    def n_slices(self) -> int:
        return self.counts.size


@dataclass(frozen=True)
class OperatorPair:
    M_e: np.ndarray
    M_X: np.ndarray
    P: np.ndarray
    G: np.ndarray
    n_slices: int = 0

    def penalized(self, alpha: float) -> np.ndarray:
        if alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {alpha}")
        return self.M_X + alpha * self.P


def center(C) -> CenteredCoefficients:
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[0] < 2:
        raise ValueError("need at least two observations to center")
    mean = C.mean(axis=0)
    return CenteredCoefficients(C - mean, mean)


def slice_regression(Y, n_slices: int = 10) -> SliceAssignment:
    """Equal-frequency slices of a real response.

    Observations are ordered by a stable sort of ``Y`` and cut into
    ``n_slices`` groups of near-equal size. Cuts never split tied values, so
    heavy ties can make the request infeasible.
    """
    Y = np.asarray(Y, dtype=float)
    N = Y.size
    if n_slices < 2:
        raise ValueError("n_slices must be >= 2")
    if N < n_slices:
        raise ValueError(f"cannot form {n_slices} slices from {N} observations")
    order = np.argsort(Y, kind="stable")
    ys = Y[order]
    # admissible cut positions: between two different sorted values
    admissible = np.flatnonzero(ys[1:] > ys[:-1]) + 1
    if admissible.size < n_slices - 1:
        raise ValueError(
            f"cannot form {n_slices} nonempty slices: only {admissible.size + 1} distinct values"
        )
    cuts = []
    first = 0
    for h in range(1, n_slices):
        # leave enough admissible cuts for the slices still to come
        last = admissible.size - (n_slices - 1 - h)
        cand = admissible[first:last]
        k = int(np.argmin(np.abs(cand - h * N / n_slices)))
        cuts.append(int(cand[k]))
        first += k + 1
    slice_sorted = np.searchsorted(np.asarray(cuts), np.arange(N), side="right") + 1
    slice_of = np.empty(N, dtype=int)
    slice_of[order] = slice_sorted
    counts = np.bincount(slice_of, minlength=n_slices + 1)[1:]
    bounds = np.array([0.5 * (ys[c - 1] + ys[c]) for c in cuts])
    return SliceAssignment(slice_of, counts, bounds)


def slice_classes(labels, n_classes: int | None = None) -> SliceAssignment:
    labels = np.asarray(labels, dtype=int)
    H = int(labels.max()) if n_classes is None else n_classes
    counts = np.bincount(labels, minlength=H + 1)[1:]
    if labels.min() < 1 or counts.size != H:
        raise ValueError(f"labels must lie in 1..{H}")
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0]) + 1
        raise ValueError(f"class {empty} is empty")
    return SliceAssignment(labels, counts)


def conditional_means(cc: CenteredCoefficients, slices: SliceAssignment) -> np.ndarray:
    """H x K matrix of within-slice means of the centered coefficients."""
    C = cc.C
    if slices.slice_of.size != C.shape[0]:
        raise ValueError("slice assignment length does not match the data")
    H = slices.n_slices
    if np.any(slices.counts == 0):
        raise ValueError("empty slice")
    out = np.zeros((H, C.shape[1]))
    np.add.at(out, slices.slice_of - 1, C)
    return out / slices.counts[:, None]


def between_matrix(cc: CenteredCoefficients, slices: SliceAssignment, G) -> np.ndarray:
    """Between-slice covariance with ``a^T M_e a = sum_h (N_h/N) <mu_h, a>^2``."""
    G = np.asarray(G, dtype=float)
    if G.shape != (cc.C.shape[1],) * 2:
        raise ValueError(f"Gram shape {G.shape} does not match K={cc.C.shape[1]}")
    mu = conditional_means(cc, slices)
    w = slices.counts / slices.counts.sum()
    Z = mu @ G
    M = Z.T @ (w[:, None] * Z)
    return 0.5 * (M + M.T)


def between_matrix_classif(cc: CenteredCoefficients, labels, G, n_classes=None) -> np.ndarray:
    return between_matrix(cc, slice_classes(labels, n_classes), G)


def covariance_data(cc: CenteredCoefficients, G) -> np.ndarray:
    """Data term ``G (C^T C / N) G`` of the penalized covariance."""
    G = np.asarray(G, dtype=float)
    Z = cc.C @ G
    M = Z.T @ Z / cc.C.shape[0]
    return 0.5 * (M + M.T)


def ensure_positive_definite(M, what="M_X,alpha") -> tuple[np.ndarray, np.ndarray]:
    """Return ``(M', L)`` with ``M' = L L^T``.

    One retry with jitter ``1e-10 * trace / K`` is allowed; the jitter is
    reported with a :class:`NumericalWarning`.
    """
    M = np.asarray(M, dtype=float)
    try:
        return M, scipy.linalg.cholesky(M, lower=True)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * np.trace(M) / M.shape[0]
    M2 = M + jitter * np.eye(M.shape[0])
    try:
        if not jitter > 0:
            raise np.linalg.LinAlgError("nonpositive trace")
        L = scipy.linalg.cholesky(M2, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"{what} is not positive definite even after jitter {jitter:.3g}; "
            "the penalized covariance must be coercive (increase alpha)"
        ) from exc
    warnings.warn(f"{what} needed jitter {jitter:.3g} to factorize", NumericalWarning, stacklevel=2)
    return M2, L


def covariance_penalized(cc: CenteredCoefficients, G, P, alpha: float, check: bool = True) -> np.ndarray:
    """Penalized covariance ``G (C^T C / N) G + alpha P``."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    M = covariance_data(cc, G) + alpha * np.asarray(P, dtype=float)
    if check:
        M, _ = ensure_positive_definite(M)
    return M


def build_operators(
    data: CurveDataset,
    basis: sb.SplineBasis,
    n_slices: int = 10,
    metric: str = "exact",
    coeffs=None,
) -> tuple[OperatorPair, CenteredCoefficients, SliceAssignment]:
    """Project, center and assemble the operator pair for a dataset.

    ``metric="grid"`` swaps G and P for the grid surrogates ``B^T B`` and
    ``B2^T B2``.
    """
    C = sb.project_curves(basis, data.grid, data.curves) if coeffs is None else np.asarray(coeffs)
    cc = center(C)
    # spread at rounding level means every curve is the same function
    if np.max(np.abs(cc.C)) <= 1e-12 * max(np.max(np.abs(C)), np.finfo(float).tiny):
        raise ValueError("all curves are numerically identical; the data covariance is zero")
    if metric == "exact":
        G, P = sb.gram_matrix(basis), sb.penalty_matrix(basis)
    elif metric == "grid":
        G, P = sb.discrete_gram(basis, data.grid), sb.discrete_penalty(basis, data.grid)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    if data.task == "classification":
        slices = slice_classes(data.response, data.n_classes)
    else:
        slices = slice_regression(data.response, n_slices)
    M_e = between_matrix(cc, slices, G)
    M_X = covariance_data(cc, G)
    return OperatorPair(M_e, M_X, P, G, slices.n_slices), cc, slices
