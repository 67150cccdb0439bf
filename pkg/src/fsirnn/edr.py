"""Estimation of the effective dimension reduction (EDR) basis.

The penalized problem maximizes ``a^T M_e a / a^T (M_X + alpha P) a``. It is
solved as a symmetric-definite generalized eigenproblem: factor the
denominator ``L L^T``, diagonalize ``L^-1 M_e L^-T`` and map back with
``L^-T``. The resulting directions are orthonormal for the penalized metric.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import estimators as est
from . import spline_basis as sb

__all__ = [
    "EdrModel",
    "fit_edr",
    "fit_edr_truncated",
    "fit_pca",
    "rayleigh",
    "eigen_blocks",
    "project_edr",
    "select_alpha",
    "linear_downstream",
    "array_to_json",
    "array_from_json",
]


def array_to_json(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel(order="C").tolist()}


def array_from_json(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"], order="C")


@dataclass
class EdrModel:
    """Fitted EDR directions (columns of ``A``) in coefficient space.

    ``metric`` is the matrix the directions are orthonormal for: the penalized
    covariance for the penalized front end, the data covariance for the
    truncated one, and the Gram matrix for PCA.
    """

    A: np.ndarray
    eigenvalues: np.ndarray
    alpha: float
    mean_coeffs: np.ndarray
    gram: np.ndarray
    basis: sb.SplineBasis | None = None
    metric: np.ndarray | None = field(default=None, repr=False)
    front_end: str = "penalized"
    k_n: int | None = None

    @property
    def q(self) -> int:
        return self.A.shape[1]

    @property
    def blocks(self) -> list[list[int]]:
        """Column groups whose eigenvalues are tied (gap below 1e-10 times the largest).

        Within a block only the spanned subspace is determined; the individual
        columns are one orthonormal basis of it.
        """
        return eigen_blocks(self.eigenvalues)

    def to_dict(self) -> dict:
        return {
            "front_end": self.front_end,
            "alpha": self.alpha,
            "q": self.q,
            "k_n": self.k_n,
            "basis": None if self.basis is None else self.basis.to_dict(),
            "mean_coeffs": array_to_json(self.mean_coeffs),
            "A": array_to_json(self.A),
            "eigenvalues": array_to_json(self.eigenvalues),
            "gram": array_to_json(self.gram),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EdrModel":
        A = array_from_json(d["A"])
        if A.shape[1] != d["q"]:
            raise ValueError(f"declared q={d['q']} but A has {A.shape[1]} columns")
        return cls(
            A=A,
            eigenvalues=array_from_json(d["eigenvalues"]),
            alpha=float(d["alpha"]),
            mean_coeffs=array_from_json(d["mean_coeffs"]),
            gram=array_from_json(d["gram"]),
            basis=None if d.get("basis") is None else sb.SplineBasis.from_dict(d["basis"]),
            front_end=d.get("front_end", "penalized"),
            k_n=d.get("k_n"),
        )


def eigen_blocks(eigenvalues, rel_gap: float = 1e-10) -> list[list[int]]:
    w = np.asarray(eigenvalues, dtype=float)
    if w.size == 0:
        return []
    tol = rel_gap * abs(w[0])
    blocks = [[0]]
    for j in range(1, w.size):
        if abs(w[j - 1] - w[j]) < tol:
            blocks[-1].append(j)
        else:
            blocks.append([j])
    return blocks


def _sign_fix(A: np.ndarray) -> np.ndarray:
    A = A.copy()
    for j in range(A.shape[1]):
        col = A[:, j]
        big = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max(initial=0.0))
        if big.size and col[big[0]] < 0:
            A[:, j] = -col
    return A


def fit_edr(
    ops: est.OperatorPair,
    alpha: float,
    q: int,
    mean_coeffs=None,
    basis: sb.SplineBasis | None = None,
) -> EdrModel:
    """Leading ``q`` generalized eigenpairs of ``(M_e, M_X + alpha P)``."""
    K = ops.M_e.shape[0]
    if not 1 <= q <= K:
        raise ValueError(f"q must lie in 1..{K}, got {q}")
    if ops.n_slices and q > ops.n_slices - 1:
        warnings.warn(
            f"q={q} exceeds the rank bound {ops.n_slices - 1} of the between-slice matrix",
            stacklevel=2,
        )
    M = ops.penalized(alpha)
    try:
        M, L = est.ensure_positive_definite(M)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"cannot factorize the penalized covariance at alpha={alpha}: it must be "
            "coercive (positive definite) for the problem to be well posed"
        ) from exc
    half = scipy.linalg.solve_triangular(L, ops.M_e, lower=True)
    S = scipy.linalg.solve_triangular(L, half.T, lower=True)
    S = 0.5 * (S + S.T)
    w, V = scipy.linalg.eigh(S)
    order = np.argsort(w, kind="stable")[::-1][:q]
    A = scipy.linalg.solve_triangular(L.T, V[:, order], lower=False)
    return EdrModel(
        A=_sign_fix(A),
        eigenvalues=np.maximum(w[order], 0.0),
        alpha=float(alpha),
        mean_coeffs=np.zeros(K) if mean_coeffs is None else np.asarray(mean_coeffs, float),
        gram=ops.G,
        basis=basis,
        metric=M,
    )


def _covariance_eigen(cc: est.CenteredCoefficients, G, k_n: int):
    """Top ``k_n`` G-orthonormal eigenfunctions of the data covariance."""
    K = cc.C.shape[1]
    if not 1 <= k_n <= K:
        raise ValueError(f"k_n must lie in 1..{K}, got {k_n}")
    M_X = est.covariance_data(cc, G)
    w, V = scipy.linalg.eigh(M_X, G)
    w, V = w[::-1], V[:, ::-1]
    rank = int(np.sum(w > 1e-10 * max(w[0], 0.0))) if w[0] > 0 else 0
    if k_n > rank:
        raise ValueError(f"k_n={k_n} exceeds the numerical rank {rank} of the data covariance")
    return M_X, w[:k_n], V[:, :k_n]


def fit_edr_truncated(
    cc: est.CenteredCoefficients,
    G,
    M_e,
    k_n: int,
    q: int,
    basis: sb.SplineBasis | None = None,
) -> EdrModel:
    """SIR restricted to the leading ``k_n`` principal components.

    The covariance is inverted only on the span of its top ``k_n``
    eigenfunctions; directions are orthonormal for the data covariance.
    """
    if not 1 <= q <= k_n:
        raise ValueError(f"need 1 <= q <= k_n, got q={q}, k_n={k_n}")
    M_X, delta, V = _covariance_eigen(cc, G, k_n)
    W = 1.0 / np.sqrt(delta)
    S = W[:, None] * (V.T @ np.asarray(M_e) @ V) * W[None, :]
    S = 0.5 * (S + S.T)
    lam, U = scipy.linalg.eigh(S)
    order = np.argsort(lam, kind="stable")[::-1][:q]
    A = V @ (W[:, None] * U[:, order])
    return EdrModel(
        A=_sign_fix(A),
        eigenvalues=np.maximum(lam[order], 0.0),
        alpha=0.0,
        mean_coeffs=cc.mean_coeffs,
        gram=np.asarray(G, float),
        basis=basis,
        metric=M_X,
        front_end="truncated",
        k_n=k_n,
    )


def fit_pca(cc: est.CenteredCoefficients, G, k_n: int, basis: sb.SplineBasis | None = None) -> EdrModel:
    """Functional PCA front end: ``A`` holds the top ``k_n`` eigenfunctions."""
    _, delta, V = _covariance_eigen(cc, G, k_n)
    return EdrModel(
        A=_sign_fix(V),
        eigenvalues=delta,
        alpha=0.0,
        mean_coeffs=cc.mean_coeffs,
        gram=np.asarray(G, float),
        basis=basis,
        metric=np.asarray(G, float),
        front_end="pca",
        k_n=k_n,
    )


def rayleigh(a, ops: est.OperatorPair, alpha: float) -> float:
    a = np.asarray(a, dtype=float)
    den = a @ ops.penalized(alpha) @ a
    if not den > 0:
        raise ZeroDivisionError("penalized covariance form vanishes at this direction")
    return float(a @ ops.M_e @ a / den)


def project_edr(model: EdrModel, C) -> np.ndarray:
    """Scores ``<X^n - mean, a_j>`` for coefficient rows ``C``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != model.A.shape[0]:
        raise ValueError(f"coefficients have {C.shape[1]} columns, model expects {model.A.shape[0]}")
    return (C - model.mean_coeffs) @ (model.gram @ model.A)


Downstream = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], float]


def linear_downstream(task: str = "regression") -> Downstream:
    """Least-squares predictor with intercept, scored by RMSE or error rate."""

    def run(S_fit, y_fit, S_val, y_val):
        X = np.column_stack([np.ones(len(S_fit)), S_fit])
        Xv = np.column_stack([np.ones(len(S_val)), S_val])
        if task == "classification":
            H = int(max(y_fit.max(), y_val.max()))
            T = np.eye(H)[y_fit - 1]
            beta = np.linalg.lstsq(X, T, rcond=None)[0]
            return float(np.mean(np.argmax(Xv @ beta, axis=1) + 1 != y_val))
        beta = np.linalg.lstsq(X, y_fit, rcond=None)[0]
        return float(np.sqrt(np.mean((Xv @ beta - y_val) ** 2)))

    return run


def select_alpha(
    data: est.CurveDataset,
    basis: sb.SplineBasis,
    alpha_grid: Sequence[float],
    q: int,
    downstream: Downstream | None = None,
    split_fraction: float = 0.5,
    n_slices: int = 10,
    seed: int = 0,
) -> tuple[float, list[tuple[float, float]]]:
    """Pick ``alpha`` on a random two-part split.

    EDR directions and the downstream predictor are fitted on the first part
    and scored on the second. Ties go to the larger (smoother) ``alpha``.

    Returns
    -------
    best_alpha : float
    table : list of (alpha, validation error)
    """
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise ValueError("alpha grid is empty")
    if any(a <= 0 for a in grid):
        raise ValueError("alpha values must be positive")
    N = len(data)
    n_fit = int(round(split_fraction * N))
    if n_fit < q + 1 or N - n_fit < q + 1:
        raise ValueError(f"degenerate split: {n_fit}/{N - n_fit} observations for q={q}")
    downstream = downstream or linear_downstream(data.task)
    perm = np.random.default_rng(seed).permutation(N)
    fit_part, val_part = data.subset(perm[:n_fit]), data.subset(perm[n_fit:])
    ops, cc, _ = est.build_operators(fit_part, basis, n_slices=n_slices)
    C_val = sb.project_curves(basis, data.grid, val_part.curves)
    table = []
    for alpha in grid:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="q=")
            model = fit_edr(ops, alpha, q, cc.mean_coeffs, basis)
        S_fit = project_edr(model, cc.C + cc.mean_coeffs)
        S_val = project_edr(model, C_val)
        table.append((alpha, float(downstream(S_fit, fit_part.response, S_val, val_part.response))))
    errs = np.array([e for _, e in table])
    best_err = errs.min()
    tied = [a for a, e in table if e <= best_err + 1e-12 * abs(best_err)]
    return max(tied), table
