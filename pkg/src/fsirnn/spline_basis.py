"""B-spline bases on a compact interval.

Evaluation uses the Cox-de Boor recursion over the full clamped knot vector;
derivatives are obtained by the standard difference recurrence that maps an
order-k basis onto the order-(k-1) basis. Gram and roughness-penalty matrices
are integrated exactly with Gauss-Legendre quadrature on every knot span.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "SplineBasis",
    "BasisMatrices",
    "make_basis",
    "eval_basis",
    "eval_basis_deriv",
    "eval_basis_deriv2",
    "gram_matrix",
    "penalty_matrix",
    "discrete_gram",
    "discrete_penalty",
    "basis_matrices",
    "project_curves",
    "reconstruct",
]


@dataclass(frozen=True)
class SplineBasis:
    """Clamped B-spline basis.

    Parameters
    ----------
    domain : tuple of float
        Closed interval ``(t_min, t_max)``.
    order : int
        Polynomial order (degree + 1). 4 gives cubic splines.
    interior_knots : tuple of float
        Strictly increasing knots inside the open domain.
    """

    domain: tuple[float, float]
    order: int
    interior_knots: tuple[float, ...]

    def __post_init__(self):
        lo, hi = (float(v) for v in self.domain)
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise ValueError(f"degenerate domain {self.domain!r}")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be a positive integer, got {self.order!r}")
        inner = np.asarray(self.interior_knots, dtype=float)
        if inner.size and (np.any(np.diff(inner) <= 0) or inner[0] <= lo or inner[-1] >= hi):
            raise ValueError("interior knots must be strictly increasing and inside the domain")
        object.__setattr__(self, "domain", (lo, hi))
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "interior_knots", tuple(float(v) for v in inner))

    @property
    def n_basis(self) -> int:
        return len(self.interior_knots) + self.order

    @cached_property
    def knots(self) -> np.ndarray:
        lo, hi = self.domain
        return np.concatenate(
            [np.full(self.order, lo), np.asarray(self.interior_knots, float), np.full(self.order, hi)]
        )

    @property
    def breakpoints(self) -> np.ndarray:
        lo, hi = self.domain
        return np.concatenate([[lo], self.interior_knots, [hi]])

    def to_dict(self) -> dict:
        return {
            "domain": list(self.domain),
            "order": self.order,
            "interior_knots": list(self.interior_knots),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplineBasis":
        return cls(tuple(d["domain"]), int(d["order"]), tuple(d["interior_knots"]))


@dataclass(frozen=True)
class BasisMatrices:
    """Basis values, second derivatives, Gram and penalty matrices."""

    B: np.ndarray
    B2: np.ndarray
    G: np.ndarray
    P: np.ndarray


def make_basis(domain, n_interior_knots: int, order: int = 4) -> SplineBasis:
    """Basis with ``n_interior_knots`` equally spaced interior knots."""
    if n_interior_knots < 0:
        raise ValueError("n_interior_knots must be >= 0")
    if order < 2:
        raise ValueError(f"order must be >= 2, got {order}")
    lo, hi = (float(v) for v in domain)
    if not hi > lo:
        raise ValueError(f"degenerate domain {tuple(domain)!r}")
    inner = np.linspace(lo, hi, n_interior_knots + 2)[1:-1]
    return SplineBasis((lo, hi), order, tuple(inner))


def _check_points(basis: SplineBasis, points) -> np.ndarray:
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if x.ndim != 1:
        raise ValueError("points must be one-dimensional")
    lo, hi = basis.domain
    bad = np.flatnonzero(~((x >= lo) & (x <= hi)))
    if bad.size:
        raise ValueError(f"point {x[bad[0]]!r} outside domain [{lo}, {hi}]")
    return x


def _order_values(knots: np.ndarray, order: int, x: np.ndarray) -> np.ndarray:
    """Values of every order-``order`` B-spline on ``knots`` (Cox-de Boor)."""
    t = knots
    n_spans = len(t) - 1
    vals = ((t[:-1][None, :] <= x[:, None]) & (x[:, None] < t[1:][None, :])).astype(float)
    # right endpoint belongs to the last nonempty span
    last = np.flatnonzero(t[:-1] < t[1:])[-1]
    vals[x == t[-1], :] = 0.0
    vals[x == t[-1], last] = 1.0
    for k in range(2, order + 1):
        n = n_spans - (k - 1)
        new = np.zeros((x.size, n))
        for i in range(n):
            d1 = t[i + k - 1] - t[i]
            d2 = t[i + k] - t[i + 1]
            if d1 > 0:
                new[:, i] += (x - t[i]) / d1 * vals[:, i]
            if d2 > 0:
                new[:, i] += (t[i + k] - x) / d2 * vals[:, i + 1]
        vals = new
    return vals


def _deriv_map(knots: np.ndarray, order: int) -> np.ndarray:
    """Matrix D with D B_order = B_{order-1} @ D over the full knot vector."""
    t = knots
    n_hi = len(t) - order
    n_lo = len(t) - order + 1
    D = np.zeros((n_lo, n_hi))
    for i in range(n_hi):
        d1 = t[i + order - 1] - t[i]
        d2 = t[i + order] - t[i + 1]
        if d1 > 0:
            D[i, i] += (order - 1) / d1
        if d2 > 0:
            D[i + 1, i] -= (order - 1) / d2
    return D


def eval_basis(basis: SplineBasis, points) -> np.ndarray:
    """D x K matrix of basis values; rows sum to one."""
    x = _check_points(basis, points)
    return _order_values(basis.knots, basis.order, x)


def eval_basis_deriv(basis: SplineBasis, points, deriv: int) -> np.ndarray:
    """D x K matrix of ``deriv``-th derivatives of the basis functions."""
    if deriv < 0:
        raise ValueError("deriv must be >= 0")
    if deriv == 0:
        return eval_basis(basis, points)
    if basis.order <= deriv:
        raise ValueError(f"derivative {deriv} requires order >= {deriv + 1}, got {basis.order}")
    x = _check_points(basis, points)
    vals = _order_values(basis.knots, basis.order - deriv, x)
    M = np.eye(vals.shape[1])
    for k in range(basis.order - deriv + 1, basis.order + 1):
        M = M @ _deriv_map(basis.knots, k)
    return vals @ M


def eval_basis_deriv2(basis: SplineBasis, points) -> np.ndarray:
    """Second derivatives of the basis functions at ``points``."""
    if basis.order < 3:
        raise ValueError(f"second derivative needs order >= 3, got {basis.order}")
    return eval_basis_deriv(basis, points, 2)


def _quadrature(basis: SplineBasis) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(basis.order)
    bp = basis.breakpoints
    a, b = bp[:-1], bp[1:]
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
    w = half[:, None] * weights[None, :]
    return x.ravel(), w.ravel()


def _integrated_product(basis: SplineBasis, deriv: int) -> np.ndarray:
    x, w = _quadrature(basis)
    V = eval_basis_deriv(basis, x, deriv)
    M = V.T @ (w[:, None] * V)
    return 0.5 * (M + M.T)


def gram_matrix(basis: SplineBasis) -> np.ndarray:
    """Exact L2 Gram matrix ``G_ij = int B_i B_j``."""
    return _integrated_product(basis, 0)


def penalty_matrix(basis: SplineBasis) -> np.ndarray:
    """Roughness penalty ``P_ij = int B_i'' B_j''``."""
    if basis.order < 3:
        raise ValueError(f"penalty needs order >= 3, got {basis.order}")
    return _integrated_product(basis, 2)


def discrete_gram(basis: SplineBasis, grid) -> np.ndarray:
    """Grid surrogate ``B^T B`` of the Gram matrix (no quadrature weights)."""
    B = eval_basis(basis, grid)
    return B.T @ B


def discrete_penalty(basis: SplineBasis, grid) -> np.ndarray:
    """Grid surrogate ``B2^T B2`` of the penalty matrix."""
    B2 = eval_basis_deriv2(basis, grid)
    return B2.T @ B2


def basis_matrices(basis: SplineBasis, grid) -> BasisMatrices:
    return BasisMatrices(
        B=eval_basis(basis, grid),
        B2=eval_basis_deriv2(basis, grid),
        G=gram_matrix(basis),
        P=penalty_matrix(basis),
    )


def project_curves(basis: SplineBasis, grid, curves) -> np.ndarray:
    """Least-squares spline coefficients of discretized curves.

    Parameters
    ----------
    basis : SplineBasis
    grid : array_like, shape (D,)
        Strictly increasing observation points inside the domain.
    curves : array_like, shape (N, D)

    Returns
    -------
    ndarray, shape (N, K)
    """
    grid = np.asarray(grid, dtype=float)
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    if curves.shape[1] != grid.size:
        raise ValueError(f"curves have {curves.shape[1]} columns but grid has {grid.size} points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing (duplicate grid points)")
    K = basis.n_basis
    if grid.size < K:
        raise ValueError(f"need at least K={K} grid points, got {grid.size}")
    B = eval_basis(basis, grid)
    if curves.shape[0] == 0:
        return np.zeros((0, K))
    coef, _, rank, _ = np.linalg.lstsq(B, curves.T, rcond=None)
    if rank < K:
        raise ValueError(f"rank-deficient design: rank {rank} < K={K}")
    return coef.T


def reconstruct(basis: SplineBasis, coeffs, points) -> np.ndarray:
    """Evaluate spline(s) with coefficient rows ``coeffs`` at ``points``."""
    return np.asarray(coeffs, float) @ eval_basis(basis, points).T
