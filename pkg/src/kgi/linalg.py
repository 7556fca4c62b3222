"""Covariance (Gram) systems and their spectral pseudo-inverse."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .functional import Functional, cross_cov
from .kernel import Kernel
from .quadrature import QuadratureRule

__all__ = ["GramSystem", "RankZeroError", "assemble_gram", "assemble_b", "pinv_apply",
           "lambda_min_pos", "gram_from_matrix"]


class RankZeroError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GramSystem:
    """Symmetric PSD matrix with its eigendecomposition.

    Eigenvalues are sorted in descending order.  Only the leading ``rank``
    eigenpairs (those above ``threshold``) enter the pseudo-inverse.
    """

    A: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int
    threshold: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def retained_values(self) -> np.ndarray:
        return self.eigenvalues[: self.rank]

    @property
    def retained_vectors(self) -> np.ndarray:
        return self.eigenvectors[:, : self.rank]

    @property
    def lambda_min_pos(self) -> float:
        return lambda_min_pos(self)

    @property
    def pseudo_det(self) -> float:
        return float(np.prod(self.retained_values))

    @property
    def log_pseudo_det(self) -> float:
        return float(np.sum(np.log(self.retained_values)))

    def pinv(self) -> np.ndarray:
        E = self.retained_vectors
        return (E / self.retained_values) @ E.T

    def project(self, v) -> np.ndarray:
        """Orthogonal projection onto the range of ``A``."""
        E = self.retained_vectors
        return E @ (E.T @ np.asarray(v, dtype=float))


def gram_from_matrix(A) -> GramSystem:
    """Symmetrize ``A`` and compute the thresholded eigendecomposition."""
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Gram matrix must be square, got shape {A.shape}")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if n == 0:
        return GramSystem(A, np.zeros(0), np.zeros((0, 0)), 0, 0.0)
    w, V = np.linalg.eigh(A)
    w, V = w[::-1], V[:, ::-1]
    lam_max = max(float(w[0]), 0.0)
    threshold = max(n * np.finfo(float).eps * lam_max, 1e-12 * lam_max)
    rank = int(np.sum(w > threshold)) if lam_max > 0 else 0
    for arr in (A, w, V):
        arr.setflags(write=False)
    return GramSystem(A, w, V, rank, threshold)


def assemble_gram(K: Kernel, Ls: Sequence[Functional],
                  rule: QuadratureRule = QuadratureRule()) -> GramSystem:
    """``A_ij = Ker(L_i, L_j)`` plus its spectral data."""
    return gram_from_matrix(cross_cov(K, Ls, Ls, rule))


def assemble_b(K: Kernel, Ls: Sequence[Functional], L: Functional,
               rule: QuadratureRule = QuadratureRule()) -> np.ndarray:
    """``b(L) = (Ker(L, L_1), ..., Ker(L, L_n))``."""
    if not Ls:
        return np.zeros(0)
    return cross_cov(K, [L], Ls, rule)[0]


def pinv_apply(G: GramSystem, v) -> np.ndarray:
    """Minimum-norm least-squares solution ``A^+ v``."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != G.n:
        raise ValueError(f"vector of length {v.shape[0]} does not match {G.n}x{G.n} system")
    E = G.retained_vectors
    return E @ ((E.T @ v) / (G.retained_values if v.ndim == 1 else G.retained_values[:, None]))


def lambda_min_pos(G: GramSystem) -> float:
    """Smallest retained (positive) eigenvalue."""
    if G.rank == 0:
        raise RankZeroError("Gram matrix has rank 0; no positive eigenvalue")
    return float(G.eigenvalues[G.rank - 1])
