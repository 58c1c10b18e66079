"""Dense linear algebra kernel: weighted cross products and one Cholesky
factorization reused for the coefficient solve, the covariance factor, and
the degrees-of-freedom traces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "CholFactor",
    "FactorizationError",
    "weighted_crossprod",
    "cholesky",
    "solve_two_triangular",
    "inverse_factor",
]


class FactorizationError(RuntimeError):
    """The system matrix is not positive definite."""


@dataclass(frozen=True)
class CholFactor:
    """Upper-triangular factor L with L'L = A."""

    upper: np.ndarray

    @property
    def dim(self) -> int:
        return self.upper.shape[0]


def weighted_crossprod(m: np.ndarray, w: np.ndarray) -> np.ndarray:
    """M' diag(w) M computed via the weighted matrix, symmetrized exactly."""
    m = np.asarray(m, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    mw = m * np.sqrt(w)[:, None]
    a = mw.T @ mw
    return 0.5 * (a + a.T)


def cholesky(a: np.ndarray) -> CholFactor:
    a = np.asarray(a, dtype=float)
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            "penalized information matrix is not positive definite; the "
            "model is likely unidentifiable at the current state"
        ) from exc
    return CholFactor(upper=np.ascontiguousarray(lower.T))


def solve_two_triangular(factor: CholFactor, rhs: np.ndarray) -> np.ndarray:
    """Solve (L'L) x = rhs by a forward then a backward triangular solve."""
    l_up = factor.upper
    b = solve_triangular(l_up, np.asarray(rhs, dtype=float), trans="T", lower=False)
    return solve_triangular(l_up, b, lower=False)


def inverse_factor(factor: CholFactor) -> np.ndarray:
    """B with L'B = I, so B'B is the inverse of the factored matrix."""
    return solve_triangular(
        factor.upper, np.eye(factor.dim), trans="T", lower=False
    )
