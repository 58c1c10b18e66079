"""Single-index directions: polar-style parametrization and its gradient.

A direction on s + 1 covariates is stored through s free parameters: the
full vector is alpha = (1, at)' / sqrt(1 + |at|^2), which has unit norm and
a positive leading entry by construction, so the scale and sign that a
spline could absorb are pinned down.
"""

from __future__ import annotations

import numpy as np

__all__ = ["expand_alpha", "jacobian", "index_covariate", "term_model_matrix"]


def expand_alpha(alpha_tilde: np.ndarray) -> np.ndarray:
    """Map the s free parameters to the unit-norm direction of length s + 1."""
    at = np.atleast_1d(np.asarray(alpha_tilde, dtype=float))
    if at.ndim != 1:
        raise ValueError("alpha_tilde must be a vector")
    return np.concatenate(([1.0], at)) / np.sqrt(1.0 + at @ at)


def jacobian(alpha_tilde: np.ndarray) -> np.ndarray:
    """(s + 1) x s Jacobian d alpha / d alpha_tilde.

    Column k is d alpha / d at_k = (e_{k+1} - alpha_{k+1} alpha) / sqrt(1 + |at|^2),
    assembled here without loops:
    J = -(1, at)' alpha_{2:} / (1 + |at|^2) plus alpha_1 on the shifted diagonal.
    """
    at = np.atleast_1d(np.asarray(alpha_tilde, dtype=float))
    s = at.size
    denom = 1.0 + at @ at
    alpha = np.concatenate(([1.0], at)) / np.sqrt(denom)
    jac = -np.outer(np.concatenate(([1.0], at)), alpha[1:]) / denom
    if s:
        jac[1:, :] += alpha[0] * np.eye(s)
    return jac


def index_covariate(z: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Project covariate rows onto the direction: u_i = z_i' alpha."""
    z = np.asarray(z, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if z.ndim != 2 or z.shape[1] != alpha.size:
        raise ValueError(
            f"covariate block has {z.shape} columns incompatible with a "
            f"direction of length {alpha.size}"
        )
    return z @ alpha


def term_model_matrix(
    fprime: np.ndarray,
    z: np.ndarray,
    jac: np.ndarray,
    group_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Design block of an index term's free direction parameters.

    Row i is f'(u_i) z_i' J, then the block is column-centred over the
    active rows: the term enters the predictor recentred around its sample
    mean, and that mean moves with the direction, so the gradient must
    subtract the average row.  With a ``group_mask`` the term only acts on
    masked rows; other rows are zero and excluded from the centring.
    """
    fprime = np.asarray(fprime, dtype=float)
    z = np.asarray(z, dtype=float)
    g = (fprime[:, None] * z) @ jac
    if group_mask is None:
        return g - g.mean(axis=0)
    mask = np.asarray(group_mask, dtype=bool)
    out = np.zeros_like(g)
    if mask.any() and g.shape[1]:
        out[mask] = g[mask] - g[mask].mean(axis=0)
    return out
