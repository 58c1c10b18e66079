"""Degrees of freedom, coefficient summaries, and pointwise bands.

Everything here is read off the triangular factor saved with the fitted
model: with B solving L'B = I, the coefficient covariance is B'B / phi and
the effective degrees of freedom are tr(B'B M~'M~).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .basis import eval_basis, eval_deriv_basis
from .fit import CoefficientLayout, FittedModel
from .index import expand_alpha, index_covariate, jacobian, term_model_matrix

__all__ = [
    "edf",
    "coef_table",
    "confidence_band",
    "CoefRow",
    "SmoothRow",
    "InferenceReport",
    "Band",
]

# two-sided 95% normal critical value used for all bands and summaries
Z_CRIT = 1.96


def edf(b_factor: np.ndarray, m_tilde: np.ndarray, layout: CoefficientLayout):
    """Total and per-block effective degrees of freedom.

    ``b_factor`` is B with B'B the inverse of the penalized information
    matrix; ``m_tilde`` is the weighted model matrix.  Blocks come out in
    layout order: linear part, then spline and direction blocks per term.
    The direction blocks of the saved (ridge-free) factor equal their
    parameter counts exactly, because the penalty has no rows there.
    """
    cp_b = b_factor.T @ b_factor
    cp_m = m_tilde.T @ m_tilde
    per_coef = np.einsum("ij,ji->i", cp_b, cp_m)
    blocks = [float(per_coef[layout.beta_slice].sum())]
    for j in range(layout.n_terms):
        blocks.append(float(per_coef[layout.gamma_slice(j)].sum()))
        blocks.append(float(per_coef[layout.alpha_slice(j)].sum()))
    return float(per_coef.sum()), np.asarray(blocks)


@dataclass(frozen=True)
class CoefRow:
    name: str
    estimate: float
    se: float
    z: float
    p: float


@dataclass(frozen=True)
class SmoothRow:
    label: str
    q: int
    edf: float
    lam: float


@dataclass(frozen=True)
class InferenceReport:
    linear: tuple[CoefRow, ...]
    directions: tuple[CoefRow, ...]
    smooths: tuple[SmoothRow, ...]
    edf_total: float
    phi: float
    penalized_loglik: float
    converged: bool


def _rows(names, est, se) -> tuple[CoefRow, ...]:
    rows = []
    for name, e, s in zip(names, est, se):
        z = e / s if s > 0 else np.nan
        p = 2.0 * float(ndtr(-abs(z))) if np.isfinite(z) else np.nan
        rows.append(CoefRow(name, float(e), float(s), float(z), p))
    return tuple(rows)


def coef_table(model: FittedModel) -> InferenceReport:
    """Wald summaries of the linear and direction coefficients plus the
    per-smooth effective degrees of freedom."""
    cp_b = model.b_factor.T @ model.b_factor
    se_all = np.sqrt(np.diag(cp_b) / model.phi)
    layout = model.layout
    linear = _rows(
        model.linear_names,
        model.psi[layout.beta_slice],
        se_all[layout.beta_slice],
    )
    directions = []
    smooths = []
    for j, ft in enumerate(model.terms):
        gsl = layout.gamma_slice(j)
        asl = layout.alpha_slice(j)
        names = [f"{ft.label}:a{k + 1}" for k in range(ft.s)]
        directions.extend(_rows(names, model.psi[asl], se_all[asl]))
        smooths.append(
            SmoothRow(
                label=ft.label,
                q=ft.q,
                edf=float(model.edf_by_coef[gsl].sum()),
                lam=float(model.lambdas[j]),
            )
        )
    return InferenceReport(
        linear=linear,
        directions=tuple(directions),
        smooths=tuple(smooths),
        edf_total=model.edf,
        phi=model.phi,
        penalized_loglik=model.penalized_loglik,
        converged=model.converged,
    )


@dataclass(frozen=True)
class Band:
    u: np.ndarray
    fhat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)


def confidence_band(model: FittedModel, term, grid: np.ndarray | None = None) -> Band:
    """Pointwise 95% band of one centred smooth against its index value.

    The variance at the observed points combines the spline and direction
    uncertainty of the term through the columns of the saved factor:
    var(f~_i) = rowsum(([N~, T~] B_block')^2)_i / phi.  With ``grid`` the
    band is linearly interpolated onto the requested index values, which
    must lie inside the observed range.
    """
    j = model.term_index(term)
    ft = model.terms[j]
    layout = model.layout
    block = model.b_factor[:, layout.term_slice(j)]
    rows = slice(None) if ft.mask is None else ft.mask
    design = np.hstack([ft.ntil[rows], ft.ttil[rows]])
    proj = design @ block.T
    half = Z_CRIT * np.sqrt(np.einsum("ij,ij->i", proj, proj) / model.phi)
    fhat = ft.f[rows]
    order = np.argsort(ft.u_active, kind="stable")
    u = ft.u_active[order]
    fhat = fhat[order]
    half = half[order]
    if grid is None:
        return Band(u, fhat, fhat - half, fhat + half)
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < u.min() or grid.max() > u.max()):
        raise ValueError(
            f"grid must lie inside the observed index range "
            f"[{u.min():.6g}, {u.max():.6g}]"
        )
    fhat_g = np.interp(grid, u, fhat)
    half_g = np.interp(grid, u, half)
    return Band(grid, fhat_g, fhat_g - half_g, fhat_g + half_g)
