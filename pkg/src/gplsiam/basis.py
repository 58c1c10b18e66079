"""B-spline bases on equally spaced knots with data-driven boundaries.

Knot vectors are rebuilt from the current index values on every outer
iteration, so the inner span always hugs the data with a small relative
margin ``eps``.  Bases are column-centred and the last column is dropped,
which pins the smooth to sum to zero over the sample and removes the
coefficient made redundant by the intercept.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KnotVector",
    "BasisBlock",
    "OutOfSpanError",
    "make_knots",
    "eval_basis",
    "eval_deriv_basis",
    "center_and_drop",
]


class OutOfSpanError(ValueError):
    """An evaluation point lies on or outside the inner knot span."""


@dataclass(frozen=True)
class KnotVector:
    """Equally spaced knot sequence for splines of a fixed degree.

    Attributes
    ----------
    knots : ndarray
        Strictly increasing knot positions, length ``m``.
    degree : int
        Polynomial degree of the spline pieces (order minus one).
    """

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", t)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("knot vector must be a 1-d array with >= 2 knots")
        gaps = np.diff(t)
        if np.any(gaps <= 0):
            raise ValueError("knots must be strictly increasing")
        h = gaps.mean()
        if np.any(np.abs(gaps - h) > 1e-12 * max(abs(h), 1.0)):
            raise ValueError("knots must be equally spaced")
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if t.size <= 2 * self.order:
            raise ValueError("too few knots for the requested degree")

    @property
    def order(self) -> int:
        return self.degree + 1

    @property
    def m(self) -> int:
        """Total number of knots."""
        return self.knots.size

    @property
    def n_funcs(self) -> int:
        """Number of B-splines supported by the sequence: m - d - 1."""
        return self.m - self.degree - 1

    @property
    def spacing(self) -> float:
        return float(self.knots[1] - self.knots[0])

    @property
    def inner_low(self) -> float:
        """Left end of the inner span (0-based knot index d-1)."""
        return float(self.knots[self.order - 1])

    @property
    def inner_high(self) -> float:
        """Right end of the inner span (0-based knot index m-d)."""
        return float(self.knots[self.m - self.order])


@dataclass(frozen=True)
class BasisBlock:
    """Centred basis of one smooth term, frozen at given knots.

    ``basis`` and ``deriv_basis`` hold the centred, last-column-dropped
    design pieces; ``col_means`` / ``deriv_col_means`` keep the full set of
    column means so the same centring can be replayed on new data.
    """

    knots: KnotVector
    basis: np.ndarray
    deriv_basis: np.ndarray
    col_means: np.ndarray
    deriv_col_means: np.ndarray

    @classmethod
    def from_knots(cls, knots: KnotVector, u: np.ndarray) -> "BasisBlock":
        raw = eval_basis(knots, u)
        raw_deriv = eval_deriv_basis(knots, u)
        b, db, cm, dcm = center_and_drop(raw, raw_deriv)
        return cls(knots, b, db, cm, dcm)

    @property
    def dim(self) -> int:
        """Number of retained (centred) columns: q."""
        return self.basis.shape[1]


def make_knots(u: np.ndarray, q: int, d: int, eps: float = 0.001) -> KnotVector:
    """Equally spaced knots whose inner span covers ``u`` with margin.

    For q + 1 basis functions of order d, m = q + 1 + d knots are laid out
    so that knot d - 1 (0-based) sits at ``min(u) - range(u) * eps`` and
    knot m - d at ``max(u) + range(u) * eps``.  Every observation is then
    strictly inside the inner span.
    """
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("cannot place knots on an empty sample")
    if not np.all(np.isfinite(u)):
        raise ValueError("index values must be finite to place knots")
    if d < 1:
        raise ValueError("spline order d must be >= 1")
    if q < d:
        raise ValueError(f"need q >= d basis columns, got q={q}, d={d}")
    if eps <= 0:
        raise ValueError("boundary margin eps must be positive")
    lo, hi = float(u.min()), float(u.max())
    span = hi - lo
    if span <= 0:
        raise ValueError("index values are constant; cannot span knots")
    low = lo - span * eps
    high = hi + span * eps
    m = q + 1 + d
    # q + 2 - d gaps between the inner boundaries
    h = (high - low) / (q + 2 - d)
    knots = low + h * (np.arange(m) - (d - 1))
    return KnotVector(knots=knots, degree=d - 1)


def _check_inside(kv: KnotVector, u: np.ndarray, clamp: bool) -> np.ndarray:
    lo, hi = kv.inner_low, kv.inner_high
    bad = ~((u > lo) & (u < hi))  # also catches NaN
    if not np.any(bad):
        return u
    if not clamp:
        i = int(np.argmax(bad))
        raise OutOfSpanError(
            f"evaluation point {u[i]!r} at position {i} is outside the open "
            f"inner span ({lo}, {hi})"
        )
    n_bad = int(bad.sum())
    warnings.warn(
        f"{n_bad} evaluation point(s) outside the inner knot span were "
        f"clamped to ({lo}, {hi})",
        stacklevel=3,
    )
    u = u.copy()
    u[bad] = np.clip(u[bad], np.nextafter(lo, hi), np.nextafter(hi, lo))
    return u


def _raw_basis(kv: KnotVector, u: np.ndarray, degree: int) -> np.ndarray:
    """Cox-de Boor recursion up to ``degree`` on the full knot sequence."""
    t = kv.knots
    m = t.size
    # degree 0: indicator of [t_i, t_{i+1}); points sit strictly inside the
    # inner span, so no special casing at the right boundary is needed
    B = ((u[:, None] >= t[None, :-1]) & (u[:, None] < t[None, 1:])).astype(float)
    for k in range(1, degree + 1):
        ncur = m - k - 1
        left = (u[:, None] - t[None, :ncur]) / (t[k : k + ncur] - t[:ncur])
        right = (t[k + 1 : k + 1 + ncur] - u[:, None]) / (
            t[k + 1 : k + 1 + ncur] - t[1 : 1 + ncur]
        )
        B = left * B[:, :ncur] + right * B[:, 1 : ncur + 1]
    return B


def eval_basis(kv: KnotVector, u: np.ndarray, clamp: bool = False) -> np.ndarray:
    """Evaluate all q + 1 B-splines at ``u``.

    Rows sum to one for points inside the inner span.  With ``clamp`` set,
    outside points are pulled to the nearest interior value (used only for
    prediction on new data) and a warning reports how many were moved.
    """
    u = np.asarray(u, dtype=float)
    u = _check_inside(kv, u, clamp)
    return _raw_basis(kv, u, kv.degree)


def eval_deriv_basis(kv: KnotVector, u: np.ndarray, clamp: bool = False) -> np.ndarray:
    """First derivatives of the same q + 1 B-splines at ``u``.

    Built from the degree d - 2 basis: the derivative of spline i of degree
    k is k * (N_i / (t_{i+k} - t_i) - N_{i+1} / (t_{i+k+1} - t_{i+1})) with
    both N of degree k - 1, so the derivative curve keeps the original
    coefficients.
    """
    u = np.asarray(u, dtype=float)
    u = _check_inside(kv, u, clamp)
    k = kv.degree
    t = kv.knots
    nfun = kv.n_funcs
    if k == 0:
        return np.zeros((u.size, nfun))
    lower = _raw_basis(kv, u, k - 1)  # nfun + 1 columns
    denom_a = t[k : k + nfun] - t[:nfun]
    denom_b = t[k + 1 : k + 1 + nfun] - t[1 : 1 + nfun]
    return k * (lower[:, :nfun] / denom_a - lower[:, 1 : nfun + 1] / denom_b)


def center_and_drop(
    raw_basis: np.ndarray, raw_deriv: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Column-centre both matrices and drop their shared last column.

    Centring uses the sample column means of ``raw_basis`` and
    ``raw_deriv`` respectively; the means of all q + 1 columns are returned
    so prediction can reuse them.  Dropping the final column fixes its
    coefficient to zero.
    """
    raw_basis = np.asarray(raw_basis, dtype=float)
    raw_deriv = np.asarray(raw_deriv, dtype=float)
    if raw_basis.shape != raw_deriv.shape:
        raise ValueError("basis and derivative matrices must share a shape")
    col_means = raw_basis.mean(axis=0)
    deriv_col_means = raw_deriv.mean(axis=0)
    basis = raw_basis[:, :-1] - col_means[:-1]
    deriv = raw_deriv[:, :-1] - deriv_col_means[:-1]
    return basis, deriv, col_means, deriv_col_means
