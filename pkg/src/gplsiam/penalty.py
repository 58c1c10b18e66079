"""Difference penalties and their block embedding into the full parameter.

Each smooth carries a squared order-``dif`` difference penalty on its q + 1
spline coefficients.  Because the last coefficient is fixed to zero, the
difference matrix loses its last column but keeps all rows, so curvature of
the dropped column still constrains its neighbours.  Linear and index
coefficients are never penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TermPenalty",
    "BlockPenalty",
    "difference_penalty",
    "assemble_penalty",
    "penalty_pseudo_inverse",
]

# relative eigenvalue cutoff for pseudo-inverses of the penalty blocks
RANK_TOL = 1e-10


@dataclass(frozen=True)
class TermPenalty:
    """Reduced difference penalty of one smooth term.

    ``dmat`` is the (q + 1 - dif) x q matrix left after dropping the final
    column of the full difference operator; ``pmat = dmat' dmat``.
    """

    dif: int
    dmat: np.ndarray
    pmat: np.ndarray

    @property
    def q(self) -> int:
        return self.dmat.shape[1]


def difference_penalty(q: int, dif: int) -> TermPenalty:
    """Order-``dif`` difference penalty on q retained spline coefficients."""
    if dif < 1 or dif >= q:
        raise ValueError(f"difference order must satisfy 1 <= dif < q, got dif={dif}, q={q}")
    full = np.diff(np.eye(q + 1), n=dif, axis=0)
    dmat = full[:, :-1]  # drop the column of the zeroed coefficient, keep every row
    return TermPenalty(dif=dif, dmat=dmat, pmat=dmat.T @ dmat)


@dataclass(frozen=True)
class BlockPenalty:
    """Block-diagonal penalty over the stacked coefficient vector.

    ``blocks`` holds one (offset, TermPenalty) pair per smooth, where the
    offset points at the first spline coefficient of the term inside the
    full vector.  Everything outside these blocks is unpenalized.
    """

    dim: int
    offsets: tuple[int, ...]
    terms: tuple[TermPenalty, ...]
    lambdas: np.ndarray

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def full(self) -> np.ndarray:
        """Dense penalty matrix sum_j lambda_j P_j."""
        out = np.zeros((self.dim, self.dim))
        for off, tp, lam in zip(self.offsets, self.terms, self.lambdas):
            q = tp.q
            out[off : off + q, off : off + q] += lam * tp.pmat
        return out

    def quad(self, psi: np.ndarray) -> float:
        """Quadratic form psi' P psi without densifying."""
        total = 0.0
        for off, tp, lam in zip(self.offsets, self.terms, self.lambdas):
            g = psi[off : off + tp.q]
            total += lam * float(g @ tp.pmat @ g)
        return total

    def term_quad(self, psi: np.ndarray, j: int) -> float:
        """Unscaled quadratic form gamma_j' P~_j gamma_j of block j."""
        off, tp = self.offsets[j], self.terms[j]
        g = psi[off : off + tp.q]
        return float(g @ tp.pmat @ g)

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi, dtype=float)
        for off, tp, lam in zip(self.offsets, self.terms, self.lambdas):
            out[off : off + tp.q] = lam * (tp.pmat @ psi[off : off + tp.q])
        return out

    def with_lambdas(self, lambdas: np.ndarray) -> "BlockPenalty":
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.shape != (self.n_terms,):
            raise ValueError("lambda vector length must match the number of blocks")
        return BlockPenalty(self.dim, self.offsets, self.terms, lambdas)


def assemble_penalty(layout, terms, lambdas) -> BlockPenalty:
    """Embed per-term penalties at their coefficient offsets.

    ``layout`` must expose ``dim`` and ``gamma_slice(j)``; the slices give
    where each term's spline coefficients live.
    """
    terms = tuple(terms)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size != len(terms):
        raise ValueError("need exactly one lambda per smooth term")
    if np.any(~np.isfinite(lambdas)) or np.any(lambdas <= 0):
        raise ValueError("smoothing parameters must be finite and positive")
    offsets = []
    for j, tp in enumerate(terms):
        sl = layout.gamma_slice(j)
        if sl.stop - sl.start != tp.q:
            raise ValueError(
                f"penalty block {j} has {tp.q} columns but the layout "
                f"reserves {sl.stop - sl.start}"
            )
        offsets.append(sl.start)
    return BlockPenalty(
        dim=layout.dim, offsets=tuple(offsets), terms=terms, lambdas=lambdas
    )


def penalty_pseudo_inverse(penalty: BlockPenalty) -> np.ndarray:
    """Blockwise Moore-Penrose pseudo-inverse of the full penalty.

    Each lambda_j P~_j block is eigendecomposed and inverted on its range;
    eigenvalues below RANK_TOL times the block maximum count as zero.  Rows
    and columns of unpenalized coefficients stay zero.
    """
    out = np.zeros((penalty.dim, penalty.dim))
    for off, tp, lam in zip(penalty.offsets, penalty.terms, penalty.lambdas):
        block = lam * tp.pmat
        w, v = np.linalg.eigh(block)
        wmax = float(w.max(initial=0.0))
        if wmax <= 0.0:
            continue
        keep = w > RANK_TOL * wmax
        inv = np.zeros_like(w)
        inv[keep] = 1.0 / w[keep]
        q = tp.q
        out[off : off + q, off : off + q] = (v * inv) @ v.T
    return out
