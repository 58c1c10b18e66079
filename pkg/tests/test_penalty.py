"""Difference penalties and their block assembly."""

import numpy as np
import pytest
from scipy.special import comb

from gplsiam.fit import CoefficientLayout
from gplsiam.penalty import (
    BlockPenalty,
    assemble_penalty,
    difference_penalty,
    penalty_pseudo_inverse,
)


def stencil_matrix(q, dif):
    """Row i of the dif-order difference operator on q + 1 coefficients,
    built from the binomial stencil instead of repeated np.diff."""
    rows = q + 1 - dif
    out = np.zeros((rows, q + 1))
    for i in range(rows):
        for j in range(dif + 1):
            out[i, i + j] = (-1.0) ** (dif - j) * comb(dif, j, exact=True)
    return out


@pytest.mark.parametrize("q,dif", [(4, 1), (6, 2), (9, 2), (9, 3), (24, 2)])
def test_difference_matrix_stencil(q, dif):
    tp = difference_penalty(q, dif)
    full = stencil_matrix(q, dif)
    assert tp.dmat.shape == (q + 1 - dif, q)
    # rows kept, last column dropped: the constrained coefficient is zero
    assert np.array_equal(tp.dmat, full[:, :-1])
    assert np.allclose(tp.pmat, tp.dmat.T @ tp.dmat, atol=0)
    assert np.allclose(tp.pmat, tp.pmat.T, atol=0)
    w = np.linalg.eigvalsh(tp.pmat)
    assert w.min() > -1e-12


def test_difference_matrix_small_example():
    tp = difference_penalty(3, 2)
    expected = np.array([[1.0, -2.0, 1.0], [0.0, 1.0, -2.0]])
    assert np.array_equal(tp.dmat, expected)


def test_difference_penalty_rejections():
    with pytest.raises(ValueError):
        difference_penalty(3, 0)
    with pytest.raises(ValueError):
        difference_penalty(3, 3)
    with pytest.raises(ValueError):
        difference_penalty(0, 1)


def make_block(p=2, sizes=((5, 1), (6, 2)), lambdas=(3.0, 40.0)):
    layout = CoefficientLayout(p, sizes)
    terms = tuple(difference_penalty(q, 2) for q, _ in sizes)
    return layout, assemble_penalty(layout, terms, np.asarray(lambdas, dtype=float))


def test_assemble_full_matrix_placement():
    layout, pen = make_block()
    full = pen.full()
    assert full.shape == (layout.dim, layout.dim)
    assert np.allclose(full, full.T, atol=0)
    # linear and direction rows are unpenalized
    for sl in [layout.beta_slice, layout.alpha_slice(0), layout.alpha_slice(1)]:
        assert np.all(full[sl] == 0.0)
        assert np.all(full[:, sl] == 0.0)
    for j, lam in enumerate(pen.lambdas):
        gsl = layout.gamma_slice(j)
        assert np.allclose(full[gsl, gsl], lam * pen.terms[j].pmat, atol=0)


def test_quadratic_forms_match_explicit():
    layout, pen = make_block()
    rng = np.random.default_rng(2)
    psi = rng.normal(size=layout.dim)
    full = pen.full()
    assert pen.quad(psi) == pytest.approx(psi @ full @ psi, rel=1e-12)
    assert np.allclose(pen.matvec(psi), full @ psi, atol=1e-12)
    total = sum(pen.lambdas[j] * pen.term_quad(psi, j) for j in range(pen.n_terms))
    # term_quad excludes the smoothing weight
    assert pen.quad(psi) == pytest.approx(total, rel=1e-12)


def test_term_quad_is_gamma_only():
    layout, pen = make_block()
    rng = np.random.default_rng(7)
    psi = rng.normal(size=layout.dim)
    bumped = psi.copy()
    bumped[layout.beta_slice] += 10.0
    bumped[layout.alpha_slice(0)] -= 3.0
    for j in range(pen.n_terms):
        assert pen.term_quad(psi, j) == pytest.approx(pen.term_quad(bumped, j), rel=1e-14)


def test_with_lambdas_and_validation():
    layout, pen = make_block()
    pen2 = pen.with_lambdas(np.array([1.0, 2.0]))
    assert np.allclose(pen2.full()[layout.gamma_slice(0), layout.gamma_slice(0)],
                       1.0 * pen.terms[0].pmat)
    with pytest.raises(ValueError):
        assemble_penalty(layout, tuple(pen.terms), np.array([1.0, -2.0]))
    with pytest.raises(ValueError):
        assemble_penalty(layout, tuple(pen.terms), np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        assemble_penalty(layout, tuple(pen.terms), np.array([1.0]))
    bad_terms = (difference_penalty(7, 2), pen.terms[1])
    with pytest.raises(ValueError):
        assemble_penalty(layout, bad_terms, np.array([1.0, 2.0]))


def test_pseudo_inverse_against_svd_oracle():
    layout, pen = make_block(lambdas=(0.5, 800.0))
    ours = penalty_pseudo_inverse(pen)
    full = pen.full()
    # independent route: SVD-based pseudo-inverse of the whole matrix
    ref = np.linalg.pinv(full, rcond=1e-12, hermitian=True)
    assert np.allclose(ours, ref, atol=1e-8 * max(1.0, np.abs(ref).max()))
    # Moore-Penrose identities on the penalized blocks
    assert np.allclose(full @ ours @ full, full, atol=1e-8 * np.abs(full).max())
    assert np.allclose(ours @ full @ ours, ours, atol=1e-8 * max(1.0, np.abs(ours).max()))
    # unpenalized rows stay zero
    assert np.all(ours[layout.beta_slice] == 0.0)
    assert np.all(ours[:, layout.alpha_slice(1)] == 0.0)
