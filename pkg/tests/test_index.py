"""Direction parametrization: values, gradient, and the design block."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gplsiam.index import expand_alpha, index_covariate, jacobian, term_model_matrix

tilde_vectors = st.lists(
    st.floats(min_value=-2.0, max_value=2.0, allow_nan=False),
    min_size=1,
    max_size=4,
).map(np.asarray)


@settings(max_examples=60, deadline=None)
@given(at=tilde_vectors)
def test_expand_alpha_unit_norm_positive_lead(at):
    alpha = expand_alpha(at)
    assert alpha.shape == (at.size + 1,)
    assert np.linalg.norm(alpha) == pytest.approx(1.0, abs=1e-12)
    assert alpha[0] > 0.0


def test_expand_alpha_values():
    assert np.allclose(expand_alpha(np.array([0.0])), [1.0, 0.0])
    a = expand_alpha(np.array([1.0]))
    assert np.allclose(a, [1.0 / np.sqrt(2.0)] * 2, atol=1e-15)
    a = expand_alpha(np.array([-1.4]))
    assert np.allclose(a, np.array([1.0, -1.4]) / np.sqrt(2.96), atol=1e-15)


def test_jacobian_closed_form_single_parameter():
    # d/dt of (1, t)/sqrt(1 + t^2) at t = 1 is (-1, 1)/2^{3/2}
    j = jacobian(np.array([1.0]))
    v = 2.0 ** (-1.5)
    assert j.shape == (2, 1)
    assert j[0, 0] == pytest.approx(-v, abs=1e-12)
    assert j[1, 0] == pytest.approx(v, abs=1e-12)
    assert j[0, 0] == pytest.approx(-0.35355, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(at=tilde_vectors)
def test_jacobian_matches_finite_differences(at):
    jac = jacobian(at)
    h = 1e-6
    for k in range(at.size):
        e = np.zeros(at.size)
        e[k] = h
        fd = (expand_alpha(at + e) - expand_alpha(at - e)) / (2.0 * h)
        assert np.max(np.abs(jac[:, k] - fd)) < 1e-7


def test_jacobian_is_tangent_to_the_sphere():
    # alpha' J = 0: moving along any column keeps the norm to first order
    rng = np.random.default_rng(8)
    for _ in range(5):
        at = rng.normal(size=3)
        alpha = expand_alpha(at)
        assert np.max(np.abs(alpha @ jacobian(at))) < 1e-12


def test_index_covariate():
    z = np.array([[1.0, 2.0], [3.0, -1.0]])
    alpha = np.array([0.6, 0.8])
    assert np.allclose(index_covariate(z, alpha), [2.2, 1.0])
    with pytest.raises(ValueError):
        index_covariate(z, np.array([1.0, 2.0, 3.0]))


def test_term_model_matrix_centred():
    rng = np.random.default_rng(4)
    n, s = 40, 2
    z = rng.normal(size=(n, s + 1))
    fprime = rng.normal(size=n)
    at = rng.normal(size=s)
    block = term_model_matrix(fprime, z, jacobian(at))
    assert block.shape == (n, s)
    assert np.max(np.abs(block.mean(axis=0))) < 1e-14
    raw = (fprime[:, None] * z) @ jacobian(at)
    assert np.allclose(block, raw - raw.mean(axis=0), atol=0)


def test_term_model_matrix_group_mask():
    rng = np.random.default_rng(9)
    n = 30
    z = rng.normal(size=(n, 2))
    fprime = rng.normal(size=n)
    at = np.array([0.7])
    mask = np.zeros(n, dtype=bool)
    mask[:12] = True
    block = term_model_matrix(fprime, z, jacobian(at), group_mask=mask)
    assert np.all(block[~mask] == 0.0)
    assert np.max(np.abs(block[mask].mean(axis=0))) < 1e-14
    direct = term_model_matrix(fprime[mask], z[mask], jacobian(at))
    assert np.allclose(block[mask], direct, atol=0)
