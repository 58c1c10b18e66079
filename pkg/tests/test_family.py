"""Families: log-likelihoods against scipy, weights, precision updates,
and quantile residuals."""

import numpy as np
import pytest
from scipy import stats

from gplsiam.family import (
    FAMILY_NAMES,
    family_by_name,
    penalized_loglik,
    quantile_residuals,
    update_phi,
    weights_and_variance,
    working_response,
)


def test_family_registry():
    assert set(FAMILY_NAMES) == {"gaussian", "poisson", "bernoulli", "gamma"}
    with pytest.raises(ValueError, match="gaussian"):
        family_by_name("weibull")
    with pytest.raises(ValueError):
        family_by_name("poisson", link="probit")


def test_default_links():
    assert family_by_name("gaussian").link.name == "identity"
    assert family_by_name("poisson").link.name == "log"
    assert family_by_name("bernoulli").link.name == "logit"
    assert family_by_name("gamma").link.name == "inverse"
    assert family_by_name("gamma", link="log").link.name == "log"


# ---------------------------------------------------------------------------
# log-likelihoods against scipy densities


def test_gaussian_loglik():
    fam = family_by_name("gaussian")
    y = np.array([0.3, -1.2, 2.0])
    mu = np.array([0.0, -1.0, 2.5])
    phi = 2.5  # precision: variance is 1 / phi
    ref = stats.norm.logpdf(y, loc=mu, scale=np.sqrt(1.0 / phi))
    assert np.allclose(fam.loglik(y, mu, phi), ref, atol=1e-12)


def test_poisson_loglik():
    fam = family_by_name("poisson")
    y = np.array([0.0, 1.0, 4.0, 11.0])
    mu = np.array([0.5, 1.5, 3.0, 9.0])
    ref = stats.poisson.logpmf(y.astype(int), mu)
    assert np.allclose(fam.loglik(y, mu, 1.0), ref, atol=1e-12)


def test_bernoulli_loglik():
    fam = family_by_name("bernoulli")
    y = np.array([0.0, 1.0, 1.0, 0.0])
    mu = np.array([0.2, 0.7, 0.99, 0.5])
    ref = stats.bernoulli.logpmf(y.astype(int), mu)
    assert np.allclose(fam.loglik(y, mu, 1.0), ref, atol=1e-12)


def test_gamma_loglik():
    # precision phi is the shape; the scale is mu / phi
    fam = family_by_name("gamma")
    y = np.array([0.4, 2.0, 7.5])
    mu = np.array([1.0, 3.0, 5.0])
    phi = 9.0
    ref = stats.gamma.logpdf(y, a=phi, scale=mu / phi)
    assert np.allclose(fam.loglik(y, mu, phi), ref, atol=1e-12)


def test_cdfs_match_scipy():
    y = np.array([0.0, 1.0, 3.0])
    mu = np.array([0.5, 1.0, 2.5])
    assert np.allclose(
        family_by_name("poisson").cdf(y, mu, 1.0), stats.poisson.cdf(y, mu)
    )
    assert np.allclose(
        family_by_name("gamma").cdf(y + 0.1, mu, 4.0),
        stats.gamma.cdf(y + 0.1, a=4.0, scale=mu / 4.0),
    )
    g = family_by_name("gaussian").cdf(y, mu, 4.0)
    assert np.allclose(g, stats.norm.cdf(y, loc=mu, scale=0.5))


# ---------------------------------------------------------------------------
# scoring weights


def test_weights_closed_forms():
    mu = np.array([0.5, 1.0, 4.0])
    w, v = weights_and_variance(mu, family_by_name("poisson"))
    assert np.allclose(w, mu) and np.allclose(v, mu)
    w, v = weights_and_variance(mu, family_by_name("gamma", link="log"))
    assert np.allclose(w, 1.0) and np.allclose(v, mu**2)
    # canonical inverse link: w = 1 / (g'(mu)^2 V(mu)) = mu^2
    w, v = weights_and_variance(mu, family_by_name("gamma"))
    assert np.allclose(w, mu**2) and np.allclose(v, mu**2)
    w, v = weights_and_variance(mu, family_by_name("gaussian"))
    assert np.allclose(w, 1.0) and np.allclose(v, 1.0)
    p = np.array([0.2, 0.5, 0.9])
    w, v = weights_and_variance(p, family_by_name("bernoulli"))
    assert np.allclose(w, p * (1 - p)) and np.allclose(v, p * (1 - p))


def test_weights_domain_error_names_first_bad_row():
    with pytest.raises(ValueError, match="1"):
        weights_and_variance(np.array([1.0, -2.0, 3.0]), family_by_name("poisson"))
    with pytest.raises(ValueError):
        weights_and_variance(np.array([0.3, 1.2]), family_by_name("bernoulli"))


def test_working_response_formula():
    mpsi = np.array([1.0, 2.0])
    y = np.array([3.0, 1.0])
    mu = np.array([2.0, 2.0])
    w = np.array([4.0, 1.0])
    v = np.array([1.0, 4.0])
    # mpsi + (y - mu) / sqrt(w v)
    assert np.allclose(working_response(mpsi, y, mu, w, v), [1.5, 1.5])


# ---------------------------------------------------------------------------
# precision updates


def test_update_phi_hand_example():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    mu = np.array([0.0, 1.0, 2.0, 3.0])  # unit residuals
    v = np.full(4, 0.4)
    # (n - edf) / sum(r^2 / v) = (12 - 2) / 10
    assert update_phi(y, mu, v, 12, 2.0, family_by_name("gamma")) == pytest.approx(1.0)


def test_update_phi_fixed_families():
    y = np.array([1.0, 2.0])
    mu = np.array([1.5, 1.5])
    v = np.ones(2)
    assert update_phi(y, mu, v, 2, 1.0, family_by_name("poisson")) == 1.0
    assert update_phi(y, mu, v, 2, 1.0, family_by_name("bernoulli")) == 1.0


def test_update_phi_rejections():
    fam = family_by_name("gamma")
    y = np.array([1.0, 2.0])
    v = np.ones(2)
    with pytest.raises(ValueError):
        update_phi(y, y.copy(), v, 2, 2.0, fam)  # edf reaches n
    with pytest.raises(ValueError):
        update_phi(y, y.copy(), v, 5, 2.0, fam)  # zero Pearson


def test_penalized_loglik_subtracts_half_quadratic():
    fam = family_by_name("poisson")
    y = np.array([1.0, 2.0])
    mu = np.array([1.0, 2.0])

    class Quad:
        def quad(self, psi):
            return float(psi @ psi)

    psi = np.array([3.0, 4.0])
    base = float(np.sum(fam.loglik(y, mu, 1.0)))
    assert penalized_loglik(y, mu, 1.0, psi, Quad(), fam) == pytest.approx(base - 12.5)
    assert penalized_loglik(y, mu, 1.0, psi, None, fam) == pytest.approx(base)


# ---------------------------------------------------------------------------
# response checks and clamping


def test_check_response():
    family_by_name("poisson").check_response(np.array([0.0, 3.0]))
    with pytest.raises(ValueError):
        family_by_name("poisson").check_response(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        family_by_name("bernoulli").check_response(np.array([0.0, 0.5]))
    with pytest.raises(ValueError):
        family_by_name("gamma").check_response(np.array([1.0, 0.0]))


def test_clamp_mu_counts():
    fam = family_by_name("bernoulli")
    mu, n = fam.clamp_mu(np.array([0.5, 1.0 - 1e-16, 1e-16]))
    assert n == 2
    assert np.all((mu > 0.0) & (mu < 1.0))
    fam = family_by_name("poisson")
    mu, n = fam.clamp_mu(np.array([1.0, 0.0]))
    assert n == 1 and mu.min() > 0.0


# ---------------------------------------------------------------------------
# quantile residuals


def test_gaussian_residuals_exact_and_constant_across_replicates():
    fam = family_by_name("gaussian")
    y = np.array([1.0, 2.0, 0.5])
    mu = np.array([0.5, 2.5, 0.5])
    phi = 4.0
    r = quantile_residuals(y, mu, phi, fam, replicates=5)
    assert r.shape == (3, 5)
    expected = (y - mu) * 2.0
    for k in range(5):
        assert np.allclose(r[:, k], expected)


def test_discrete_residuals_randomize_and_need_rng():
    fam = family_by_name("poisson")
    y = np.array([0.0, 2.0, 5.0])
    mu = np.array([1.0, 2.0, 4.0])
    with pytest.raises(ValueError):
        quantile_residuals(y, mu, 1.0, fam)
    r = quantile_residuals(y, mu, 1.0, fam, rng=np.random.default_rng(0), replicates=8)
    assert r.shape == (3, 8)
    assert np.all(np.isfinite(r))
    assert np.std(r[0]) > 0.0  # replicates differ
    r2 = quantile_residuals(y, mu, 1.0, fam, rng=np.random.default_rng(0), replicates=8)
    assert np.array_equal(r, r2)  # deterministic under a fixed stream


def test_residuals_standard_normal_under_true_poisson_model():
    rng = np.random.default_rng(42)
    n = 2000
    mu = np.exp(rng.uniform(-0.5, 2.0, size=n))
    y = rng.poisson(mu).astype(float)
    r = quantile_residuals(y, mu, 1.0, family_by_name("poisson"),
                           rng=np.random.default_rng(7), replicates=1)
    stat = stats.kstest(r[:, 0], "norm")
    assert stat.pvalue > 0.01


def test_residuals_standard_normal_under_true_gamma_model():
    rng = np.random.default_rng(43)
    n = 2000
    mu = np.exp(rng.uniform(-0.5, 1.5, size=n))
    phi = 9.0
    y = rng.gamma(shape=phi, scale=mu / phi)
    r = quantile_residuals(y, mu, phi, family_by_name("gamma"), replicates=1)
    stat = stats.kstest(r[:, 0], "norm")
    assert stat.pvalue > 0.01
