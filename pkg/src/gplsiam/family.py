"""Exponential families, links, and likelihood-side helpers.

The dispersion ``phi`` is a precision: it multiplies the log-likelihood
kernel, so gaussian phi is 1/sigma^2 and gamma phi is the shape.  Poisson
and Bernoulli have phi fixed at one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import expit, gammaln, ndtr, ndtri

__all__ = [
    "Link",
    "Family",
    "family_by_name",
    "weights_and_variance",
    "working_response",
    "penalized_loglik",
    "update_phi",
    "quantile_residuals",
    "FAMILY_NAMES",
    "LINK_NAMES",
]

# eta cap for the log link; exp stays finite
_ETA_CAP = 690.0
_MU_EPS = 1e-10


@dataclass(frozen=True)
class Link:
    name: str

    def g(self, mu):
        if self.name == "identity":
            return np.asarray(mu, dtype=float)
        if self.name == "log":
            return np.log(mu)
        if self.name == "logit":
            mu = np.asarray(mu, dtype=float)
            return np.log(mu) - np.log1p(-mu)
        if self.name == "inverse":
            return 1.0 / np.asarray(mu, dtype=float)
        raise AssertionError(self.name)

    def ginv(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.name == "identity":
            return eta
        if self.name == "log":
            return np.exp(np.clip(eta, -_ETA_CAP, _ETA_CAP))
        if self.name == "logit":
            return expit(eta)
        if self.name == "inverse":
            return 1.0 / eta
        raise AssertionError(self.name)

    def deriv(self, mu):
        """g'(mu)."""
        mu = np.asarray(mu, dtype=float)
        if self.name == "identity":
            return np.ones_like(mu)
        if self.name == "log":
            return 1.0 / mu
        if self.name == "logit":
            return 1.0 / (mu * (1.0 - mu))
        if self.name == "inverse":
            return -1.0 / (mu * mu)
        raise AssertionError(self.name)


class Family:
    """One exponential family with a chosen link."""

    name: str = ""
    canonical_link: str = "identity"
    phi_fixed: bool = False
    discrete: bool = False

    def __init__(self, link: str | None = None):
        link = link or self.canonical_link
        if link not in LINK_NAMES:
            raise ValueError(f"unknown link {link!r}; choose one of {sorted(LINK_NAMES)}")
        if link not in self.allowed_links:
            raise ValueError(f"link {link!r} is not supported for family {self.name!r}")
        self.link = Link(link)

    # subclasses fill these in -------------------------------------------------
    allowed_links: tuple[str, ...] = ()

    def variance(self, mu):
        raise NotImplementedError

    def loglik(self, y, mu, phi):
        """Elementwise log-density at precision phi."""
        raise NotImplementedError

    def cdf(self, y, mu, phi):
        raise NotImplementedError

    def check_response(self, y):
        """Raise if y is outside the family support."""

    def initial_mu(self, y):
        return np.asarray(y, dtype=float)

    def clamp_mu(self, mu) -> tuple[np.ndarray, int]:
        """Pull means strictly inside the domain; report how many moved."""
        return np.asarray(mu, dtype=float), 0

    # shared -------------------------------------------------------------------
    def __repr__(self):
        return f"{type(self).__name__}(link={self.link.name!r})"


class Gaussian(Family):
    name = "gaussian"
    canonical_link = "identity"
    allowed_links = ("identity", "log", "inverse")

    def variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def loglik(self, y, mu, phi):
        r = np.asarray(y, dtype=float) - mu
        return -0.5 * phi * r * r + 0.5 * np.log(phi) - 0.5 * np.log(2.0 * np.pi)

    def cdf(self, y, mu, phi):
        return ndtr((np.asarray(y, dtype=float) - mu) * np.sqrt(phi))


class Poisson(Family):
    name = "poisson"
    canonical_link = "log"
    phi_fixed = True
    discrete = True
    allowed_links = ("log", "identity")

    def variance(self, mu):
        return np.asarray(mu, dtype=float)

    def loglik(self, y, mu, phi):
        y = np.asarray(y, dtype=float)
        return y * np.log(mu) - mu - gammaln(y + 1.0)

    def cdf(self, y, mu, phi):
        return stats.poisson.cdf(y, mu)

    def check_response(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0) or np.any(y != np.floor(y)):
            raise ValueError("poisson responses must be nonnegative integers")

    def initial_mu(self, y):
        return np.asarray(y, dtype=float) + 0.1

    def clamp_mu(self, mu):
        mu = np.asarray(mu, dtype=float)
        n_bad = int(np.sum(mu < _MU_EPS))
        if n_bad:
            mu = np.maximum(mu, _MU_EPS)
        return mu, n_bad


class Bernoulli(Family):
    name = "bernoulli"
    canonical_link = "logit"
    phi_fixed = True
    discrete = True
    allowed_links = ("logit",)

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu * (1.0 - mu)

    def loglik(self, y, mu, phi):
        y = np.asarray(y, dtype=float)
        return y * np.log(mu) + (1.0 - y) * np.log1p(-mu)

    def cdf(self, y, mu, phi):
        y = np.asarray(y, dtype=float)
        out = np.where(y < 0.0, 0.0, np.where(y < 1.0, 1.0 - mu, 1.0))
        return out

    def check_response(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("bernoulli responses must be 0 or 1")

    def initial_mu(self, y):
        return (np.asarray(y, dtype=float) + 0.5) / 2.0

    def clamp_mu(self, mu):
        mu = np.asarray(mu, dtype=float)
        n_bad = int(np.sum((mu < _MU_EPS) | (mu > 1.0 - _MU_EPS)))
        if n_bad:
            mu = np.clip(mu, _MU_EPS, 1.0 - _MU_EPS)
        return mu, n_bad


class Gamma(Family):
    name = "gamma"
    canonical_link = "inverse"
    allowed_links = ("inverse", "log", "identity")

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu * mu

    def loglik(self, y, mu, phi):
        y = np.asarray(y, dtype=float)
        return (
            phi * np.log(phi)
            - phi * np.log(mu)
            + (phi - 1.0) * np.log(y)
            - phi * y / mu
            - gammaln(phi)
        )

    def cdf(self, y, mu, phi):
        return stats.gamma.cdf(y, a=phi, scale=mu / phi)

    def check_response(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValueError("gamma responses must be strictly positive")

    def clamp_mu(self, mu):
        mu = np.asarray(mu, dtype=float)
        n_bad = int(np.sum(mu < _MU_EPS))
        if n_bad:
            mu = np.maximum(mu, _MU_EPS)
        return mu, n_bad


_FAMILIES = {f.name: f for f in (Gaussian, Poisson, Bernoulli, Gamma)}
FAMILY_NAMES = tuple(sorted(_FAMILIES))
LINK_NAMES = ("identity", "log", "logit", "inverse")


def family_by_name(name: str, link: str | None = None) -> Family:
    try:
        cls = _FAMILIES[name]
    except KeyError:
        raise ValueError(
            f"unknown family {name!r}; choose one of {sorted(_FAMILIES)}"
        ) from None
    return cls(link)


def weights_and_variance(mu: np.ndarray, family: Family) -> tuple[np.ndarray, np.ndarray]:
    """Fisher weights w = 1 / (g'(mu)^2 V(mu)) and variance function V(mu).

    Means must sit strictly inside the family domain; the first offending
    observation is named in the error.
    """
    mu = np.asarray(mu, dtype=float)
    bad = ~np.isfinite(mu)
    if family.name in ("poisson", "gamma"):
        bad |= mu <= 0.0
    elif family.name == "bernoulli":
        bad |= (mu <= 0.0) | (mu >= 1.0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(
            f"mean {mu[i]!r} at observation {i} is outside the "
            f"{family.name} domain"
        )
    v = family.variance(mu)
    gp = family.link.deriv(mu)
    w = 1.0 / (gp * gp * v)
    return w, v


def working_response(mpsi, y, mu, w, v) -> np.ndarray:
    """Linearized response M psi + (y - mu) / sqrt(w v) (offset excluded)."""
    return np.asarray(mpsi, dtype=float) + (np.asarray(y, dtype=float) - mu) / np.sqrt(
        np.asarray(w, dtype=float) * np.asarray(v, dtype=float)
    )


def penalized_loglik(y, mu, phi, psi, penalty, family: Family) -> float:
    """Log-likelihood at precision phi minus half the penalty quadratic."""
    ll = float(np.sum(family.loglik(y, mu, phi)))
    pen = 0.0 if penalty is None else penalty.quad(np.asarray(psi, dtype=float))
    return ll - 0.5 * pen


def update_phi(y, mu, v, n: int, edf: float, family: Family) -> float:
    """Pearson precision estimate (n - edf) / sum((y - mu)^2 / V)."""
    if family.phi_fixed:
        return 1.0
    if edf >= n:
        raise ValueError("effective degrees of freedom reached the sample size")
    pearson = float(np.sum((np.asarray(y, dtype=float) - mu) ** 2 / v))
    if not pearson > 0.0:
        raise ValueError("degenerate fit: zero Pearson statistic")
    return (n - edf) / pearson


def quantile_residuals(
    y,
    mu,
    phi,
    family: Family,
    rng: np.random.Generator | None = None,
    replicates: int = 40,
) -> np.ndarray:
    """Randomized quantile residuals, one column per replicate.

    Discrete families draw uniformly between the cdf at y - 1 and at y and
    map through the normal quantile function, so each replicate differs.
    Continuous families are deterministic and every column repeats the same
    values; the gaussian column is exactly (y - mu) * sqrt(phi).
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = y.size
    if family.discrete:
        if rng is None:
            raise ValueError("discrete families need an rng for the randomization")
        hi = np.asarray(family.cdf(y, mu, phi), dtype=float)
        lo = np.asarray(family.cdf(y - 1.0, mu, phi), dtype=float)
        u = lo[:, None] + (hi - lo)[:, None] * rng.random((n, replicates))
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        return ndtri(u)
    if family.name == "gaussian":
        col = (y - mu) * np.sqrt(phi)
    else:
        p = np.clip(np.asarray(family.cdf(y, mu, phi), dtype=float), 1e-300, 1.0 - 1e-16)
        col = ndtri(p)
    return np.repeat(col[:, None], replicates, axis=1)
