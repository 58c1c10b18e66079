"""Model specification, design resolution, and the fitting loop."""

import numpy as np
import pandas as pd
import pytest

from gplsiam.family import family_by_name
from gplsiam.fit import (
    CoefficientLayout,
    FitConfig,
    ModelSpec,
    NonConvergenceError,
    TermSpec,
    _design,
    _glm_irls,
    fit,
    initialize,
    predict,
)
from gplsiam.sim import generate, scenario


@pytest.fixture(scope="module")
def poisson_fit():
    data = generate(scenario("poisson1", 200, seed=0), 0)
    spec = data.scenario.model_spec()
    model = fit(spec, data.frame, FitConfig(seed=5))
    return data, model


# ---------------------------------------------------------------------------
# layout arithmetic


def test_layout_slices():
    lay = CoefficientLayout(p=2, sizes=((9, 1), (9, 2)))
    assert lay.dim == 23
    assert lay.n_terms == 2
    assert lay.beta_slice == slice(0, 2)
    assert lay.gamma_slice(0) == slice(2, 11)
    assert lay.alpha_slice(0) == slice(11, 12)
    assert lay.gamma_slice(1) == slice(12, 21)
    assert lay.alpha_slice(1) == slice(21, 23)
    assert lay.term_slice(1) == slice(12, 23)


def test_term_spec_validation():
    TermSpec(columns=("a",), q=5)  # plain smooth is fine
    with pytest.raises(ValueError):
        TermSpec(columns=(), q=5)
    with pytest.raises(ValueError):
        TermSpec(columns=("a", "a"), q=5)
    with pytest.raises(ValueError):
        TermSpec(columns=("a",), q=3, d=4)
    with pytest.raises(ValueError):
        TermSpec(columns=("a",), q=5, dif=5)
    with pytest.raises(ValueError):
        TermSpec(columns=("a",), q=5, d=1)
    t = TermSpec(columns=("a", "b", "c"), q=6)
    assert t.s == 2 and t.name == "a+b+c"
    assert TermSpec(columns=("a",), q=5, label="f1").name == "f1"


def test_model_spec_validation():
    fam = family_by_name("poisson")
    with pytest.raises(TypeError):
        ModelSpec(family="poisson", response="y")
    with pytest.raises(ValueError, match="unique"):
        ModelSpec(
            family=fam,
            response="y",
            terms=(TermSpec(columns=("a",), q=5, label="f"),
                   TermSpec(columns=("b",), q=5, label="f")),
        )


def test_config_validation():
    FitConfig().validate()
    with pytest.raises(ValueError):
        FitConfig(tol_met=-1.0).validate()
    with pytest.raises(ValueError):
        FitConfig(lambda_init=(10.0, 1.0)).validate()
    with pytest.raises(ValueError):
        FitConfig(max_model_iter=0).validate()


# ---------------------------------------------------------------------------
# design resolution


def frame_with_groups(n=60, seed=0):
    rng = np.random.default_rng(seed)
    return pd.DataFrame(
        {
            "y": rng.poisson(2.0, size=n).astype(float),
            "x": rng.normal(size=n),
            "z1": rng.uniform(size=n),
            "z2": rng.uniform(size=n),
            "g": np.where(np.arange(n) % 2 == 0, "a", "b"),
        }
    )


def test_design_by_levels():
    frame = frame_with_groups()
    spec = ModelSpec(
        family=family_by_name("poisson"),
        response="y",
        linear=("x",),
        terms=(TermSpec(columns=("z1", "z2"), q=6, by="g", label="f"),),
    )
    y, x, offset, names, resolved = _design(spec, frame)
    assert names == ("(intercept)", "x")
    assert x.shape == (60, 2)
    assert np.all(offset == 0.0)
    assert [rt.label for rt in resolved] == ["f[g=a]", "f[g=b]"]
    assert resolved[0].mask.sum() == 30
    assert resolved[1].mask.sum() == 30
    assert not np.any(resolved[0].mask & resolved[1].mask)


def test_design_missing_column():
    frame = frame_with_groups()
    spec = ModelSpec(
        family=family_by_name("poisson"),
        response="y",
        linear=("nope",),
        terms=(TermSpec(columns=("z1",), q=6),),
    )
    with pytest.raises(ValueError, match="nope"):
        _design(spec, frame)


def test_design_rejects_missing_values():
    frame = frame_with_groups()
    frame.loc[3, "z1"] = np.nan
    frame.loc[7, "x"] = np.inf
    spec = ModelSpec(
        family=family_by_name("poisson"),
        response="y",
        linear=("x",),
        terms=(TermSpec(columns=("z1",), q=6),),
    )
    with pytest.raises(ValueError, match="2 row"):
        _design(spec, frame)


def test_design_too_few_active_rows():
    frame = frame_with_groups(n=20)
    frame["g"] = ["a"] * 18 + ["b", "b"]
    spec = ModelSpec(
        family=family_by_name("poisson"),
        response="y",
        terms=(TermSpec(columns=("z1",), q=6, by="g", label="f"),),
    )
    with pytest.raises(ValueError, match=r"f\[g=b\]"):
        _design(spec, frame)


# ---------------------------------------------------------------------------
# inner scoring


def test_glm_irls_intercept_only_poisson():
    rng = np.random.default_rng(1)
    y = rng.poisson(3.0, size=300).astype(float)
    x = np.ones((300, 1))
    beta = _glm_irls(x, y, family_by_name("poisson"), np.zeros(300))
    assert beta[0] == pytest.approx(np.log(y.mean()), abs=1e-8)


def test_glm_irls_gaussian_is_least_squares():
    rng = np.random.default_rng(2)
    x = np.column_stack([np.ones(80), rng.normal(size=80)])
    y = x @ np.array([1.0, -2.0]) + rng.normal(size=80)
    beta = _glm_irls(x, y, family_by_name("gaussian"), np.zeros(80))
    ref, *_ = np.linalg.lstsq(x, y, rcond=None)
    assert np.allclose(beta, ref, atol=1e-10)


# ---------------------------------------------------------------------------
# the full fit


def test_fit_converges_and_recovers_directions(poisson_fit):
    data, model = poisson_fit
    assert model.converged
    assert model.met < 1e-6
    assert model.dim == 23
    assert model.phi == 1.0
    assert model.fs_violations == 0
    for j, t in enumerate(model.terms):
        err = np.linalg.norm(t.alpha - data.scenario.alphas[j])
        assert err < 0.5 * np.linalg.norm(data.scenario.alphas[j])
    # intercept absorbs the function means; the true slope is 0.7
    assert model.beta[1] == pytest.approx(0.7, abs=0.35)


def test_fit_is_reproducible_under_a_seed(poisson_fit):
    data, model = poisson_fit
    again = fit(data.scenario.model_spec(), data.frame, FitConfig(seed=5))
    assert np.array_equal(model.psi, again.psi)
    assert np.array_equal(model.lambdas, again.lambdas)
    assert model.total_iter == again.total_iter
    assert model.restarts == again.restarts


def test_predict_on_training_data_replays_the_fit(poisson_fit):
    data, model = poisson_fit
    pred = predict(model, data.frame)
    assert np.max(np.abs(pred.mu - model.mu)) < 1e-10
    assert np.max(np.abs(pred.eta - model.eta)) < 1e-10
    assert set(pred.terms) == {t.label for t in model.terms}
    # per-term contributions plus the linear part reproduce the predictor
    f_sum = np.sum(list(pred.terms.values()), axis=0)
    lin = np.column_stack([np.ones(len(data.frame)), data.frame["x"]]) @ model.beta
    assert np.allclose(lin + f_sum, pred.eta, atol=1e-10)


def test_predict_clamps_new_points_with_warning(poisson_fit):
    data, model = poisson_fit
    frame = data.frame.copy()
    # push one row far outside the fitted index range
    for c in frame.columns:
        if c.startswith("z"):
            frame.loc[0, c] = frame[c].max() + 50.0
    with pytest.warns(UserWarning, match="clamped"):
        pred = predict(model, frame)
    assert np.all(np.isfinite(pred.mu))


def test_initialize_respects_seed():
    data = generate(scenario("poisson1", 150, seed=0), 0)
    spec = data.scenario.model_spec()
    s1 = initialize(spec, data.frame, FitConfig(seed=9))
    s2 = initialize(spec, data.frame, FitConfig(seed=9))
    assert np.array_equal(s1.psi, s2.psi)
    assert np.array_equal(s1.lambdas, s2.lambdas)
    assert s1.phi == s2.phi


def test_non_convergence_raises_when_nothing_was_saved():
    data = generate(scenario("poisson1", 150, seed=0), 0)
    spec = data.scenario.model_spec()
    with pytest.raises(NonConvergenceError):
        fit(spec, data.frame, FitConfig(seed=3, max_total_iter=1))


def test_gamma_fit_estimates_precision():
    data = generate(scenario("gamma1", 400, seed=1), 0)
    spec = data.scenario.model_spec()
    model = fit(spec, data.frame, FitConfig(seed=2))
    assert model.converged
    assert 5.0 < model.phi < 14.0  # true shape is 9
