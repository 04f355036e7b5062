import numpy as np
import pytest

from goalcast import glm
from goalcast.glm import (
    Family,
    ModelFit,
    assign_folds,
    cross_validate,
    deviance,
    fit_model,
    fit_negbin_path,
    fit_path,
    kkt_violation,
    lambda_max,
    make_lambda_path,
    penalized_objective,
    soft_threshold,
)


def _poisson_data(rng, n=400, p=8, n_true=3, effect=0.3):
    X = rng.normal(size=(n, p))
    beta = np.zeros(p)
    beta[:n_true] = effect * rng.choice([-1.0, 1.0], size=n_true)
    y = rng.poisson(np.exp(3.3 + X @ beta))
    return X, y.astype(float), beta


def test_family_validation():
    with pytest.raises(ValueError):
        Family("binomial")
    with pytest.raises(ValueError):
        Family("negbin")
    with pytest.raises(ValueError):
        Family("negbin", -1.0)
    assert Family("poisson").nb_theta is None


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_lambda_path_shape():
    path = make_lambda_path(2.0, 50)
    assert len(path) == 50
    assert path[0] == pytest.approx(2.0)
    assert path[-1] == pytest.approx(2.0e-3)
    ratios = path[1:] / path[:-1]
    np.testing.assert_allclose(ratios, ratios[0])
    with pytest.raises(ValueError):
        make_lambda_path(2.0, 5)


def test_all_zero_at_lambda_max():
    rng = np.random.default_rng(1)
    for kind, theta in (("gaussian", None), ("poisson", None), ("negbin", 5.0)):
        X, y, _ = _poisson_data(rng)
        fam = Family(kind, theta)
        lam = lambda_max(X, y, fam)
        pr = fit_path(X, y, fam, lambda_path=np.array([lam * 1.000001, lam * 0.5]))
        assert np.all(pr.coefs[0] == 0.0)
        assert np.any(pr.coefs[1] != 0.0)


def test_gaussian_path_matches_soft_threshold_oracle():
    # orthonormal columns (X.T X / n = I): lasso is exact soft thresholding
    rng = np.random.default_rng(2)
    n, p = 60, 6
    raw = rng.normal(size=(n, p))
    Q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    X = Q * np.sqrt(n)
    beta = rng.normal(size=p)
    y = X @ beta + rng.normal(0, 0.1, size=n)
    path = make_lambda_path(np.max(np.abs(X.T @ y / n)), 30)
    pr = fit_path(X, y, Family("gaussian"), lambda_path=path)
    ols = X.T @ (y - y.mean()) / n
    for i, lam in enumerate(path):
        np.testing.assert_allclose(pr.coefs[i], soft_threshold(ols, lam), atol=1e-7)


def test_kkt_on_random_instances():
    rng = np.random.default_rng(3)
    X, y, _ = _poisson_data(rng)
    for kind, theta in (("gaussian", None), ("poisson", None), ("negbin", 8.0)):
        fam = Family(kind, theta)
        path = make_lambda_path(lambda_max(X, y, fam), 20)
        pr = fit_path(X, y, fam, lambda_path=path)
        for i in (0, 9, 19):
            v = kkt_violation(X, y, fam, pr.intercepts[i], pr.coefs[i], path[i])
            assert v < 1e-5


def test_solution_minimizes_penalized_objective():
    rng = np.random.default_rng(4)
    X, y, _ = _poisson_data(rng)
    fam = Family("poisson")
    lam = lambda_max(X, y, fam) * 0.1
    pr = fit_path(X, y, fam, lambda_path=np.array([lam]))
    base = penalized_objective(X, y, fam, pr.intercepts[0], pr.coefs[0], lam)
    for trial in range(20):
        bump = np.random.default_rng(trial).normal(0, 0.01, size=X.shape[1])
        perturbed = penalized_objective(
            X, y, fam, pr.intercepts[0], pr.coefs[0] + bump, lam
        )
        assert perturbed >= base - 1e-10


def test_fit_path_rejects_bad_inputs():
    X = np.ones((10, 2))
    with pytest.raises(ValueError, match="negative"):
        fit_path(X, np.array([1.0, -2.0] * 5), Family("poisson"))
    with pytest.raises(ValueError, match="distinct"):
        fit_path(X, np.full(10, 3.0), Family("gaussian"))


def test_deviance_zero_at_fit():
    y = np.array([1.0, 4.0, 9.0])
    for kind, th in (("gaussian", None), ("poisson", None), ("negbin", 5.0)):
        np.testing.assert_allclose(deviance(kind, y, y, th), 0.0, atol=1e-12)
    assert np.all(deviance("poisson", y, y * 1.5) > 0)


def test_assign_folds_pairs_together():
    match_ids = np.arange(40) // 2
    folds = assign_folds(match_ids, 10, seed=0)
    assert np.all(folds[0::2] == folds[1::2])
    assert set(folds) == set(range(10))
    # same seed reproduces, different seed changes
    assert np.all(folds == assign_folds(match_ids, 10, seed=0))
    assert np.any(folds != assign_folds(match_ids, 10, seed=1))
    with pytest.raises(ValueError):
        assign_folds(match_ids, 1, seed=0)


def test_cross_validate_rules():
    rng = np.random.default_rng(5)
    X, y, _ = _poisson_data(rng, n=300)
    cv = cross_validate(X, y, np.arange(300) // 2, Family("poisson"), n_lambda=40)
    assert cv.lambda_1se >= cv.lambda_min
    assert cv.index_1se <= cv.index_min
    assert cv.cv_mean[cv.index_min] == cv.cv_mean.min()
    assert cv.cv_mean[cv.index_1se] <= cv.cv_mean[cv.index_min] + cv.cv_se[cv.index_min]


def test_fit_model_gaussian(gaussian_fit):
    fit = gaussian_fit
    assert fit.family.kind == "gaussian"
    assert fit.sigma2_hat is not None and fit.sigma2_hat > 0
    assert fit.lambda_rule == "min"
    assert 0 < fit.n_active <= 22


def test_fit_model_poisson_dispersion(poisson_fit):
    assert poisson_fit.phi_hat is not None and poisson_fit.phi_hat > 0
    assert len(poisson_fit.coefficients) == 22


def test_fit_model_rejects_bad_rule(standardized_rows):
    rows_std, scaling = standardized_rows
    with pytest.raises(ValueError, match="rule"):
        fit_model(rows_std, scaling, "gaussian", "best")


def test_negbin_path_overdispersed_data():
    rng = np.random.default_rng(6)
    n, p = 500, 5
    X = rng.normal(size=(n, p))
    beta = np.array([0.3, -0.3, 0.0, 0.0, 0.0])
    mu = np.exp(3.0 + X @ beta)
    true_theta = 4.0
    y = rng.negative_binomial(true_theta, true_theta / (true_theta + mu)).astype(float)
    pr = fit_negbin_path(X, y, n_lambda=20)
    assert not pr.poisson_equivalent
    assert 1.5 < pr.nb_thetas[-1] < 12.0


def test_negbin_path_equidispersed_is_poisson_equivalent():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(400, 4))
    y = rng.poisson(np.exp(3.3 + 0.2 * X[:, 0])).astype(float)
    pr = fit_negbin_path(X, y, n_lambda=15)
    assert pr.poisson_equivalent
    # coefficients agree with the plain Poisson path at the theta cap
    pp = fit_path(X, y, Family("poisson"), lambda_path=pr.lambda_path)
    np.testing.assert_allclose(pr.coefs[-1], pp.coefs[-1], atol=1e-4)


def test_negbin_path_constant_response():
    X = np.random.default_rng(8).normal(size=(20, 3))
    pr = fit_negbin_path(X, np.full(20, 27.0), n_lambda=10)
    assert pr.poisson_equivalent
    assert np.all(pr.coefs == 0.0)
    np.testing.assert_allclose(pr.intercepts, np.log(27.0))


def test_model_fit_json_roundtrip(poisson_fit):
    back = ModelFit.from_json(poisson_fit.to_json())
    np.testing.assert_allclose(back.coefficients, poisson_fit.coefficients)
    assert back.intercept == pytest.approx(poisson_fit.intercept)
    assert back.feature_names == poisson_fit.feature_names
    assert back.lambda_rule == poisson_fit.lambda_rule
    assert back.phi_hat == pytest.approx(poisson_fit.phi_hat)
    np.testing.assert_allclose(back.scaling.means, poisson_fit.scaling.means)
    row = np.linspace(-1, 1, 22)
    assert glm.predict_mean(back, row) == pytest.approx(
        glm.predict_mean(poisson_fit, row)
    )


def test_predict_mean_links(gaussian_fit, poisson_fit):
    z = np.zeros(22)
    assert glm.predict_mean(gaussian_fit, z) == pytest.approx(gaussian_fit.intercept)
    assert glm.predict_mean(poisson_fit, z) == pytest.approx(
        np.exp(poisson_fit.intercept)
    )


def test_predict_mean_raw_uses_scaling(poisson_fit):
    raw = poisson_fit.scaling.means + poisson_fit.scaling.sds
    direct = glm.predict_mean(poisson_fit, np.ones(22))
    assert glm.predict_mean_raw(poisson_fit, raw) == pytest.approx(direct)
