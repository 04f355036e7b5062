import numpy as np
import pytest
from scipy.stats import poisson

from goalcast.counts import (
    OutcomeProbs,
    ScoreDistribution,
    double_poisson_pmf,
    estimate_dispersion,
    outcome_probs,
    sample,
)

from conftest import zero_coef_fit


def test_outcome_probs_validation():
    OutcomeProbs(0.5, 0.3, 0.2)
    with pytest.raises(ValueError):
        OutcomeProbs(0.5, 0.3, 0.3)


def test_score_distribution_validation():
    with pytest.raises(ValueError, match="kind"):
        ScoreDistribution("binomial", 25.0)
    with pytest.raises(ValueError, match="mean"):
        ScoreDistribution("poisson", 0.0)
    with pytest.raises(ValueError, match="dispersion"):
        ScoreDistribution("double_poisson", 25.0, 0.0)
    # rounded gaussian may have a non-positive mean
    ScoreDistribution("rounded_gaussian", -0.5, 4.0)


def test_variance_formulas():
    assert ScoreDistribution("poisson", 25.0).variance() == 25.0
    assert ScoreDistribution("double_poisson", 25.0, 0.8).variance() == pytest.approx(20.0)
    assert ScoreDistribution("negbin", 25.0, 5.0).variance() == pytest.approx(150.0)
    assert ScoreDistribution("rounded_gaussian", 25.0, 16.0).variance() == 16.0


def test_pmf_grids_are_distributions():
    for dist in (
        ScoreDistribution("poisson", 27.0),
        ScoreDistribution("double_poisson", 27.0, 0.74),
        ScoreDistribution("negbin", 27.0, 40.0),
        ScoreDistribution("rounded_gaussian", 27.0, 20.13),
    ):
        p = dist.pmf_grid()
        assert np.all(p >= 0)
        assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_double_poisson_reduces_to_poisson():
    mean = 27.0
    grid = ScoreDistribution("double_poisson", mean, 1.0).pmf_grid()
    k = np.arange(len(grid))
    np.testing.assert_allclose(grid, poisson.pmf(k, mean), atol=1e-12)


def test_double_poisson_underdispersion():
    dist = ScoreDistribution("double_poisson", 30.0, 0.74)
    p = dist.pmf_grid()
    k = np.arange(len(p))
    mean = float(k @ p)
    var = float((k - mean) ** 2 @ p)
    assert mean == pytest.approx(30.0, abs=0.05)
    assert var == pytest.approx(0.74 * 30.0, abs=0.3)


def test_double_poisson_pmf_scalar_and_array():
    val = double_poisson_pmf(27, 27.0, 1.0 / 0.74)
    assert 0 < val < 1
    arr = double_poisson_pmf(np.array([-1, 27, 10_000]), 27.0, 1.0 / 0.74)
    assert arr[0] == 0.0 and arr[2] == 0.0 and arr[1] == pytest.approx(val)
    with pytest.raises(ValueError):
        double_poisson_pmf(5, -1.0, 1.0)


def test_rounded_gaussian_zero_cell_absorbs_negatives():
    dist = ScoreDistribution("rounded_gaussian", 0.2, 4.0)
    p = dist.pmf_grid()
    from scipy.stats import norm

    assert p[0] == pytest.approx(norm.cdf((0.5 - 0.2) / 2.0))
    assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_sample_matches_pmf():
    dist = ScoreDistribution("double_poisson", 25.0, 0.74)
    rng = np.random.default_rng(0)
    draws = sample(dist, rng, size=200_000)
    p = dist.pmf_grid()
    k = np.arange(len(p))
    assert draws.mean() == pytest.approx(float(k @ p), abs=0.05)
    assert np.all(draws >= 0)
    # scalar form
    assert isinstance(sample(dist, np.random.default_rng(1)), int)


def test_sample_rounded_gaussian_clamps():
    dist = ScoreDistribution("rounded_gaussian", 0.0, 25.0)
    draws = sample(dist, np.random.default_rng(2), size=10_000)
    assert draws.min() == 0
    assert draws.dtype == np.int64


def test_outcome_probs_brute_force():
    d1 = ScoreDistribution("poisson", 27.0)
    d2 = ScoreDistribution("double_poisson", 24.0, 0.8)
    probs = outcome_probs(d1, d2)
    p1 = d1.pmf_grid(4.0)
    p2 = d2.pmf_grid(4.0)
    win = sum(
        p1[i] * p2[j] for i in range(len(p1)) for j in range(len(p2)) if i > j
    )
    draw = sum(p1[i] * p2[i] for i in range(min(len(p1), len(p2))))
    assert probs.win == pytest.approx(win, abs=1e-9)
    assert probs.draw == pytest.approx(draw, abs=1e-9)
    assert probs.win + probs.draw + probs.loss == pytest.approx(1.0, abs=1e-12)


def test_outcome_probs_symmetry():
    d = ScoreDistribution("poisson", 26.0)
    probs = outcome_probs(d, d)
    assert probs.win == pytest.approx(probs.loss, abs=1e-12)


def test_estimate_dispersion_poisson_data():
    fit = zero_coef_fit("poisson", intercept=np.log(27.0))
    rng = np.random.default_rng(3)
    X = np.zeros((5000, 22))
    y = rng.poisson(27.0, size=5000).astype(float)
    phi = estimate_dispersion(fit, X, y)
    assert 0.93 < phi < 1.07
    with pytest.raises(ValueError, match="exceed"):
        estimate_dispersion(fit, X[:1], y[:1])
