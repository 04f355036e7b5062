import numpy as np
import pytest

from goalcast import design, glm, synthetic


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture")
    synthetic.make_fixture(out, seed=0)
    return out


@pytest.fixture(scope="session")
def fixture_data(fixture_dir):
    covs = design.read_covariates_csv(fixture_dir / "covariates.csv")
    matches = design.read_matches_csv(fixture_dir / "matches.csv")
    return covs, matches


@pytest.fixture(scope="session")
def standardized_rows(fixture_data):
    covs, matches = fixture_data
    rows = design.build_design(covs, matches)
    return design.standardize(rows)


@pytest.fixture(scope="session")
def gaussian_fit(standardized_rows):
    rows_std, scaling = standardized_rows
    return glm.fit_model(rows_std, scaling, "gaussian", "min", seed=0)


@pytest.fixture(scope="session")
def poisson_fit(standardized_rows):
    rows_std, scaling = standardized_rows
    return glm.fit_model(rows_std, scaling, "poisson", "min", seed=0)


def make_covariates(team_id, tournament_id=2019, **overrides):
    """A plausible covariate row for hand-built scenarios."""
    base = dict(
        tournament_id=tournament_id,
        team_id=team_id,
        gdp_ratio=1.0,
        population_ratio=0.01,
        oddset_prob=0.05,
        ihf_rank=10,
        ihf_points=400.0,
        host=False,
        europe=True,
        same_confed_as_host=False,
        max_teammates=3.0,
        sec_max_teammates=2.0,
        age_deviation=1.0,
        avg_height=1.9,
        cl_semifinalists=1.0,
        ehf_cup_semifinalists=1.0,
        legionnaires=8.0,
        coach_age=50.0,
        coach_tenure=4.0,
        coach_same_nationality=True,
        squad_size=16,
    )
    base.update(overrides)
    return design.TeamCovariates(**base)


def zero_coef_fit(family_kind, intercept, sigma2=None, phi=None, nb_theta=None):
    """A ModelFit with no active covariates, for controlled simulations."""
    p = len(design.FEATURE_NAMES)
    path = np.geomspace(1.0, 1e-3, 10)
    scaling = design.ScalingInfo(
        list(design.FEATURE_NAMES), np.zeros(p), np.ones(p)
    )
    return glm.ModelFit(
        family=glm.Family(family_kind, nb_theta),
        intercept=intercept,
        coefficients=np.zeros(p),
        feature_names=list(design.FEATURE_NAMES),
        lambda_path=path,
        cv_mean=np.ones(10),
        cv_se=np.ones(10) * 0.1,
        lambda_min=float(path[-1]),
        lambda_1se=float(path[0]),
        lambda_rule="min",
        scaling=scaling,
        sigma2_hat=sigma2,
        phi_hat=phi,
    )
