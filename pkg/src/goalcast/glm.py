"""L1-penalized regression over a geometric lambda path.

Gaussian fits use plain coordinate descent on the squared-error objective;
Poisson and negative binomial fits use iteratively reweighted least squares
with an inner coordinate-descent solve on the working response. The path
runs from lambda_max (empty active set) downward with warm starts. Lambda
selection is by match-level 10-fold cross-validation, exposing both the
CV-minimum and the one-standard-error solution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, xlogy

from .design import FEATURE_NAMES, ScalingInfo, to_matrix

N_LAMBDA_DEFAULT = 100
LAMBDA_MIN_RATIO = 1e-3
TOL = 1e-7
MAX_SWEEPS = 100_000
MAX_IRLS = 500
NB_THETA_CAP = 1e6
NB_THETA_FLOOR = 1e-3
ETA_MAX = 30.0  # exp overflow guard on the log link

FAMILY_KINDS = ("gaussian", "poisson", "negbin")


class ConvergenceError(RuntimeError):
    """Raised when a path point fails to converge; carries the lambda index."""

    def __init__(self, lambda_index: int, message: str):
        super().__init__(message)
        self.lambda_index = lambda_index


@dataclass(frozen=True)
class Family:
    kind: str
    nb_theta: float | None = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "negbin":
            if self.nb_theta is None or self.nb_theta <= 0:
                raise ValueError("negbin requires nb_theta > 0")


def soft_threshold(z, gamma):
    """sign(z) * max(|z| - gamma, 0); the scalar lasso update."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("gamma must be non-negative")
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


@njit(cache=True)
def _cd_kernel(G, c, theta, lam, col_norm, tol, max_sweeps):
    """Coordinate descent on (1/2) theta'G theta - c'theta + lam ||theta||_1.

    Covariance-form updates: the gradient vector q = G theta is maintained
    incrementally so each coordinate costs O(p). Returns the sweep count,
    or -1 if the budget is exhausted.
    """
    p = theta.shape[0]
    q = G @ theta
    sweeps = 0
    while sweeps < max_sweeps:
        delta = 0.0
        for v in range(p):
            if col_norm[v] <= 0.0:
                continue
            old = theta[v]
            rho = c[v] - q[v] + col_norm[v] * old
            mag = abs(rho) - lam
            new = (mag / col_norm[v]) * (1.0 if rho > 0.0 else -1.0) if mag > 0.0 else 0.0
            d = new - old
            if d != 0.0:
                theta[v] = new
                q += G[:, v] * d
                if abs(d) > delta:
                    delta = abs(d)
        sweeps += 1
        if delta < tol:
            return sweeps
    return -1


def _cd_weighted_lasso(X, z, w, lam, beta0, theta, tol=TOL, max_sweeps=MAX_SWEEPS):
    """Minimize (1/2n) sum_i w_i (z_i - b0 - x_i.theta)^2 + lam * ||theta||_1.

    theta is updated in place; returns (beta0, sweeps used). Columns are
    centered against the weights internally: the intercept is unpenalized,
    so the solution is unchanged and the intercept has a closed form.
    """
    n = X.shape[0]
    wsum = w.sum()
    col_mean = (w @ X) / wsum
    Xc = X - col_mean
    WXc = Xc * w[:, None]
    G = (WXc.T @ Xc) / n
    col_norm = np.ascontiguousarray(np.diag(G))
    b0c = float((w @ z) / wsum)
    c = (WXc.T @ z) / n
    sweeps = _cd_kernel(G, c, theta, lam, col_norm, tol, float(max_sweeps))
    if sweeps < 0:
        raise ConvergenceError(-1, f"coordinate descent: no convergence in {max_sweeps} sweeps")
    return b0c - float(col_mean @ theta), sweeps


def _mu_from_eta(eta):
    return np.exp(np.clip(eta, -ETA_MAX, ETA_MAX))


def _irls_weights(kind, y, eta, nb_theta):
    mu = _mu_from_eta(eta)
    if kind == "poisson":
        w = mu
    else:
        w = mu * nb_theta / (nb_theta + mu)
    z = eta + (y - mu) / mu
    return w, z


def score_residual(kind, y, eta, nb_theta=None):
    """d loglik / d eta per observation; X.T @ s / n is the score vector."""
    if kind == "gaussian":
        return y - eta
    mu = _mu_from_eta(eta)
    if kind == "poisson":
        return y - mu
    return (y - mu) * nb_theta / (nb_theta + mu)


def neg_log_likelihood(kind, y, eta, nb_theta=None):
    """Negative log-likelihood (gaussian: least-squares working version)."""
    if kind == "gaussian":
        return 0.5 * np.sum((y - eta) ** 2)
    mu = _mu_from_eta(eta)
    if kind == "poisson":
        return np.sum(mu - y * np.log(mu) + gammaln(y + 1))
    th = nb_theta
    ll = (
        gammaln(y + th)
        - gammaln(th)
        - gammaln(y + 1)
        + th * np.log(th / (th + mu))
        + xlogy(y, mu / (th + mu))
    )
    return -np.sum(ll)


def penalized_objective(X, y, family: Family, beta0, theta, lam):
    """(1/n) negative log-likelihood + lam * ||theta||_1 (intercept unpenalized)."""
    eta = beta0 + X @ theta
    n = len(y)
    return neg_log_likelihood(family.kind, y, eta, family.nb_theta) / n + lam * np.sum(
        np.abs(theta)
    )


def deviance(kind, y, mu, nb_theta=None):
    """Per-observation deviance used as the CV loss."""
    if kind == "gaussian":
        return (y - mu) ** 2
    if kind == "poisson":
        return 2.0 * (xlogy(y, y / np.maximum(mu, 1e-300)) - (y - mu))
    th = nb_theta
    return 2.0 * (
        xlogy(y, y / np.maximum(mu, 1e-300)) - (y + th) * np.log((y + th) / (mu + th))
    )


def lambda_max(X, y, family: Family):
    """Smallest lambda whose solution is the intercept-only fit."""
    n = len(y)
    mu0 = y.mean()
    if family.kind == "gaussian":
        s = y - mu0
    elif family.kind == "poisson":
        s = y - mu0
    else:
        s = (y - mu0) * family.nb_theta / (family.nb_theta + mu0)
    return float(np.max(np.abs(X.T @ s)) / n)


def make_lambda_path(lam_max, n_lambda=N_LAMBDA_DEFAULT, min_ratio=LAMBDA_MIN_RATIO):
    if n_lambda < 10:
        raise ValueError("n_lambda must be >= 10")
    if lam_max <= 0:
        lam_max = 1.0
    return np.geomspace(lam_max, lam_max * min_ratio, n_lambda)


@dataclass
class PathResult:
    family: Family
    lambda_path: np.ndarray
    intercepts: np.ndarray  # (n_lambda,)
    coefs: np.ndarray  # (n_lambda, p)
    nb_thetas: np.ndarray | None = None  # per-lambda estimates (negbin only)
    poisson_equivalent: bool = False


def _check_glm_inputs(y, family: Family):
    if family.kind in ("poisson", "negbin") and np.any(y < 0):
        raise ValueError("negative responses are invalid under a count family")


def _fit_one(X, y, family: Family, lam, beta0, theta, lam_index, tol=TOL):
    """Solve one path point in place; returns the new intercept."""
    if family.kind == "gaussian":
        beta0, _ = _cd_weighted_lasso(X, y, np.ones(len(y)), lam, beta0, theta, tol=tol)
        return beta0
    for _ in range(MAX_IRLS):
        eta = beta0 + X @ theta
        w, z = _irls_weights(family.kind, y, eta, family.nb_theta)
        old0, old = beta0, theta.copy()
        try:
            beta0, _ = _cd_weighted_lasso(X, z, w, lam, beta0, theta, tol=tol)
        except ConvergenceError as e:
            raise ConvergenceError(lam_index, str(e)) from None
        change = max(abs(beta0 - old0), float(np.max(np.abs(theta - old), initial=0.0)))
        if change < tol * 10:
            return beta0
    raise ConvergenceError(lam_index, f"IRLS did not converge at lambda index {lam_index}")


def fit_path(
    X, y, family: Family, n_lambda=N_LAMBDA_DEFAULT, lambda_path=None, tol=TOL
) -> PathResult:
    """Fit the full lambda path with warm starts.

    For the negbin family the size parameter is held fixed at
    family.nb_theta; use fit_negbin_path to estimate it jointly.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_glm_inputs(y, family)
    if len(np.unique(y)) < 2:
        raise ValueError("need at least 2 distinct response values")
    if lambda_path is None:
        lambda_path = make_lambda_path(lambda_max(X, y, family), n_lambda)
    n_l, p = len(lambda_path), X.shape[1]
    intercepts = np.empty(n_l)
    coefs = np.empty((n_l, p))
    beta0 = y.mean() if family.kind == "gaussian" else float(np.log(y.mean()))
    theta = np.zeros(p)
    for i, lam in enumerate(lambda_path):
        beta0 = _fit_one(X, y, family, lam, beta0, theta, i, tol=tol)
        intercepts[i] = beta0
        coefs[i] = theta
    return PathResult(family, np.asarray(lambda_path, dtype=float), intercepts, coefs)


def _nb_theta_mle(y, mu, lo=NB_THETA_FLOOR, hi=NB_THETA_CAP, guess=None):
    """Univariate ML update of the negbin size parameter given the means.

    With a warm-start guess the search is confined to a window around it,
    widened back to the full range if the optimum lands on a window edge.
    """
    log_mu = np.log(mu)

    def nll(log_th):
        return neg_log_likelihood("negbin", y, log_mu, np.exp(log_th))

    log_lo, log_hi = np.log(lo), np.log(hi)
    if guess is not None:
        g = np.clip(np.log(guess), log_lo, log_hi)
        wlo, whi = max(g - 2.0, log_lo), min(g + 2.0, log_hi)
        res = minimize_scalar(
            nll, bounds=(wlo, whi), method="bounded", options={"xatol": 1e-8}
        )
        on_inner_edge = (res.x < wlo + 1e-6 and wlo > log_lo) or (
            res.x > whi - 1e-6 and whi < log_hi
        )
        if not on_inner_edge:
            return float(np.exp(res.x))
    res = minimize_scalar(
        nll, bounds=(log_lo, log_hi), method="bounded", options={"xatol": 1e-8}
    )
    return float(np.exp(res.x))


def fit_negbin_path(
    X, y, n_lambda=N_LAMBDA_DEFAULT, lambda_path=None, tol=TOL
) -> PathResult:
    """Negbin path alternating penalized IRLS and the size-parameter MLE.

    A size estimate hitting the cap is reported as Poisson-equivalent
    (no overdispersion detected), not as an error.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_glm_inputs(y, family=Family("poisson"))
    if len(np.unique(y)) < 2:
        # Degenerate: zero response variance, intercept-only fit.
        path = make_lambda_path(1.0, n_lambda) if lambda_path is None else lambda_path
        n_l, p = len(path), X.shape[1]
        return PathResult(
            Family("negbin", NB_THETA_CAP),
            np.asarray(path, dtype=float),
            np.full(n_l, np.log(max(y.mean(), 1e-12))),
            np.zeros((n_l, p)),
            nb_thetas=np.full(n_l, NB_THETA_CAP),
            poisson_equivalent=True,
        )
    nb_theta = 10.0
    if lambda_path is None:
        lambda_path = make_lambda_path(lambda_max(X, y, Family("negbin", nb_theta)), n_lambda)
    n_l, p = len(lambda_path), X.shape[1]
    intercepts = np.empty(n_l)
    coefs = np.empty((n_l, p))
    thetas = np.empty(n_l)
    beta0 = float(np.log(y.mean()))
    theta = np.zeros(p)
    for i, lam in enumerate(lambda_path):
        for _ in range(30):
            fam = Family("negbin", nb_theta)
            beta0 = _fit_one(X, y, fam, lam, beta0, theta, i, tol=tol)
            mu = _mu_from_eta(beta0 + X @ theta)
            new_theta = _nb_theta_mle(y, mu, guess=nb_theta)
            # The profile likelihood is flat near the cap, where the bounded
            # optimizer jitters more than the tolerance; call that converged.
            pegged = min(new_theta, nb_theta) >= NB_THETA_CAP * 0.99
            done = pegged or abs(np.log(new_theta) - np.log(nb_theta)) < 1e-5
            nb_theta = new_theta
            if done:
                break
        intercepts[i] = beta0
        coefs[i] = theta
        thetas[i] = nb_theta
    return PathResult(
        Family("negbin", float(thetas[-1])),
        np.asarray(lambda_path, dtype=float),
        intercepts,
        coefs,
        nb_thetas=thetas,
        poisson_equivalent=bool(np.median(thetas) >= NB_THETA_CAP * 0.99),
    )


@dataclass
class CVResult:
    lambda_path: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    lambda_min: float
    lambda_1se: float
    index_min: int
    index_1se: int


def assign_folds(match_ids, k, seed):
    """Match-level fold assignment: both mirror rows share a fold."""
    if k < 2:
        raise ValueError("k must be >= 2")
    match_ids = np.asarray(match_ids)
    unique = np.unique(match_ids)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(unique)
    fold_of_match = {m: f % k for f, m in enumerate(perm)}
    return np.array([fold_of_match[m] for m in match_ids])


def cross_validate(
    X, y, match_ids, family: Family, k=10, seed=0, n_lambda=N_LAMBDA_DEFAULT,
    estimate_nb_theta=False, fold_tol=1e-5,
) -> CVResult:
    """Match-level k-fold CV of held-out deviance along a shared lambda path."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    folds = assign_folds(match_ids, k, seed)
    if family.kind == "negbin" and estimate_nb_theta:
        full = fit_negbin_path(X, y, n_lambda)
    else:
        full = fit_path(X, y, family, n_lambda)
    path = full.lambda_path
    fold_dev = np.empty((k, len(path)))
    for f in range(k):
        test = folds == f
        train = ~test
        if test.sum() < 2:
            raise ValueError(f"fold {f} has fewer than 2 observations")
        if family.kind == "negbin" and estimate_nb_theta:
            pr = fit_negbin_path(X[train], y[train], lambda_path=path, tol=fold_tol)
        else:
            pr = fit_path(X[train], y[train], family, lambda_path=path, tol=fold_tol)
        eta = pr.intercepts[None, :] + X[test] @ pr.coefs.T  # (n_test, n_lambda)
        for i in range(len(path)):
            mu = eta[:, i] if family.kind == "gaussian" else _mu_from_eta(eta[:, i])
            th = pr.nb_thetas[i] if pr.nb_thetas is not None else family.nb_theta
            fold_dev[f, i] = deviance(family.kind, y[test], mu, th).mean()
    cv_mean = fold_dev.mean(axis=0)
    cv_se = fold_dev.std(axis=0, ddof=1) / np.sqrt(k)
    i_min = int(np.argmin(cv_mean))
    threshold = cv_mean[i_min] + cv_se[i_min]
    i_1se = int(np.flatnonzero(cv_mean <= threshold)[0])  # path is decreasing
    return CVResult(
        path, cv_mean, cv_se, float(path[i_min]), float(path[i_1se]), i_min, i_1se
    )


@dataclass
class ModelFit:
    """A fitted model at a selected lambda, with path diagnostics attached."""

    family: Family
    intercept: float
    coefficients: np.ndarray
    feature_names: list[str]
    lambda_path: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    lambda_min: float
    lambda_1se: float
    lambda_rule: str
    scaling: ScalingInfo | None = None
    sigma2_hat: float | None = None
    phi_hat: float | None = None
    poisson_equivalent: bool = False

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.coefficients))

    def linear_predictor(self, features) -> float:
        return float(self.intercept + np.dot(features, self.coefficients))

    def to_dict(self) -> dict:
        return {
            "family": self.family.kind,
            "nb_theta": self.family.nb_theta,
            "intercept": self.intercept,
            "coefficients": dict(zip(self.feature_names, self.coefficients.tolist())),
            "lambda_path": self.lambda_path.tolist(),
            "cv_mean": self.cv_mean.tolist(),
            "cv_se": self.cv_se.tolist(),
            "lambda_min": self.lambda_min,
            "lambda_1se": self.lambda_1se,
            "lambda_rule": self.lambda_rule,
            "sigma2_hat": self.sigma2_hat,
            "phi_hat": self.phi_hat,
            "poisson_equivalent": self.poisson_equivalent,
            "scaling": self.scaling.to_dict() if self.scaling else None,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFit":
        names = list(d["coefficients"].keys())
        return cls(
            family=Family(d["family"], d.get("nb_theta")),
            intercept=float(d["intercept"]),
            coefficients=np.array([d["coefficients"][n] for n in names], dtype=float),
            feature_names=names,
            lambda_path=np.asarray(d["lambda_path"], dtype=float),
            cv_mean=np.asarray(d["cv_mean"], dtype=float),
            cv_se=np.asarray(d["cv_se"], dtype=float),
            lambda_min=float(d["lambda_min"]),
            lambda_1se=float(d["lambda_1se"]),
            lambda_rule=d["lambda_rule"],
            scaling=ScalingInfo.from_dict(d["scaling"]) if d.get("scaling") else None,
            sigma2_hat=d.get("sigma2_hat"),
            phi_hat=d.get("phi_hat"),
            poisson_equivalent=bool(d.get("poisson_equivalent", False)),
        )

    @classmethod
    def from_json(cls, s: str) -> "ModelFit":
        return cls.from_dict(json.loads(s))


def predict_mean(fit: ModelFit, row) -> float:
    """Expected goals for one standardized design row (or feature vector)."""
    features = row.features() if hasattr(row, "features") else np.asarray(row, dtype=float)
    eta = fit.linear_predictor(features)
    if fit.family.kind == "gaussian":
        return eta
    return float(np.exp(np.clip(eta, -ETA_MAX, ETA_MAX)))


def predict_mean_raw(fit: ModelFit, raw_features) -> float:
    """Expected goals for an unstandardized feature vector."""
    if fit.scaling is None:
        raise ValueError("fit carries no scaling info")
    return predict_mean(fit, fit.scaling.transform(raw_features))


def fit_model(
    rows_std,
    scaling: ScalingInfo | None,
    family_kind: str,
    lambda_rule: str = "min",
    k: int = 10,
    seed: int = 0,
    n_lambda: int = N_LAMBDA_DEFAULT,
) -> ModelFit:
    """CV-select lambda and return the fit at the chosen rule.

    rows_std may be a list of standardized DesignRow (mirror pairs adjacent)
    or a prebuilt (X, y, match_ids) triple.
    """
    if lambda_rule not in ("min", "1se"):
        raise ValueError(f"unknown lambda rule {lambda_rule!r}")
    if isinstance(rows_std, tuple):
        X, y, match_ids = rows_std
    else:
        X, y, match_ids = to_matrix(rows_std)
    estimate_nb = family_kind == "negbin"
    family = Family(family_kind, 10.0 if estimate_nb else None)
    cv = cross_validate(
        X, y, match_ids, family, k=k, seed=seed, n_lambda=n_lambda,
        estimate_nb_theta=estimate_nb,
    )
    if estimate_nb:
        full = fit_negbin_path(X, y, lambda_path=cv.lambda_path)
    else:
        full = fit_path(X, y, family, lambda_path=cv.lambda_path)
    idx = cv.index_min if lambda_rule == "min" else cv.index_1se
    coef = full.coefs[idx].copy()
    intercept = float(full.intercepts[idx])
    if estimate_nb:
        family = Family("negbin", float(full.nb_thetas[idx]))
    fit = ModelFit(
        family=family,
        intercept=intercept,
        coefficients=coef,
        feature_names=list(FEATURE_NAMES) if scaling is None else list(scaling.feature_names),
        lambda_path=cv.lambda_path,
        cv_mean=cv.cv_mean,
        cv_se=cv.cv_se,
        lambda_min=cv.lambda_min,
        lambda_1se=cv.lambda_1se,
        lambda_rule=lambda_rule,
        scaling=scaling,
        poisson_equivalent=full.poisson_equivalent,
    )
    df = fit.n_active + 1
    n = len(y)
    eta = intercept + X @ coef
    if family.kind == "gaussian":
        if n > df:
            fit.sigma2_hat = float(np.sum((y - eta) ** 2) / (n - df))
    else:
        from .counts import estimate_dispersion

        if n > df:
            fit.phi_hat = estimate_dispersion(fit, X, y)
    return fit


def kkt_violation(X, y, family: Family, intercept, coef, lam) -> float:
    """Worst-case violation of the stationarity conditions at (intercept, coef).

    Active coordinates must have |score| = lam; inactive ones |score| <= lam;
    the intercept score must vanish.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    eta = intercept + X @ coef
    s = score_residual(family.kind, y, eta, family.nb_theta)
    g = X.T @ s / n
    viol = abs(s.mean())
    for v in range(X.shape[1]):
        if coef[v] != 0.0:
            viol = max(viol, abs(abs(g[v]) - lam))
        else:
            viol = max(viol, max(abs(g[v]) - lam, 0.0))
    return float(viol)
