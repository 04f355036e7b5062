"""Discrete score distributions and dispersion estimation.

Provides the four sampling families used for match simulation (Poisson,
underdispersed double Poisson, negative binomial, rounded Gaussian), the
Pearson-residual dispersion estimate, and exact win/draw/loss probabilities
for two independent score distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy
from scipy.stats import nbinom, norm, poisson

DIST_KINDS = ("poisson", "double_poisson", "negbin", "rounded_gaussian")

_pmf_cache: dict = {}


@dataclass(frozen=True)
class OutcomeProbs:
    """Win/draw/loss probabilities for one match, first-named team first."""

    win: float
    draw: float
    loss: float

    def __post_init__(self):
        total = self.win + self.draw + self.loss
        if not np.isclose(total, 1.0, atol=1e-6):
            raise ValueError(f"probabilities sum to {total}, not 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.win, self.draw, self.loss])


@dataclass(frozen=True)
class ScoreDistribution:
    """A non-negative integer score distribution.

    dispersion is phi for double_poisson (Var = phi * mean), sigma^2 for
    rounded_gaussian, the size parameter for negbin, and unused for poisson.
    """

    kind: str
    mean: float
    dispersion: float = 1.0

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.mean <= 0 and self.kind != "rounded_gaussian":
            raise ValueError("mean must be positive")
        if self.dispersion <= 0:
            raise ValueError("dispersion must be positive")

    def variance(self) -> float:
        if self.kind == "poisson":
            return self.mean
        if self.kind == "double_poisson":
            return self.dispersion * self.mean
        if self.kind == "negbin":
            return self.mean + self.mean**2 / self.dispersion
        return self.dispersion

    def support_cap(self, widen: float = 1.0) -> int:
        # mean + 20 sd leaves tail mass far below 1e-9 at handball scales
        return int(np.ceil(max(self.mean, 0.0) + 20.0 * widen * np.sqrt(self.variance()))) + 1

    def pmf_grid(self, widen: float = 1.0) -> np.ndarray:
        """pmf over 0..K; the rounded_gaussian cell g collects the mass of
        (g-0.5, g+0.5), with everything below 0.5 absorbed into g = 0."""
        key = (self.kind, self.mean, self.dispersion, widen)
        hit = _pmf_cache.get(key)
        if hit is not None:
            return hit
        k = np.arange(self.support_cap(widen) + 1)
        if self.kind == "poisson":
            p = poisson.pmf(k, self.mean)
        elif self.kind == "negbin":
            th = self.dispersion
            p = nbinom.pmf(k, th, th / (th + self.mean))
        elif self.kind == "double_poisson":
            p = _double_poisson_grid(self.mean, 1.0 / self.dispersion, k)
        else:
            sd = np.sqrt(self.dispersion)
            upper = norm.cdf((k + 0.5 - self.mean) / sd)
            lower = norm.cdf((k - 0.5 - self.mean) / sd)
            p = upper - lower
            p[0] = upper[0]  # clamp all mass below 0.5 into zero goals
        if len(_pmf_cache) > 4096:
            _pmf_cache.clear()
        _pmf_cache[key] = p
        return p


def _double_poisson_grid(mean, theta, k):
    """Normalized double-Poisson pmf over the integer grid k.

    Kernel: theta^(1/2) exp(-theta*mu) (exp(-y) y^y / y!) (e*mu/y)^(theta*y),
    normalized by explicit summation over the truncated support.
    """
    logk = (
        0.5 * np.log(theta)
        - theta * mean
        - k
        + xlogy(k, k)
        - gammaln(k + 1)
        + theta * (k + xlogy(k, mean) - xlogy(k, k))
    )
    kernel = np.exp(logk - logk.max())
    return kernel / kernel.sum()


def double_poisson_pmf(y, mean, phi_inv) -> float:
    """pmf of the double Poisson with Var = phi * mean; phi_inv = 1/phi."""
    if mean <= 0 or phi_inv <= 0:
        raise ValueError("mean and phi_inv must be positive")
    dist = ScoreDistribution("double_poisson", mean, 1.0 / phi_inv)
    grid = dist.pmf_grid()
    y = np.asarray(y)
    out = np.where((y >= 0) & (y < len(grid)), grid[np.clip(y, 0, len(grid) - 1)], 0.0)
    return float(out) if out.ndim == 0 else out


def estimate_dispersion(fit, X, y) -> float:
    """Pearson-residual dispersion: sum(r_i^2) / (N - df), V(mu) = mu.

    df is the number of nonzero coefficients plus one for the intercept.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n = len(y)
    df = int(np.count_nonzero(fit.coefficients)) + 1
    if n <= df:
        raise ValueError(f"N={n} must exceed df={df}")
    eta = fit.intercept + X @ fit.coefficients
    mu = eta if fit.family.kind == "gaussian" else np.exp(np.clip(eta, -30, 30))
    r = (y - mu) / np.sqrt(np.maximum(mu, 1e-12))
    return float(np.sum(r * r) / (n - df))


def sample(dist: ScoreDistribution, rng: np.random.Generator, size=None):
    """Draw scores; discrete families by inverse CDF, the rounded Gaussian
    by rounding a normal draw and clamping at zero."""
    if dist.kind == "rounded_gaussian":
        draws = rng.normal(dist.mean, np.sqrt(dist.dispersion), size=size)
        return np.maximum(np.rint(draws), 0.0).astype(np.int64) if size is not None else int(
            max(round(draws), 0)
        )
    cdf = np.cumsum(dist.pmf_grid())
    u = rng.random(size=size)
    out = np.searchsorted(cdf, u, side="right")
    return out if size is not None else int(out)


def outcome_probs(dist1: ScoreDistribution, dist2: ScoreDistribution) -> OutcomeProbs:
    """Exact P(G1 > G2), P(G1 = G2), P(G1 < G2) for independent scores.

    Computed by summation over the truncated grids; the grid is widened and
    the computation retried if truncation leaves more than 1e-6 of mass.
    """
    for widen in (1.0, 2.0, 4.0):
        p1 = dist1.pmf_grid(widen)
        p2 = dist2.pmf_grid(widen)
        if (1.0 - p1.sum()) > 1e-6 or (1.0 - p2.sum()) > 1e-6:
            continue
        m = max(len(p1), len(p2))
        a = np.zeros(m)
        a[: len(p1)] = p1
        b = np.zeros(m)
        b[: len(p2)] = p2
        cdf_b = np.cumsum(b)
        draw = float(np.sum(a * b))
        # P(G1 > G2) = sum_g a[g] * P(G2 <= g-1)
        win = float(np.sum(a[1:] * cdf_b[:-1]))
        loss = 1.0 - win - draw
        total = win + draw + loss
        if abs(total - 1.0) <= 1e-6:
            return OutcomeProbs(win, draw, max(loss, 0.0))
    raise RuntimeError("truncated grids leave more than 1e-6 of probability mass")
