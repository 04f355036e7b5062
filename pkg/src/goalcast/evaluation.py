"""Leave-one-tournament-out comparison of score-prediction methods.

Each method fits on all tournaments but one, predicts the held-out one,
and is scored with five measures: multinomial likelihood, classification
rate, rank probability score, and the squared errors on goals and goal
differences. Bookmaker odds, converted to probabilities by normalized
reciprocals, serve as a benchmark on the ordinal measures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import glm
from .counts import OutcomeProbs, ScoreDistribution, outcome_probs
from .design import build_design, split_usable, standardize, to_matrix

OUTCOMES = ("win", "draw", "loss")

#: All eight model variants of the comparison: four families at both
#: lambda rules. "dpoisson" shares the Poisson fit but simulates scores
#: from the double Poisson at the estimated dispersion.
METHOD_FAMILIES = ("poisson", "dpoisson", "negbin", "gaussian")


@dataclass(frozen=True)
class MethodSpec:
    family: str  # gaussian | poisson | dpoisson | negbin
    lambda_rule: str  # min | 1se

    @property
    def name(self) -> str:
        return self.family if self.lambda_rule == "min" else f"{self.family}_1se"

    @property
    def fit_family(self) -> str:
        # the double-Poisson method reuses the plain Poisson fit
        return "poisson" if self.family == "dpoisson" else self.family


def default_methods() -> list[MethodSpec]:
    return [MethodSpec(f, rule) for f in METHOD_FAMILIES for rule in ("min", "1se")]


def match_outcome(goals_a: int, goals_b: int) -> str:
    if goals_a > goals_b:
        return "win"
    if goals_a == goals_b:
        return "draw"
    return "loss"


def multinomial_likelihood(probs: OutcomeProbs, outcome: str) -> float:
    """Probability the forecast assigned to the realized outcome."""
    return float(getattr(probs, outcome))


def classification_indicator(probs: OutcomeProbs, outcome: str) -> int:
    """1 iff the modal forecast category matches the outcome.

    Exact ties resolve in the fixed order win > draw > loss (argmax keeps
    the first maximum).
    """
    modal = OUTCOMES[int(np.argmax(probs.as_array()))]
    return int(modal == outcome)


def rps(probs: OutcomeProbs, outcome: str) -> float:
    """Rank probability score over the ordered categories win < draw < loss."""
    p = probs.as_array()
    o = np.zeros(3)
    o[OUTCOMES.index(outcome)] = 1.0
    cp = np.cumsum(p)
    co = np.cumsum(o)
    return float(np.sum((cp[:-1] - co[:-1]) ** 2) / 2.0)


def squared_goal_errors(pred_a, pred_b, obs_a, obs_b) -> tuple[float, float]:
    """((per-team squared goal error, averaged), squared goal-difference error)."""
    goal = ((obs_a - pred_a) ** 2 + (obs_b - pred_b) ** 2) / 2.0
    diff = ((obs_a - obs_b) - (pred_a - pred_b)) ** 2
    return float(goal), float(diff)


def odds_to_probs(odds) -> OutcomeProbs:
    """Normalized reciprocal odds, removing the bookmaker's margin."""
    odds = np.asarray(odds, dtype=float)
    if odds.shape != (3,) or np.any(odds <= 1.0):
        raise ValueError("need three odds, each > 1")
    inv = 1.0 / odds
    p = inv / inv.sum()
    return OutcomeProbs(*p)


def score_distribution_for(method: MethodSpec, fit: glm.ModelFit, mean: float) -> ScoreDistribution:
    """The predictive score distribution of a method at a given mean."""
    if method.family == "gaussian":
        return ScoreDistribution("rounded_gaussian", mean, fit.sigma2_hat)
    if method.family == "poisson":
        return ScoreDistribution("poisson", mean)
    if method.family == "dpoisson":
        return ScoreDistribution("double_poisson", mean, fit.phi_hat)
    return ScoreDistribution("negbin", mean, fit.family.nb_theta)


@dataclass
class EvaluationReport:
    """Aggregated method comparison plus per-match records for audit."""

    summary: pd.DataFrame
    records: pd.DataFrame
    training_fingerprints: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def to_text(self) -> str:
        cols = ["multinomial", "class_rate", "rps", "goals", "goal_difference"]
        return self.summary.to_string(
            columns=[c for c in cols if c in self.summary.columns],
            float_format=lambda v: f"{v:.4f}",
            na_rep="-",
        )


def leave_one_tournament_out(
    covs,
    matches,
    methods=None,
    odds=None,
    cv_seed: int = 0,
    k: int = 10,
    n_lambda: int = glm.N_LAMBDA_DEFAULT,
) -> EvaluationReport:
    """Run the full out-of-tournament comparison.

    odds, if given, maps (tournament_id, team_a, team_b) to three-way odds
    and adds a benchmark row scored on the ordinal measures only.
    """
    if methods is None:
        methods = default_methods()
    tournaments = sorted({m.tournament_id for m in matches})
    if len(tournaments) < 2:
        raise ValueError("need at least 2 tournaments for the protocol")

    records = []
    fingerprints = {}
    failures = []
    for held_out in tournaments:
        train_matches = [m for m in matches if m.tournament_id != held_out]
        test_matches = [m for m in matches if m.tournament_id == held_out]
        rows = build_design(covs, train_matches)
        rows_std, scaling = standardize(rows)
        triple = to_matrix(rows_std)
        fingerprints[held_out] = frozenset(r.tournament_id for r in rows)
        assert held_out not in fingerprints[held_out]

        # one underlying fit per (family, rule); dpoisson reuses poisson's
        fits = {}
        for spec in methods:
            key = (spec.fit_family, spec.lambda_rule)
            if key in fits:
                continue
            try:
                fits[key] = glm.fit_model(
                    triple, scaling, spec.fit_family, spec.lambda_rule,
                    k=k, seed=cv_seed, n_lambda=n_lambda,
                )
            except Exception as e:  # noqa: BLE001 - a failed method must not sink the rest
                fits[key] = None
                failures.append((spec.fit_family, spec.lambda_rule, held_out, str(e)))

        test_usable, _ = split_usable(covs, test_matches)
        test_rows = build_design(covs, test_usable)
        for mi, match in enumerate(test_usable):
            row_a, row_b = test_rows[2 * mi], test_rows[2 * mi + 1]
            outcome = match_outcome(match.goals_a, match.goals_b)
            for spec in methods:
                fit = fits[(spec.fit_family, spec.lambda_rule)]
                if fit is None:
                    continue
                mean_a = glm.predict_mean(fit, scaling.transform_row(row_a))
                mean_b = glm.predict_mean(fit, scaling.transform_row(row_b))
                dist_a = score_distribution_for(spec, fit, mean_a)
                dist_b = score_distribution_for(spec, fit, mean_b)
                probs = outcome_probs(dist_a, dist_b)
                goal_err, diff_err = squared_goal_errors(
                    mean_a, mean_b, match.goals_a, match.goals_b
                )
                records.append(
                    {
                        "method": spec.name,
                        "tournament_id": held_out,
                        "team_a": match.team_a,
                        "team_b": match.team_b,
                        "p_win": probs.win,
                        "p_draw": probs.draw,
                        "p_loss": probs.loss,
                        "outcome": outcome,
                        "multinomial": multinomial_likelihood(probs, outcome),
                        "classified": classification_indicator(probs, outcome),
                        "rps": rps(probs, outcome),
                        "goals": goal_err,
                        "goal_difference": diff_err,
                    }
                )
            if odds is not None:
                key = (match.tournament_id, match.team_a, match.team_b)
                if key in odds:
                    probs = odds_to_probs(odds[key])
                    records.append(
                        {
                            "method": "odds",
                            "tournament_id": held_out,
                            "team_a": match.team_a,
                            "team_b": match.team_b,
                            "p_win": probs.win,
                            "p_draw": probs.draw,
                            "p_loss": probs.loss,
                            "outcome": outcome,
                            "multinomial": multinomial_likelihood(probs, outcome),
                            "classified": classification_indicator(probs, outcome),
                            "rps": rps(probs, outcome),
                            "goals": np.nan,
                            "goal_difference": np.nan,
                        }
                    )

    rec = pd.DataFrame.from_records(records)
    order = [m.name for m in methods] + (["odds"] if odds is not None else [])
    summary = (
        rec.groupby("method")
        .agg(
            multinomial=("multinomial", "mean"),
            class_rate=("classified", "mean"),
            rps=("rps", "mean"),
            goals=("goals", "mean"),
            goal_difference=("goal_difference", "mean"),
            n_matches=("rps", "size"),
        )
        .reindex([m for m in order if m in rec["method"].values])
    )
    return EvaluationReport(summary, rec, fingerprints, failures)


def read_odds_csv(path) -> dict:
    """Read odds.csv into {(tournament_id, team_a, team_b): (w, d, l)}."""
    df = pd.read_csv(path)
    return {
        (int(r["tournament_id"]), str(r["team_a"]), str(r["team_b"])): (
            float(r["odds_win"]),
            float(r["odds_draw"]),
            float(r["odds_loss"]),
        )
        for _, r in df.iterrows()
    }
