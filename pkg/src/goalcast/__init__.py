"""Penalized score regression and tournament simulation for handball."""

__version__ = "0.1.0"

from .counts import OutcomeProbs, ScoreDistribution, estimate_dispersion, outcome_probs
from .design import (
    DesignRow,
    MatchRecord,
    ScalingInfo,
    TeamCovariates,
    build_design,
    normalize_squad_counts,
    standardize,
)
from .glm import Family, ModelFit, cross_validate, fit_model, fit_path, predict_mean
from .tournament import (
    MatchSimulator,
    SimulationSummary,
    TournamentFormat,
    monte_carlo,
    rank_group,
    simulate_tournament,
)

__all__ = [
    "DesignRow",
    "Family",
    "MatchRecord",
    "MatchSimulator",
    "ModelFit",
    "OutcomeProbs",
    "ScalingInfo",
    "ScoreDistribution",
    "SimulationSummary",
    "TeamCovariates",
    "TournamentFormat",
    "build_design",
    "cross_validate",
    "estimate_dispersion",
    "fit_model",
    "fit_path",
    "monte_carlo",
    "normalize_squad_counts",
    "outcome_probs",
    "predict_mean",
    "rank_group",
    "simulate_tournament",
    "standardize",
]
