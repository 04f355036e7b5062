"""Design-matrix construction for per-team, per-tournament score regression.

Each match yields two observations (one per team). Metric covariates enter
as differences from the first-named team's perspective; the four categorical
covariates enter as separate own/opponent dummy blocks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# Metric covariates that enter as first-named-minus-opponent differences.
METRIC_FIELDS = [
    "gdp_ratio",
    "population_ratio",
    "oddset_prob",
    "ihf_rank",
    "ihf_points",
    "max_teammates",
    "sec_max_teammates",
    "age_deviation",
    "avg_height",
    "cl_semifinalists",
    "ehf_cup_semifinalists",
    "legionnaires",
    "coach_age",
    "coach_tenure",
]

# Categoricals that become separate own/opponent dummy columns.
DUMMY_FIELDS = ["host", "europe", "same_confed_as_host", "coach_same_nationality"]

# Squad-structure counts observed on the nominated squad; rescaled for
# 15-player squads so they are comparable to the regular 16-player squads.
SQUAD_COUNT_FIELDS = [
    "max_teammates",
    "sec_max_teammates",
    "cl_semifinalists",
    "ehf_cup_semifinalists",
    "legionnaires",
]

VALID_SQUAD_SIZES = (15, 16, 20)

STAGES = ("preliminary", "main", "semifinal", "final", "placement")

#: Column order of the full feature vector: 14 metric diffs, then the four
#: own dummies, then the four opponent dummies (22 columns).
FEATURE_NAMES = (
    METRIC_FIELDS
    + [f + "_own" for f in DUMMY_FIELDS]
    + [f + "_oppo" for f in DUMMY_FIELDS]
)


@dataclass(frozen=True)
class TeamCovariates:
    """The 18 covariates observed for one team at one tournament."""

    tournament_id: int
    team_id: str
    gdp_ratio: float
    population_ratio: float
    oddset_prob: float
    ihf_rank: int
    ihf_points: float
    host: bool
    europe: bool
    same_confed_as_host: bool
    max_teammates: float
    sec_max_teammates: float
    age_deviation: float
    avg_height: float
    cl_semifinalists: float
    ehf_cup_semifinalists: float
    legionnaires: float
    coach_age: float
    coach_tenure: float
    coach_same_nationality: bool
    squad_size: int = 16

    def __post_init__(self):
        if not 0.0 < self.oddset_prob < 1.0:
            raise ValueError(f"oddset_prob must be in (0,1), got {self.oddset_prob}")
        if self.ihf_rank < 1:
            raise ValueError(f"ihf_rank must be >= 1, got {self.ihf_rank}")
        if not 1.5 < self.avg_height < 2.3:
            raise ValueError(f"avg_height implausible: {self.avg_height}")
        if self.age_deviation < 0:
            raise ValueError("age_deviation must be non-negative")
        for name in SQUAD_COUNT_FIELDS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class MatchRecord:
    """Final score of one match between two distinct teams."""

    tournament_id: int
    team_a: str
    team_b: str
    goals_a: int
    goals_b: int
    stage: str = "preliminary"

    def __post_init__(self):
        if self.team_a == self.team_b:
            raise ValueError(f"a team cannot play itself: {self.team_a}")
        if self.goals_a < 0 or self.goals_b < 0:
            raise ValueError("goals must be non-negative")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass(frozen=True)
class DesignRow:
    """One observation: a team's goals plus its covariate contrast.

    The two rows built from one match carry metric_diffs that are exact
    negations of each other, with the own/oppo dummy blocks swapped.
    """

    response_goals: int
    team: str
    opponent: str
    metric_diffs: tuple
    own_dummies: tuple
    oppo_dummies: tuple
    tournament_id: int

    def features(self) -> np.ndarray:
        return np.concatenate(
            [self.metric_diffs, self.own_dummies, self.oppo_dummies]
        )


def normalize_squad_counts(cov: TeamCovariates) -> TeamCovariates:
    """Rescale squad-structure counts of a 15-player squad by 16/15.

    16- and 20-player squads are returned unchanged (larger squads are not
    shrunk; a bigger pool can be a real advantage).
    """
    if cov.squad_size not in VALID_SQUAD_SIZES:
        raise ValueError(f"unknown squad_size {cov.squad_size}")
    if cov.squad_size != 15:
        return cov
    scaled = {name: getattr(cov, name) * 16.0 / 15.0 for name in SQUAD_COUNT_FIELDS}
    return replace(cov, **scaled)


def split_usable(covs, matches):
    """Partition matches into (usable, excluded) given available covariates.

    Returns the usable matches in deterministic order (tournament, then
    input order) and a list of (match, reason) pairs for the rest.
    """
    index = {(c.tournament_id, c.team_id): c for c in covs}
    usable, excluded = [], []
    order = sorted(range(len(matches)), key=lambda i: (matches[i].tournament_id, i))
    for i in order:
        m = matches[i]
        missing = [
            t for t in (m.team_a, m.team_b) if (m.tournament_id, t) not in index
        ]
        if missing:
            excluded.append((m, f"missing covariates for {', '.join(missing)}"))
        else:
            usable.append(m)
    return usable, excluded


def build_design(covs, matches) -> list[DesignRow]:
    """Build the two-rows-per-match difference-encoded design.

    Matches with missing covariates are dropped with a logged reason. Squad
    counts are normalized before differencing. Output order is deterministic:
    sorted by tournament then input order, the first-named team's row first.
    """
    index = {
        (c.tournament_id, c.team_id): normalize_squad_counts(c) for c in covs
    }
    usable, excluded = split_usable(covs, matches)
    for m, reason in excluded:
        logger.warning(
            "dropping %s vs %s (%s): %s", m.team_a, m.team_b, m.tournament_id, reason
        )
    rows = []
    for m in usable:
        ca = index[(m.tournament_id, m.team_a)]
        cb = index[(m.tournament_id, m.team_b)]
        diffs = tuple(
            float(getattr(ca, f)) - float(getattr(cb, f)) for f in METRIC_FIELDS
        )
        da = tuple(float(getattr(ca, f)) for f in DUMMY_FIELDS)
        db = tuple(float(getattr(cb, f)) for f in DUMMY_FIELDS)
        rows.append(
            DesignRow(m.goals_a, m.team_a, m.team_b, diffs, da, db, m.tournament_id)
        )
        rows.append(
            DesignRow(
                m.goals_b,
                m.team_b,
                m.team_a,
                tuple(-d for d in diffs),
                db,
                da,
                m.tournament_id,
            )
        )
    return rows


@dataclass
class ScalingInfo:
    """Column means/sds retained for transforming future observations.

    Metric-difference columns are centered and scaled; dummy columns are
    scaled only. Zero-variance columns keep scale 1 and are flagged.
    """

    feature_names: list[str]
    means: np.ndarray
    sds: np.ndarray
    flagged: list[str] = field(default_factory=list)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.means) / self.sds

    def transform_row(self, row: DesignRow) -> DesignRow:
        z = self.transform(row.features())
        n_metric = len(METRIC_FIELDS)
        n_dummy = len(DUMMY_FIELDS)
        return replace(
            row,
            metric_diffs=tuple(z[:n_metric]),
            own_dummies=tuple(z[n_metric : n_metric + n_dummy]),
            oppo_dummies=tuple(z[n_metric + n_dummy :]),
        )

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "means": self.means.tolist(),
            "sds": self.sds.tolist(),
            "flagged": list(self.flagged),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingInfo":
        return cls(
            feature_names=list(d["feature_names"]),
            means=np.asarray(d["means"], dtype=float),
            sds=np.asarray(d["sds"], dtype=float),
            flagged=list(d.get("flagged", [])),
        )


def standardize(rows) -> tuple[list[DesignRow], ScalingInfo]:
    """Scale all feature columns to unit sd; center only the metric diffs."""
    if len(rows) < 2:
        raise ValueError("need at least 2 rows to standardize")
    X = np.array([r.features() for r in rows], dtype=float)
    n_metric = len(METRIC_FIELDS)
    means = np.zeros(X.shape[1])
    means[:n_metric] = X[:, :n_metric].mean(axis=0)
    sds = X.std(axis=0)
    flagged = [FEATURE_NAMES[j] for j in np.flatnonzero(sds == 0.0)]
    if flagged:
        logger.warning("zero-variance columns left unscaled: %s", flagged)
    sds = np.where(sds == 0.0, 1.0, sds)
    info = ScalingInfo(list(FEATURE_NAMES), means, sds, flagged)
    return [info.transform_row(r) for r in rows], info


def to_matrix(rows):
    """Stack rows into (X, y, match_ids).

    Relies on the build_design contract that the two mirror rows of a match
    are adjacent; match_ids groups them for match-level CV folds.
    """
    X = np.array([r.features() for r in rows], dtype=float)
    y = np.array([r.response_goals for r in rows], dtype=float)
    match_ids = np.arange(len(rows)) // 2
    return X, y, match_ids


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes")
    return bool(v)


def read_covariates_csv(path) -> list[TeamCovariates]:
    """Read covariates.csv (one row per team per tournament)."""
    df = pd.read_csv(path)
    covs = []
    for _, r in df.iterrows():
        covs.append(
            TeamCovariates(
                tournament_id=int(r["tournament_id"]),
                team_id=str(r["team_id"]),
                gdp_ratio=float(r["gdp_ratio"]),
                population_ratio=float(r["population_ratio"]),
                oddset_prob=float(r["oddset_prob"]),
                ihf_rank=int(r["ihf_rank"]),
                ihf_points=float(r["ihf_points"]),
                host=_as_bool(r["host"]),
                europe=_as_bool(r["europe"]),
                same_confed_as_host=_as_bool(r["same_confed_as_host"]),
                max_teammates=float(r["max_teammates"]),
                sec_max_teammates=float(r["sec_max_teammates"]),
                age_deviation=float(r["age_deviation"]),
                avg_height=float(r["avg_height"]),
                cl_semifinalists=float(r["cl_semifinalists"]),
                ehf_cup_semifinalists=float(r["ehf_cup_semifinalists"]),
                legionnaires=float(r["legionnaires"]),
                coach_age=float(r["coach_age"]),
                coach_tenure=float(r["coach_tenure"]),
                coach_same_nationality=_as_bool(r["coach_same_nationality"]),
                squad_size=int(r.get("squad_size", 16)),
            )
        )
    return covs


def read_matches_csv(path) -> list[MatchRecord]:
    """Read matches.csv (one row per match)."""
    df = pd.read_csv(path)
    return [
        MatchRecord(
            tournament_id=int(r["tournament_id"]),
            team_a=str(r["team_a"]),
            team_b=str(r["team_b"]),
            goals_a=int(r["goals_a"]),
            goals_b=int(r["goals_b"]),
            stage=str(r.get("stage", "preliminary")),
        )
        for _, r in df.iterrows()
    ]
