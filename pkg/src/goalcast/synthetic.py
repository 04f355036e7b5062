"""Synthetic covariate/match/odds fixtures.

The real covariate and odds data behind the handball World Championship
analyses is proprietary, so the repo ships a generator instead: teams get
a latent strength, covariates are noisy transformations of it, and scores
are drawn around 27 goals with a strength-difference effect. The output
matches the CSV schemas the library ingests.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

TEAM_IDS = [f"T{i:02d}" for i in range(1, 25)]
PAST_TOURNAMENTS = (2011, 2013, 2015, 2017)
SIM_TOURNAMENT = 2019


def _covariate_row(rng, year, team, strength, host):
    rank = int(np.clip(round(25 - 20 * strength + rng.normal(0, 2)), 1, 60))
    odds_p = float(np.clip(0.04 * np.exp(1.2 * strength + rng.normal(0, 0.2)), 1e-3, 0.6))
    return {
        "tournament_id": year,
        "team_id": team,
        "gdp_ratio": round(float(np.exp(rng.normal(0.2 * strength, 0.5))), 4),
        "population_ratio": round(float(np.exp(rng.normal(-4, 1))), 6),
        "oddset_prob": round(odds_p, 4),
        "ihf_rank": rank,
        "ihf_points": round(float(np.clip(400 + 150 * strength + rng.normal(0, 40), 10, None)), 1),
        "host": host,
        "europe": bool(strength + rng.normal(0, 0.5) > 0),
        "same_confed_as_host": bool(rng.random() < 0.5),
        "max_teammates": round(float(np.clip(3 + strength + rng.normal(0, 1), 0, 12)), 2),
        "sec_max_teammates": round(float(np.clip(2 + 0.5 * strength + rng.normal(0, 1), 0, 10)), 2),
        "age_deviation": round(float(abs(rng.normal(0.8, 0.5))), 2),
        "avg_height": round(float(np.clip(1.9 + 0.01 * strength + rng.normal(0, 0.02), 1.8, 2.05)), 3),
        "cl_semifinalists": round(float(np.clip(2 * strength + rng.normal(1, 1), 0, 10)), 2),
        "ehf_cup_semifinalists": round(float(np.clip(strength + rng.normal(1, 1), 0, 8)), 2),
        "legionnaires": round(float(np.clip(8 + 2 * strength + rng.normal(0, 2), 0, 16)), 2),
        "coach_age": round(float(rng.normal(52, 6)), 1),
        "coach_tenure": round(float(abs(rng.normal(4, 3))), 1),
        "coach_same_nationality": bool(rng.random() < 0.6),
        "squad_size": int(rng.choice([15, 16, 20], p=[0.08, 0.88, 0.04])),
    }


def _outcome_probs_from_strengths(sa, sb, sd=4.0):
    # tendency probabilities of the generative rounded-gaussian difference
    from scipy.stats import norm

    diff_sd = np.sqrt(2) * sd
    margin = sa - sb
    p_draw = norm.cdf(0.5, margin, diff_sd) - norm.cdf(-0.5, margin, diff_sd)
    p_win = 1 - norm.cdf(0.5, margin, diff_sd)
    p_loss = 1 - p_win - p_draw
    return p_win, p_draw, p_loss


def make_fixture(outdir, seed: int = 0, groups_per_tournament: int = 2):
    """Write covariates.csv, matches.csv, odds.csv and format.json.

    Past tournaments field 6 * groups_per_tournament of the 24 teams in a
    group round robin; the simulated tournament carries covariates for all
    24 teams but no matches. Returns a dict of file paths.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    base_strength = {t: rng.normal(0, 1.5) for t in TEAM_IDS}

    cov_rows, match_rows, odds_rows = [], [], []
    for year in PAST_TOURNAMENTS:
        n_teams = 6 * groups_per_tournament
        field_teams = sorted(rng.choice(TEAM_IDS, size=n_teams, replace=False))
        host = field_teams[int(rng.integers(n_teams))]
        strengths = {}
        for t in field_teams:
            strengths[t] = base_strength[t] + rng.normal(0, 0.4)
            cov_rows.append(_covariate_row(rng, year, t, strengths[t], t == host))
        for g in range(groups_per_tournament):
            members = field_teams[6 * g : 6 * (g + 1)]
            for i in range(6):
                for j in range(i + 1, 6):
                    a, b = members[i], members[j]
                    mu_a = 27 + (strengths[a] - strengths[b]) + 0.5 * (a == host)
                    mu_b = 27 + (strengths[b] - strengths[a]) + 0.5 * (b == host)
                    ga = max(int(round(rng.normal(mu_a, 4.0))), 0)
                    gb = max(int(round(rng.normal(mu_b, 4.0))), 0)
                    match_rows.append(
                        {
                            "tournament_id": year,
                            "team_a": a,
                            "team_b": b,
                            "goals_a": ga,
                            "goals_b": gb,
                            "stage": "preliminary",
                        }
                    )
                    pw, pd_, pl = _outcome_probs_from_strengths(strengths[a], strengths[b])
                    margin = 1.06
                    odds_rows.append(
                        {
                            "tournament_id": year,
                            "team_a": a,
                            "team_b": b,
                            "odds_win": round(max(1.0 / (pw * margin), 1.01), 3),
                            "odds_draw": round(max(1.0 / (pd_ * margin), 1.01), 3),
                            "odds_loss": round(max(1.0 / (pl * margin), 1.01), 3),
                        }
                    )

    hosts = list(rng.choice(TEAM_IDS, size=2, replace=False))
    for t in TEAM_IDS:
        cov_rows.append(
            _covariate_row(
                rng, SIM_TOURNAMENT, t, base_strength[t] + rng.normal(0, 0.4), t in hosts
            )
        )

    fmt = {
        "name": f"synthetic {SIM_TOURNAMENT}",
        "groups": {
            g: TEAM_IDS[6 * i : 6 * (i + 1)] for i, g in enumerate(["A", "B", "C", "D"])
        },
        "main_round_groups": {"I": ["A", "B"], "II": ["C", "D"]},
        "advance_per_group": 3,
        "carry_over": True,
        "semifinals": [[["I", 1], ["II", 2]], [["II", 1], ["I", 2]]],
    }

    paths = {
        "covariates": outdir / "covariates.csv",
        "matches": outdir / "matches.csv",
        "odds": outdir / "odds.csv",
        "format": outdir / "format.json",
    }
    pd.DataFrame(cov_rows).to_csv(paths["covariates"], index=False)
    pd.DataFrame(match_rows).to_csv(paths["matches"], index=False)
    pd.DataFrame(odds_rows).to_csv(paths["odds"], index=False)
    with open(paths["format"], "w") as fh:
        json.dump(fmt, fh, indent=2)
    return paths
