"""Monte Carlo simulation of the 24-team IHF World Championship format.

Four preliminary groups of six play a round robin; the top three of each
group advance to two main-round groups, carrying their results against
fellow qualifiers. Main-round winners and runners-up play cross semifinals,
then the final and bronze match. Standings follow the official six-criterion
rule (points, head-to-head points / goal difference / goals, overall goal
difference / goals, then a drawn lot). Drawn knockout matches get up to two
simulated extra times at one sixth of the expected goals, then a coin flip.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import glm
from .counts import ScoreDistribution, sample as sample_dist
from .design import DUMMY_FIELDS, METRIC_FIELDS, normalize_squad_counts

WIN_POINTS = 2  # IHF convention: 2 / 1 / 0
DRAW_POINTS = 1
EXTRA_TIME_FACTOR = 1.0 / 6.0

SIM_FAMILIES = ("gaussian", "poisson", "dpoisson", "negbin")


@dataclass(frozen=True)
class TournamentFormat:
    name: str
    groups: dict  # group name -> list of 6 team ids
    main_round_groups: dict  # main group name -> list of 2 preliminary groups
    advance_per_group: int = 3
    carry_over: bool = True
    # each semifinal is [[main group, rank], [main group, rank]]
    semifinals: tuple = ((("I", 1), ("II", 2)), (("II", 1), ("I", 2)))

    def __post_init__(self):
        teams = self.all_teams()
        if len(teams) != len(set(teams)):
            raise ValueError("duplicate team in format")
        for g, members in self.groups.items():
            if len(members) != 6:
                raise ValueError(f"group {g} must have 6 teams")

    def all_teams(self) -> list[str]:
        return [t for g in sorted(self.groups) for t in self.groups[g]]

    @classmethod
    def from_json(cls, path) -> "TournamentFormat":
        with open(path) as fh:
            d = json.load(fh)
        semis = tuple(
            tuple((str(mg), int(rank)) for mg, rank in pair) for pair in d["semifinals"]
        )
        return cls(
            name=d.get("name", "tournament"),
            groups={str(g): [str(t) for t in ts] for g, ts in d["groups"].items()},
            main_round_groups={
                str(g): [str(x) for x in gs] for g, gs in d["main_round_groups"].items()
            },
            advance_per_group=int(d.get("advance_per_group", 3)),
            carry_over=bool(d.get("carry_over", True)),
            semifinals=semis,
        )


@dataclass
class TeamStats:
    points: int = 0
    goals_for: int = 0
    goals_against: int = 0

    @property
    def goal_diff(self) -> int:
        return self.goals_for - self.goals_against


@dataclass
class GroupStanding:
    order: list  # team ids, best first
    table: dict  # team id -> TeamStats


def _tally(teams, results) -> dict:
    table = {t: TeamStats() for t in teams}
    for a, b, ga, gb in results:
        if a in table:
            table[a].goals_for += ga
            table[a].goals_against += gb
            table[a].points += WIN_POINTS if ga > gb else (DRAW_POINTS if ga == gb else 0)
        if b in table:
            table[b].goals_for += gb
            table[b].goals_against += ga
            table[b].points += WIN_POINTS if gb > ga else (DRAW_POINTS if ga == gb else 0)
    return table


def _resolve_cluster(cluster, results, full_table, rng):
    """Order a points-tied cluster by the head-to-head and overall criteria.

    After a criterion separates the cluster, each resulting sub-cluster is
    re-resolved from the head-to-head criteria restricted to it. A cluster
    that no criterion separates is ordered by a seeded lot.
    """
    if len(cluster) == 1:
        return list(cluster)
    members = set(cluster)
    sub = [(a, b, ga, gb) for a, b, ga, gb in results if a in members and b in members]
    h2h = _tally(cluster, sub)
    criteria = [
        lambda t: h2h[t].points,
        lambda t: h2h[t].goal_diff,
        lambda t: h2h[t].goals_for,
        lambda t: full_table[t].goal_diff,
        lambda t: full_table[t].goals_for,
    ]
    for key in criteria:
        values = {t: key(t) for t in cluster}
        if len(set(values.values())) > 1:
            ordered = []
            for v in sorted(set(values.values()), reverse=True):
                subcluster = [t for t in cluster if values[t] == v]
                ordered.extend(_resolve_cluster(subcluster, results, full_table, rng))
            return ordered
    # decision by lot
    tied = sorted(cluster)
    return [tied[i] for i in rng.permutation(len(tied))]


def rank_group(teams, results, rng) -> GroupStanding:
    """Rank a group from a complete round robin of results.

    results are (team_a, team_b, goals_a, goals_b) tuples. Raises if any
    pairing is missing or duplicated.
    """
    teams = list(teams)
    expected = {frozenset(p) for p in _pairs(teams)}
    seen = [frozenset((a, b)) for a, b, _, _ in results]
    if sorted(map(sorted, seen)) != sorted(map(sorted, expected)):
        raise ValueError("results do not form a complete round robin")
    table = _tally(teams, results)
    order = []
    for pts in sorted({s.points for s in table.values()}, reverse=True):
        cluster = [t for t in teams if table[t].points == pts]
        order.extend(_resolve_cluster(cluster, results, table, rng))
    return GroupStanding(order, table)


def _pairs(teams):
    return [(teams[i], teams[j]) for i in range(len(teams)) for j in range(i + 1, len(teams))]


class MatchSimulator:
    """Samples match scores for a fixed team set from a fitted model.

    Expected goals for every ordered team pair are precomputed once; each
    draw then only touches the sampling distribution.
    """

    def __init__(self, fit: glm.ModelFit, covs, sim_family: str | None = None):
        if sim_family is None:
            sim_family = fit.family.kind
        if sim_family not in SIM_FAMILIES:
            raise ValueError(f"unknown simulation family {sim_family!r}")
        self.fit = fit
        self.sim_family = sim_family
        if sim_family == "gaussian" and fit.sigma2_hat is None:
            raise ValueError("gaussian simulation needs sigma2_hat on the fit")
        if sim_family == "dpoisson" and fit.phi_hat is None:
            raise ValueError("double-Poisson simulation needs phi_hat on the fit")
        covs = [normalize_squad_counts(c) for c in covs]
        self.teams = sorted(c.team_id for c in covs)
        self.index = {t: i for i, t in enumerate(self.teams)}
        by_team = {c.team_id: c for c in covs}
        metric = np.array(
            [[float(getattr(by_team[t], f)) for f in METRIC_FIELDS] for t in self.teams]
        )
        dummy = np.array(
            [[float(getattr(by_team[t], f)) for f in DUMMY_FIELDS] for t in self.teams]
        )
        n = len(self.teams)
        self.means = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                raw = np.concatenate([metric[i] - metric[j], dummy[i], dummy[j]])
                self.means[i, j] = glm.predict_mean_raw(fit, raw)
        self._cdf_cache: dict = {}

    def mean(self, a: str, b: str) -> float:
        return float(self.means[self.index[a], self.index[b]])

    def _cdf(self, mean, time_factor):
        key = (round(mean, 12), time_factor)
        hit = self._cdf_cache.get(key)
        if hit is not None:
            return hit
        dist = self.distribution(mean, time_factor)
        cdf = np.cumsum(dist.pmf_grid())
        self._cdf_cache[key] = cdf
        return cdf

    def distribution(self, mean, time_factor=1.0) -> ScoreDistribution:
        m = mean * time_factor
        if self.sim_family == "gaussian":
            return ScoreDistribution(
                "rounded_gaussian", m, self.fit.sigma2_hat * time_factor
            )
        m = max(m, 1e-9)
        if self.sim_family == "poisson":
            return ScoreDistribution("poisson", m)
        if self.sim_family == "dpoisson":
            return ScoreDistribution("double_poisson", m, self.fit.phi_hat)
        return ScoreDistribution("negbin", m, self.fit.family.nb_theta)

    def sample_scores(self, means, rng, time_factor=1.0) -> np.ndarray:
        """Vectorized draw of one score per entry of means."""
        m = np.asarray(means, dtype=float) * time_factor
        if self.sim_family == "gaussian":
            sd = np.sqrt(self.fit.sigma2_hat * time_factor)
            return np.maximum(np.rint(rng.normal(m, sd)), 0).astype(np.int64)
        m = np.maximum(m, 1e-9)
        if self.sim_family == "poisson":
            return rng.poisson(m)
        if self.sim_family == "negbin":
            th = self.fit.family.nb_theta
            return rng.negative_binomial(th, th / (th + m))
        u = rng.random(len(m))
        out = np.empty(len(m), dtype=np.int64)
        for i, mean in enumerate(np.asarray(means, dtype=float)):
            cdf = self._cdf(mean, time_factor)
            out[i] = np.searchsorted(cdf, u[i], side="right")
        return out

    def sample_match(self, a: str, b: str, rng, time_factor=1.0) -> tuple[int, int]:
        ia, ib = self.index[a], self.index[b]
        ga = self.sample_scores([self.means[ia, ib]], rng, time_factor)[0]
        gb = self.sample_scores([self.means[ib, ia]], rng, time_factor)[0]
        return int(ga), int(gb)


def simulate_match(fit, cov_a, cov_b, rng, time_factor=1.0, sim_family=None):
    """One-off match simulation from raw covariates."""
    sim = MatchSimulator(fit, [cov_a, cov_b], sim_family)
    return sim.sample_match(cov_a.team_id, cov_b.team_id, rng, time_factor)


def resolve_knockout(sim: MatchSimulator, a: str, b: str, rng) -> str:
    """Winner of a knockout tie: regulation, up to two extra times at the
    1/6 goal rate, then a fair coin flip."""
    ga, gb = sim.sample_match(a, b, rng)
    if ga != gb:
        return a if ga > gb else b
    for _ in range(2):
        ga, gb = sim.sample_match(a, b, rng, time_factor=EXTRA_TIME_FACTOR)
        if ga != gb:
            return a if ga > gb else b
    return a if rng.random() < 0.5 else b


def _order_across_groups(entries, rng):
    """Order teams holding the same in-group rank by points, goal
    difference, goals, then lot. entries are (team, TeamStats)."""
    order = []
    keyed = {}
    for t, st in entries:
        keyed[t] = (st.points, st.goal_diff, st.goals_for)
    for key in sorted(set(keyed.values()), reverse=True):
        tied = sorted(t for t in keyed if keyed[t] == key)
        order.extend(tied[i] for i in rng.permutation(len(tied)))
    return order


def simulate_tournament(sim: MatchSimulator, fmt: TournamentFormat, rng) -> list[str]:
    """Simulate one complete tournament; returns team ids ranked 1..24."""
    group_names = sorted(fmt.groups)
    prelim_pairs = []
    for g in group_names:
        prelim_pairs.extend(_pairs(fmt.groups[g]))
    idx = sim.index
    ia = np.array([idx[a] for a, b in prelim_pairs])
    ib = np.array([idx[b] for a, b in prelim_pairs])
    ga = sim.sample_scores(sim.means[ia, ib], rng)
    gb = sim.sample_scores(sim.means[ib, ia], rng)
    results = {
        g: [] for g in group_names
    }
    pos = 0
    for g in group_names:
        n_pairs = len(_pairs(fmt.groups[g]))
        for k in range(n_pairs):
            a, b = prelim_pairs[pos + k]
            results[g].append((a, b, int(ga[pos + k]), int(gb[pos + k])))
        pos += n_pairs
    prelim = {g: rank_group(fmt.groups[g], results[g], rng) for g in group_names}

    adv = fmt.advance_per_group
    main_standings = {}
    for mg in sorted(fmt.main_round_groups):
        g1, g2 = fmt.main_round_groups[mg]
        q1 = prelim[g1].order[:adv]
        q2 = prelim[g2].order[:adv]
        carried = []
        if fmt.carry_over:
            for g, qual in ((g1, q1), (g2, q2)):
                members = set(qual)
                carried.extend(
                    r for r in results[g] if r[0] in members and r[1] in members
                )
        cross = [(a, b) for a in q1 for b in q2]
        ja = np.array([idx[a] for a, b in cross])
        jb = np.array([idx[b] for a, b in cross])
        ca = sim.sample_scores(sim.means[ja, jb], rng)
        cb = sim.sample_scores(sim.means[jb, ja], rng)
        played = carried + [
            (a, b, int(ca[k]), int(cb[k])) for k, (a, b) in enumerate(cross)
        ]
        main_standings[mg] = rank_group(q1 + q2, played, rng)

    def seed(mg, rank):
        return main_standings[mg].order[rank - 1]

    (s1a, s1b), (s2a, s2b) = (
        (seed(*fmt.semifinals[0][0]), seed(*fmt.semifinals[0][1])),
        (seed(*fmt.semifinals[1][0]), seed(*fmt.semifinals[1][1])),
    )
    w1 = resolve_knockout(sim, s1a, s1b, rng)
    l1 = s1b if w1 == s1a else s1a
    w2 = resolve_knockout(sim, s2a, s2b, rng)
    l2 = s2b if w2 == s2a else s2a
    champion = resolve_knockout(sim, w1, w2, rng)
    runner_up = w2 if champion == w1 else w1
    third = resolve_knockout(sim, l1, l2, rng)
    fourth = l2 if third == l1 else l1

    ranking = [champion, runner_up, third, fourth]
    main_names = sorted(fmt.main_round_groups)
    # 5th-8th (and 9th-12th): non-semifinalists by main-round standing
    for rank in range(3, 7):
        entries = [
            (main_standings[mg].order[rank - 1], main_standings[mg].table[main_standings[mg].order[rank - 1]])
            for mg in main_names
        ]
        ranking.extend(_order_across_groups(entries, rng))
    # 13th-24th: preliminary non-qualifiers by in-group rank
    for rank in range(adv + 1, 7):
        entries = [
            (prelim[g].order[rank - 1], prelim[g].table[prelim[g].order[rank - 1]])
            for g in group_names
        ]
        ranking.extend(_order_across_groups(entries, rng))
    return ranking


@dataclass
class SimulationSummary:
    """Per-team stage-survival probabilities over many simulated runs."""

    teams: list
    main_round: dict  # team -> P(reach main round)
    at_least: dict  # team -> {rank r: P(final rank <= r)} for r = 8..1
    runs: int
    master_seed: int
    format_name: str = ""

    def to_frame(self) -> pd.DataFrame:
        cols = {"main_round": [self.main_round[t] for t in self.teams]}
        for r in range(8, 0, -1):
            label = "champion" if r == 1 else f"rank_{r}"
            cols[label] = [self.at_least[t][r] for t in self.teams]
        df = pd.DataFrame(cols, index=pd.Index(self.teams, name="team"))
        return df.sort_values(["champion", "rank_2", "main_round"], ascending=False)

    def group_frame(self, fmt: TournamentFormat) -> pd.DataFrame:
        rows = []
        for g in sorted(fmt.groups):
            for t in sorted(fmt.groups[g], key=lambda t: -self.main_round[t]):
                rows.append({"group": g, "team": t, "main_round": self.main_round[t]})
        return pd.DataFrame(rows)


def _simulate_block(sim, fmt, master_seed, start, stop):
    n = len(sim.teams)
    rank_counts = np.zeros((n, 24), dtype=np.int64)
    main_counts = np.zeros(n, dtype=np.int64)
    adv = fmt.advance_per_group
    n_main = len(fmt.main_round_groups) * 2 * adv
    for run in range(start, stop):
        rng = np.random.default_rng([master_seed, run])
        ranking = simulate_tournament(sim, fmt, rng)
        for pos, t in enumerate(ranking):
            ti = sim.index[t]
            rank_counts[ti, pos] += 1
            if pos < n_main:
                main_counts[ti] += 1
    return rank_counts, main_counts


def monte_carlo(
    fit: glm.ModelFit,
    covs,
    fmt: TournamentFormat,
    runs: int = 100_000,
    master_seed: int = 0,
    sim_family: str | None = None,
    threads: int = 1,
) -> SimulationSummary:
    """Repeat full-tournament simulation; deterministic in master_seed.

    Each run draws from its own generator seeded by (master_seed, run
    index), so the aggregate is independent of threading and run order.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    covs_by_team = {c.team_id for c in covs}
    missing = [t for t in fmt.all_teams() if t not in covs_by_team]
    if missing:
        raise ValueError(f"teams in format without covariates: {', '.join(missing)}")
    covs = [c for c in covs if c.team_id in set(fmt.all_teams())]
    sim = MatchSimulator(fit, covs, sim_family)
    n = len(sim.teams)
    if threads <= 1:
        rank_counts, main_counts = _simulate_block(sim, fmt, master_seed, 0, runs)
    else:
        bounds = np.linspace(0, runs, threads + 1, dtype=int)
        rank_counts = np.zeros((n, 24), dtype=np.int64)
        main_counts = np.zeros(n, dtype=np.int64)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_simulate_block, sim, fmt, master_seed, int(b0), int(b1))
                for b0, b1 in zip(bounds[:-1], bounds[1:])
            ]
            for fut in futures:
                rc, mc = fut.result()
                rank_counts += rc
                main_counts += mc
    cum = np.cumsum(rank_counts, axis=1)
    at_least = {
        t: {r: float(cum[sim.index[t], r - 1] / runs) for r in range(8, 0, -1)}
        for t in sim.teams
    }
    main_round = {t: float(main_counts[sim.index[t]] / runs) for t in sim.teams}
    return SimulationSummary(
        teams=list(sim.teams),
        main_round=main_round,
        at_least=at_least,
        runs=runs,
        master_seed=master_seed,
        format_name=fmt.name,
    )
