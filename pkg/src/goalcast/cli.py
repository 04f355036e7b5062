"""Batch command-line driver.

Subcommands: build-design, compare, simulate, make-fixture. Every command
is a pure function of its config, input files and master seed; outputs
carry a provenance header (version, seed, input-file hashes) so re-runs
are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import pandas as pd

from . import __version__, design, evaluation, glm, synthetic, tournament

FAMILY_CHOICES = ("gaussian", "poisson", "dpoisson", "negbin")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _provenance(args, inputs: dict) -> str:
    lines = [f"# goalcast {__version__}", f"# seed={getattr(args, 'seed', 0)}"]
    for name, path in inputs.items():
        if path is not None:
            lines.append(f"# sha256 {name}={_sha256(path)}")
    return "\n".join(lines) + "\n"


def _write_csv(path, df: pd.DataFrame, header: str, index=False):
    with open(path, "w") as fh:
        fh.write(header)
        df.to_csv(fh, index=index, float_format="%.10g", lineterminator="\n")


def cmd_build_design(args) -> int:
    covs = design.read_covariates_csv(args.covariates)
    matches = design.read_matches_csv(args.matches)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    usable, excluded = design.split_usable(covs, matches)
    rows = design.build_design(covs, matches)
    if not matches:
        print("warning: empty matches file, writing empty design", file=sys.stderr)
    df = pd.DataFrame(
        [
            {
                "tournament_id": r.tournament_id,
                "team": r.team,
                "opponent": r.opponent,
                "response_goals": r.response_goals,
                **dict(zip(design.METRIC_FIELDS, r.metric_diffs)),
                **{f + "_own": v for f, v in zip(design.DUMMY_FIELDS, r.own_dummies)},
                **{f + "_oppo": v for f, v in zip(design.DUMMY_FIELDS, r.oppo_dummies)},
            }
            for r in rows
        ]
    )
    header = _provenance(args, {"covariates": args.covariates, "matches": args.matches})
    _write_csv(out / "design.csv", df, header)
    with open(out / "exclusions.log", "w") as fh:
        for m, reason in excluded:
            fh.write(f"{m.tournament_id},{m.team_a},{m.team_b}: {reason}\n")
    print(f"wrote {len(rows)} rows ({len(usable)} matches, {len(excluded)} excluded)")
    return 0


def cmd_compare(args) -> int:
    covs = design.read_covariates_csv(args.covariates)
    matches = design.read_matches_csv(args.matches)
    odds = None
    if args.odds:
        odds = evaluation.read_odds_csv(args.odds)
    else:
        print("warning: no odds file, skipping the bookmaker benchmark", file=sys.stderr)
    report = evaluation.leave_one_tournament_out(
        covs, matches, odds=odds, cv_seed=args.seed, n_lambda=args.n_lambda
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _provenance(
        args,
        {"covariates": args.covariates, "matches": args.matches, "odds": args.odds},
    )
    _write_csv(out / "report.csv", report.summary, header, index=True)
    _write_csv(out / "records.csv", report.records, header)
    with open(out / "report.txt", "w") as fh:
        fh.write(report.to_text() + "\n")
    for family, rule, held_out, err in report.failures:
        print(f"warning: {family} ({rule}) failed on split {held_out}: {err}", file=sys.stderr)
    print(report.to_text())
    return 0


def cmd_simulate(args) -> int:
    covs = design.read_covariates_csv(args.covariates)
    matches = design.read_matches_csv(args.matches)
    fmt = tournament.TournamentFormat.from_json(args.format)
    sim_year = args.sim_tournament
    if sim_year is None:
        sim_year = max(c.tournament_id for c in covs)
    sim_covs = [c for c in covs if c.tournament_id == sim_year]
    have = {c.team_id for c in sim_covs}
    missing = [t for t in fmt.all_teams() if t not in have]
    if missing:
        raise SystemExit(
            f"error: no covariates for tournament {sim_year} for: {', '.join(missing)}"
        )

    rows = design.build_design(covs, matches)
    rows_std, scaling = design.standardize(rows)
    fit_family = "poisson" if args.family == "dpoisson" else args.family
    fit = glm.fit_model(
        rows_std, scaling, fit_family, args.lambda_rule,
        seed=args.seed, n_lambda=args.n_lambda,
    )
    summary = tournament.monte_carlo(
        fit,
        sim_covs,
        fmt,
        runs=args.runs,
        master_seed=args.seed,
        sim_family=args.family,
        threads=args.threads,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _provenance(
        args,
        {"covariates": args.covariates, "matches": args.matches, "format": args.format},
    )
    _write_csv(out / "summary.csv", summary.to_frame(), header, index=True)
    _write_csv(out / "groups.csv", summary.group_frame(fmt), header)
    with open(out / "fit.json", "w") as fh:
        fh.write(fit.to_json(indent=2, sort_keys=True))
    with open(out / "config.json", "w") as fh:
        json.dump(
            {
                "family": args.family,
                "lambda_rule": args.lambda_rule,
                "runs": args.runs,
                "seed": args.seed,
                "sim_tournament": sim_year,
                "version": __version__,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
    print(summary.to_frame().to_string(float_format=lambda v: f"{v:.3f}"))
    return 0


def cmd_make_fixture(args) -> int:
    paths = synthetic.make_fixture(args.out, seed=args.seed)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="goalcast")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_matches=True):
        p.add_argument("--covariates", required=True)
        if needs_matches:
            p.add_argument("--matches", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)

    p = sub.add_parser("build-design", help="write the difference-encoded design matrix")
    common(p)
    p.set_defaults(func=cmd_build_design)

    p = sub.add_parser("compare", help="leave-one-tournament-out method comparison")
    common(p)
    p.add_argument("--odds", default=None)
    p.add_argument("--n-lambda", type=int, default=glm.N_LAMBDA_DEFAULT)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="fit and Monte Carlo-simulate a tournament")
    common(p)
    p.add_argument("--format", required=True)
    p.add_argument("--family", choices=FAMILY_CHOICES, default="gaussian")
    p.add_argument("--lambda-rule", choices=("min", "1se"), default="min")
    p.add_argument("--runs", type=int, default=100_000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--n-lambda", type=int, default=glm.N_LAMBDA_DEFAULT)
    p.add_argument("--sim-tournament", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("make-fixture", help="generate a synthetic data fixture")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_fixture)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
