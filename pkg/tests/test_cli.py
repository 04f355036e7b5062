import json

import pandas as pd
import pytest

from goalcast import cli, glm


def run(argv):
    return cli.main(argv)


def test_make_fixture(tmp_path):
    out = tmp_path / "fx"
    assert run(["make-fixture", "--seed", "1", "--out", str(out)]) == 0
    for name in ("covariates.csv", "matches.csv", "odds.csv", "format.json"):
        assert (out / name).exists()


def test_build_design(tmp_path, fixture_dir, capsys):
    out = tmp_path / "design"
    rc = run(
        [
            "build-design",
            "--covariates", str(fixture_dir / "covariates.csv"),
            "--matches", str(fixture_dir / "matches.csv"),
            "--out", str(out),
        ]
    )
    assert rc == 0
    text = (out / "design.csv").read_text()
    assert text.startswith("# goalcast")
    assert "# sha256 covariates=" in text
    df = pd.read_csv(out / "design.csv", comment="#")
    assert len(df) == 2 * 120
    assert "gdp_ratio" in df.columns and "host_oppo" in df.columns
    assert (out / "exclusions.log").read_text() == ""
    assert "240 rows" in capsys.readouterr().out


def test_build_design_logs_exclusions(tmp_path, fixture_dir):
    covs = pd.read_csv(fixture_dir / "covariates.csv")
    trimmed = covs[covs["team_id"] != covs.iloc[0]["team_id"]]
    cov_path = tmp_path / "covariates.csv"
    trimmed.to_csv(cov_path, index=False)
    out = tmp_path / "design"
    rc = run(
        [
            "build-design",
            "--covariates", str(cov_path),
            "--matches", str(fixture_dir / "matches.csv"),
            "--out", str(out),
        ]
    )
    assert rc == 0
    log = (out / "exclusions.log").read_text()
    assert "missing covariates" in log


def test_missing_input_is_an_error(tmp_path, capsys):
    rc = run(
        [
            "build-design",
            "--covariates", str(tmp_path / "nope.csv"),
            "--matches", str(tmp_path / "nope.csv"),
            "--out", str(tmp_path / "out"),
        ]
    )
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_simulate_outputs(tmp_path, fixture_dir):
    out = tmp_path / "sim"
    rc = run(
        [
            "simulate",
            "--covariates", str(fixture_dir / "covariates.csv"),
            "--matches", str(fixture_dir / "matches.csv"),
            "--format", str(fixture_dir / "format.json"),
            "--family", "poisson",
            "--runs", "200",
            "--n-lambda", "30",
            "--out", str(out),
        ]
    )
    assert rc == 0
    summary = pd.read_csv(out / "summary.csv", comment="#", index_col="team")
    assert len(summary) == 24
    assert summary["champion"].sum() == pytest.approx(1.0, abs=1e-9)
    groups = pd.read_csv(out / "groups.csv", comment="#")
    assert set(groups["group"]) == {"A", "B", "C", "D"}
    fit = glm.ModelFit.from_json((out / "fit.json").read_text())
    assert fit.family.kind == "poisson"
    assert fit.scaling is not None
    config = json.loads((out / "config.json").read_text())
    assert config["family"] == "poisson"
    assert config["runs"] == 200
    assert config["sim_tournament"] == 2019


def test_simulate_rejects_unknown_team(tmp_path, fixture_dir):
    fmt = json.loads((fixture_dir / "format.json").read_text())
    fmt["groups"]["A"][0] = "XXX"
    bad = tmp_path / "format.json"
    bad.write_text(json.dumps(fmt))
    with pytest.raises(SystemExit, match="XXX"):
        run(
            [
                "simulate",
                "--covariates", str(fixture_dir / "covariates.csv"),
                "--matches", str(fixture_dir / "matches.csv"),
                "--format", str(bad),
                "--runs", "10",
                "--out", str(tmp_path / "sim"),
            ]
        )
