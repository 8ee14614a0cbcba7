"""Command-line front end: target resolution, outputs, manifests, exit codes."""

from __future__ import annotations

import csv
import json
import math
import re

import numpy as np
import pytest

from hetsurv.cli import main
from hetsurv.data import DgpConfig, LogitModel, WeibullCoxModel, load_csv


def small_config(treatment: float = -0.5, interaction: float = 1.0) -> DgpConfig:
    return DgpConfig(
        d=2,
        horizon=1.2,
        outcome_hazard=WeibullCoxModel(
            scale=0.5,
            shape=1.0,
            coef=np.array([0.3, -0.2]),
            treatment=treatment,
            interactions=np.array([interaction, 0.0]),
        ),
        censoring_hazard=WeibullCoxModel(
            scale=0.25, shape=1.0, coef=np.array([0.1, 0.0])
        ),
        propensity=LogitModel(intercept=0.0, coef=np.array([0.4, 0.0])),
    )


def wide_config() -> DgpConfig:
    """Four covariates so the default learner formulas apply."""
    return DgpConfig(
        d=4,
        horizon=1.2,
        outcome_hazard=WeibullCoxModel(
            scale=0.5,
            shape=1.0,
            coef=np.array([0.3, -0.2, 0.1, 0.0]),
            treatment=-0.5,
            interactions=np.array([1.0, 0.0, 0.0, 0.0]),
        ),
        censoring_hazard=WeibullCoxModel(
            scale=0.25, shape=1.0, coef=np.array([0.1, 0.0, 0.0, 0.0])
        ),
        propensity=LogitModel(intercept=0.0, coef=np.array([0.4, 0.0, 0.0, 0.0])),
    )


LEARNERS = {
    "event_model": {
        "kind": "cox-breslow",
        "params": {"covariates": [1, 2], "treatment": True, "interactions": [1]},
    },
    "censoring_model": {"kind": "cox-breslow", "params": {"covariates": [1]}},
    "propensity_model": {"kind": "logistic-glm", "params": {"covariates": [1]}},
}


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "dgp.json"
    path.write_text(json.dumps(small_config().to_dict()), encoding="utf-8")
    return str(path)


@pytest.fixture()
def flat_cfg_file(tmp_path):
    path = tmp_path / "flat.json"
    config = small_config(treatment=0.0, interaction=0.0)
    path.write_text(json.dumps(config.to_dict()), encoding="utf-8")
    return str(path)


@pytest.fixture()
def learners_file(tmp_path):
    path = tmp_path / "learners.json"
    path.write_text(json.dumps(LEARNERS), encoding="utf-8")
    return str(path)


def estimate_args(cfg_file, learners_file, *extra):
    return [
        "estimate",
        "--dgp-config",
        cfg_file,
        "--n",
        "250",
        "--seed",
        "11",
        "--folds",
        "2",
        "--inner-folds",
        "2",
        "--learners",
        learners_file,
        *extra,
    ]


class TestUsageErrors:
    def test_unknown_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["frobnicate"])
        assert excinfo.value.code == 1

    def test_missing_required_flag_exits_one(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            main(["simulate", "--out", str(tmp_path / "x.csv")])
        assert excinfo.value.code == 1

    def test_rejects_unknown_target(self, cfg_file):
        with pytest.raises(SystemExit) as excinfo:
            main(["estimate", "--dgp-config", cfg_file, "--target", "tau"])
        assert excinfo.value.code == 1

    def test_ate_only_available_for_oracle(self, cfg_file):
        with pytest.raises(SystemExit) as excinfo:
            main(["estimate", "--dgp-config", cfg_file, "--target", "ate"])
        assert excinfo.value.code == 1


class TestTargetResolution:
    def test_theta_without_subset_is_total_variance(self, cfg_file, capsys):
        code = main(
            ["oracle", "--dgp-config", cfg_file, "--target", "theta",
             "--draws", "10000", "--seed", "1"]
        )
        assert code == 0
        assert capsys.readouterr().out.startswith("target=theta_d ")

    def test_theta_with_subset_names_the_subset(self, cfg_file, capsys):
        code = main(
            ["oracle", "--dgp-config", cfg_file, "--target", "theta",
             "--subset", "1", "--draws", "10000", "--inner-draws", "80",
             "--seed", "1"]
        )
        assert code == 0
        assert capsys.readouterr().out.startswith("target=theta_1 ")

    def test_covariate_is_subset_shorthand(self, cfg_file, capsys):
        code = main(
            ["oracle", "--dgp-config", cfg_file, "--target", "psi",
             "--covariate", "1", "--draws", "10000", "--inner-draws", "80",
             "--seed", "1"]
        )
        assert code == 0
        assert capsys.readouterr().out.startswith("target=psi_1 ")

    def test_share_targets_require_subset(self, cfg_file, capsys):
        code = main(["oracle", "--dgp-config", cfg_file, "--target", "psi"])
        assert code == 1
        assert "--subset" in capsys.readouterr().err

    def test_projection_targets_require_covariate(self, cfg_file, capsys):
        code = main(["oracle", "--dgp-config", cfg_file, "--target", "gamma"])
        assert code == 1
        assert "--covariate" in capsys.readouterr().err

    def test_covariate_and_subset_must_agree(self, cfg_file, capsys):
        code = main(
            ["oracle", "--dgp-config", cfg_file, "--target", "omega",
             "--covariate", "1", "--subset", "2"]
        )
        assert code == 1
        assert "disagree" in capsys.readouterr().err

    def test_unparseable_subset(self, cfg_file, capsys):
        code = main(
            ["oracle", "--dgp-config", cfg_file, "--target", "psi",
             "--subset", "1,a"]
        )
        assert code == 1
        assert "1,a" in capsys.readouterr().err


class TestSimulate:
    def test_csv_round_trips(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "sim.csv"
        code = main(
            ["simulate", "--dgp-config", cfg_file, "--n", "40", "--seed", "3",
             "--out", str(out)]
        )
        assert code == 0
        assert "wrote 40 records" in capsys.readouterr().out
        dataset = load_csv(str(out))
        assert dataset.n == 40
        assert dataset.covariate_names == ("x1", "x2")
        assert set(np.unique(dataset.event)) <= {0, 1}
        assert set(np.unique(dataset.treatment)) <= {0, 1}
        assert np.all(dataset.time > 0)

    def test_same_seed_same_bytes(self, cfg_file, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"]
        for path, seed in zip(paths, ("5", "5", "6")):
            main(["simulate", "--dgp-config", cfg_file, "--n", "30",
                  "--seed", seed, "--out", str(path)])
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert paths[0].read_bytes() != paths[2].read_bytes()

    def test_manifest_contents(self, cfg_file, tmp_path):
        out = tmp_path / "sim.csv"
        main(["simulate", "--dgp-config", cfg_file, "--n", "25", "--seed", "9",
              "--out", str(out)])
        manifest = json.loads((tmp_path / "sim.manifest.json").read_text())
        assert set(manifest) == {
            "command", "arguments", "config_digest", "seed", "versions"
        }
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 9
        assert manifest["arguments"]["n"] == 25
        assert manifest["arguments"]["dgp"]["d"] == 2
        assert re.fullmatch(r"[0-9a-f]{16,}", manifest["config_digest"])
        versions = manifest["versions"]
        assert {"python", "hetsurv", "numpy", "scipy", "scikit-learn"} <= set(versions)


class TestEstimate:
    def test_requires_exactly_one_data_source(self, cfg_file, tmp_path, capsys):
        code = main(["estimate", "--target", "theta"])
        assert code == 1
        assert "exactly one" in capsys.readouterr().err

        data = tmp_path / "d.csv"
        main(["simulate", "--dgp-config", cfg_file, "--n", "20", "--seed", "0",
              "--out", str(data)])
        code = main(
            ["estimate", "--data", str(data), "--dgp-config", cfg_file,
             "--target", "theta"]
        )
        assert code == 1
        assert "exactly one" in capsys.readouterr().err

    def test_missing_data_file_names_the_path(self, tmp_path, capsys):
        missing = str(tmp_path / "absent.csv")
        code = main(
            ["estimate", "--data", missing, "--target", "theta",
             "--horizon", "1.0"]
        )
        assert code == 1
        assert "absent.csv" in capsys.readouterr().err

    def test_horizon_required_with_csv_data(self, cfg_file, tmp_path, capsys):
        data = tmp_path / "d.csv"
        main(["simulate", "--dgp-config", cfg_file, "--n", "30", "--seed", "0",
              "--out", str(data)])
        code = main(["estimate", "--data", str(data), "--target", "theta"])
        assert code == 1
        assert "--horizon" in capsys.readouterr().err

    def test_summary_line_format(self, cfg_file, learners_file, capsys):
        code = main(
            estimate_args(
                cfg_file, learners_file,
                "--target", "omega", "--covariate", "1", "--horizon", "1.0",
            )
        )
        assert code == 0
        line = capsys.readouterr().out.strip()
        assert re.fullmatch(
            r"target=omega_1 point=-?\d+\.\d{3} se=\d+\.\d{3} p=\d\.\de[+-]\d{2,3}",
            line,
        )

    def test_multi_covariate_label_joins_indices(
        self, cfg_file, learners_file, capsys
    ):
        code = main(
            estimate_args(
                cfg_file, learners_file,
                "--target", "theta", "--subset", "1,2", "--horizon", "1.0",
            )
        )
        assert code == 0
        assert capsys.readouterr().out.startswith("target=theta_1-2 ")

    def test_report_bytes_deterministic(self, cfg_file, learners_file, tmp_path):
        paths = [tmp_path / "r1.json", tmp_path / "r2.json"]
        for path in paths:
            code = main(
                estimate_args(
                    cfg_file, learners_file,
                    "--target", "theta", "--subset", "1", "--horizon", "1.0",
                    "--out", str(path),
                )
            )
            assert code == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()
        report = json.loads(paths[0].read_text())
        assert list(report) == sorted(report)
        assert report["ci"][0] < report["point"] < report["ci"][1]
        assert report["se"] > 0

    def test_manifest_records_the_run(self, cfg_file, learners_file, tmp_path):
        out = tmp_path / "report.json"
        main(
            estimate_args(
                cfg_file, learners_file,
                "--target", "psi", "--subset", "1", "--horizon", "1.0",
                "--out", str(out),
            )
        )
        manifest = json.loads((tmp_path / "report.manifest.json").read_text())
        assert manifest["command"] == "estimate"
        args = manifest["arguments"]
        assert args["target"] == "psi_l"
        assert args["subset"] == [1]
        assert args["horizon"] == 1.0
        assert args["folds"] == 2
        assert args["learners"]["event_model"]["kind"] == "cox-breslow"
        assert args["data"] is None and args["n"] == 250

    def test_eif_dump_has_per_subject_rows(
        self, cfg_file, learners_file, tmp_path
    ):
        dump = tmp_path / "eif.csv"
        main(
            estimate_args(
                cfg_file, learners_file,
                "--target", "theta", "--subset", "1", "--horizon", "1.0",
                "--dump-eif", str(dump),
            )
        )
        with open(dump, newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 250
        required = {"index", "fold", "phi", "phi1", "phi0", "truncated"}
        assert required <= set(rows[0])
        indices = sorted(int(row["index"]) for row in rows)
        assert indices == list(range(250))
        assert all(int(row["fold"]) in (1, 2) for row in rows)
        assert math.isfinite(float(rows[0]["phi"]))


class TestOracle:
    def test_json_payload(self, cfg_file, tmp_path):
        out = tmp_path / "oracle.json"
        code = main(
            ["oracle", "--dgp-config", cfg_file, "--target", "theta",
             "--draws", "10000", "--seed", "2", "--out", str(out)]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert set(payload) == {"target", "value", "mc_se", "n_draws", "seed"}
        assert payload["target"] == "theta_d"
        assert payload["n_draws"] == 10000
        assert payload["value"] > 0
        manifest = json.loads((tmp_path / "oracle.manifest.json").read_text())
        assert manifest["command"] == "oracle"
        assert manifest["arguments"]["draws"] == 10000

    def test_zeta_is_logit_of_share(self, cfg_file, tmp_path):
        psi_out = tmp_path / "psi.json"
        zeta_out = tmp_path / "zeta.json"
        common = ["--dgp-config", cfg_file, "--subset", "1", "--draws", "10000",
                  "--inner-draws", "80", "--seed", "4"]
        assert main(["oracle", *common, "--target", "psi", "--out", str(psi_out)]) == 0
        assert main(["oracle", *common, "--target", "zeta", "--out", str(zeta_out)]) == 0
        psi = json.loads(psi_out.read_text())["value"]
        zeta = json.loads(zeta_out.read_text())["value"]
        assert zeta == pytest.approx(math.log(psi / (1.0 - psi)), rel=1e-12)

    def test_flat_process_share_is_degenerate(self, flat_cfg_file, capsys):
        code = main(
            ["oracle", "--dgp-config", flat_cfg_file, "--target", "psi",
             "--subset", "1", "--draws", "10000", "--inner-draws", "80",
             "--seed", "5"]
        )
        assert code == 2
        assert "DegenerateTargetError" in capsys.readouterr().err

    def test_ate_target(self, cfg_file, capsys):
        code = main(
            ["oracle", "--dgp-config", cfg_file, "--target", "ate",
             "--draws", "10000", "--seed", "1"]
        )
        assert code == 0
        assert capsys.readouterr().out.startswith("target=ate ")


class TestReplicate:
    def test_custom_learners_summary_csv(
        self, cfg_file, learners_file, tmp_path, capsys
    ):
        out = tmp_path / "table.csv"
        code = main(
            ["replicate", "--dgp-config", cfg_file, "--target", "gamma",
             "--covariate", "1", "--horizon", "1.0", "--learners", learners_file,
             "--folds", "2", "--inner-folds", "2", "--n", "150", "--reps", "2",
             "--seed", "9", "--oracle-value", "-0.05", "--out", str(out)]
        )
        assert code == 0
        with open(out, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["n", "method", "bias", "coverage", "sd", "mean_se", "mse"]
        assert len(rows) == 2
        assert rows[1][0] == "150" and rows[1][1] == "custom"
        assert all(math.isfinite(float(cell)) for cell in rows[1][2:])
        stdout = capsys.readouterr().out
        assert "method=custom" in stdout and "bias=" in stdout
        manifest = json.loads((tmp_path / "table.manifest.json").read_text())
        assert manifest["arguments"]["oracle_value"] == -0.05
        assert manifest["arguments"]["reps"] == 2

    def test_preset_without_crossfit_forces_single_fold(self, tmp_path):
        cfg = tmp_path / "wide.json"
        cfg.write_text(json.dumps(wide_config().to_dict()), encoding="utf-8")
        out = tmp_path / "table.csv"
        code = main(
            ["replicate", "--dgp-config", str(cfg), "--target", "gamma",
             "--covariate", "1", "--horizon", "1.0", "--preset", "correct-kernel",
             "--folds", "7", "--inner-folds", "2", "--n", "150", "--reps", "2",
             "--seed", "3", "--oracle-value", "0.0", "--out", str(out)]
        )
        assert code == 0
        manifest = json.loads((tmp_path / "table.manifest.json").read_text())
        assert manifest["arguments"]["folds"] == 1
        assert manifest["arguments"]["method"] == "correct-kernel"
        with open(out, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[1][1] == "correct-kernel"
