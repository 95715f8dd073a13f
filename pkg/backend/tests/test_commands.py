"""
Tests for the command handlers: config resolution, outputs and exit codes
"""

import json
from unittest.mock import patch

import pandas as pd
import pytest

from src.commands.certify import run_certify_command
from src.commands.common import EXIT_CHECK, EXIT_INVALID, EXIT_OK, EXIT_PLAN, apply_overrides, resolve_config
from src.commands.compare import run_compare_command
from src.commands.estimate import run_estimate_command
from src.commands.sweep import run_sweep_command
from src.commands.verify import run_verify_command
from src.config import EstimateConfig, SEED_ENV, VerifyConfig
from src.exceptions import ConstructionFailedError

ESTIMATE = {
    "distribution.kind": "uniform",
    "distribution.n": 4,
    "functional.kind": "tsallis",
    "functional.q": 2.0,
    "eps": 0.2,
    "trials": 2,
}

SMALL_VERIFY = {
    "q_values": [2.0],
    "eps_values": [0.2],
    "n_values": [4],
    "include_shannon": False,
    "profiles": ["ideal"],
    "compare_count": 0,
}


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


class TestConfigResolution:
    def test_apply_overrides(self):
        merged = apply_overrides({"distribution": {"kind": "zipf", "s": 2.0}}, {"distribution.n": 8, "eps": None})
        assert merged == {"distribution": {"kind": "zipf", "s": 2.0, "n": 8}}

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"q_values": [0.5], "seed": 3}))
        config = resolve_config(VerifyConfig, str(path), {"seed": 5})
        assert config.q_values == [0.5]
        assert config.seed == 5

    def test_environment_seed_wins(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "11")
        config = resolve_config(EstimateConfig, None, dict(ESTIMATE, seed=2))
        assert config.seed == 11

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ValueError):
            resolve_config(VerifyConfig, str(path), {})


class TestEstimateCommand:
    """estimate outputs and exit codes"""

    def test_writes_outputs(self, tmp_path, capsys):
        assert run_estimate_command(None, ESTIMATE, str(tmp_path)) == EXIT_OK
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["trials"] == 2
        lines = (tmp_path / "trials.jsonl").read_text().splitlines()
        assert [json.loads(line)["trial"] for line in lines] == [0, 1]
        assert json.loads((tmp_path / "plan.json").read_text())["m"] == summary["m"]
        printed = json.loads(capsys.readouterr().out)
        assert "config" not in printed and printed["trials"] == 2

    def test_outputs_are_byte_identical(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert run_estimate_command(None, ESTIMATE, str(first)) == EXIT_OK
        assert run_estimate_command(None, dict(ESTIMATE, workers=1), str(second)) == EXIT_OK
        assert (first / "trials.jsonl").read_bytes() == (second / "trials.jsonl").read_bytes()

    def test_missing_eps(self, tmp_path):
        overrides = {k: v for k, v in ESTIMATE.items() if k != "eps"}
        assert run_estimate_command(None, overrides, str(tmp_path)) == EXIT_INVALID

    def test_unnormalized_file(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("0.4\n0.4\n")
        overrides = dict(ESTIMATE, **{"distribution.kind": "file", "distribution.path": str(path)})
        assert run_estimate_command(None, overrides, str(tmp_path / "out")) == EXIT_INVALID

    def test_plan_failure(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("0.9\n0.1\n")
        overrides = {
            "distribution.kind": "file", "distribution.path": str(path),
            "functional.kind": "shannon", "eps": 0.5, "trials": 1,
        }
        assert run_estimate_command(None, overrides, str(tmp_path / "out")) == EXIT_PLAN


class TestVerifyCommand:
    def test_passes(self, tmp_path):
        assert run_verify_command(None, SMALL_VERIFY, str(tmp_path)) == EXIT_OK
        assert json.loads((tmp_path / "report.json").read_text())["passed"] is True

    def test_sabotage_fails_with_check_code(self, tmp_path):
        overrides = dict(SMALL_VERIFY, sabotage_bounds=0.5)
        assert run_verify_command(None, overrides, str(tmp_path)) == EXIT_CHECK


class TestCertifyCommand:
    def test_certifies(self, tmp_path):
        overrides = {"kind": "neg_power", "c": 0.5, "delta": 0.125, "eps": 0.01}
        assert run_certify_command(None, overrides, str(tmp_path)) == EXIT_OK
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["poly"]["cert"]["passed"] is True

    def test_missing_parameters(self, tmp_path):
        assert run_certify_command(None, {"kind": "pos_power", "c": 1.0, "eps": 0.01}, str(tmp_path)) == EXIT_INVALID

    @patch("src.commands.certify.certify_polynomial")
    def test_construction_failure(self, mock_certify, tmp_path):
        mock_certify.side_effect = ConstructionFailedError("no luck", sup_error=0.5, degree=64, interval=(0.1, 1.0))
        overrides = {"kind": "neg_power", "c": 0.5, "delta": 0.125, "eps": 0.01}
        assert run_certify_command(None, overrides, str(tmp_path)) == EXIT_PLAN
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["failure"]["degree"] == 64


class TestSweepAndCompare:
    def test_sweep_csv(self, tmp_path):
        overrides = {"q": 2.0, "eps_values": [0.4, 0.2], "n_values": [4], "trials": 1}
        assert run_sweep_command(None, overrides, str(tmp_path)) == EXIT_OK
        frame = pd.read_csv(tmp_path / "sweep.csv")
        assert list(frame.columns) == ["q", "n", "eps", "seed", "queries_total", "abs_error", "success"]
        assert len(frame) == 2

    def test_sweep_rejects_q_one(self, tmp_path):
        overrides = {"q": 1.0, "eps_values": [0.2], "n_values": [4]}
        assert run_sweep_command(None, overrides, str(tmp_path)) == EXIT_INVALID

    def test_compare(self, tmp_path):
        overrides = {"count": 2, "max_n": 3, "eps": 0.2}
        assert run_compare_command(None, overrides, str(tmp_path)) == EXIT_OK
        assert json.loads((tmp_path / "report.json").read_text())["passed"] is True
