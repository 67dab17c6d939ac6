import hashlib
import json

import pytest

from lharq_aoei.cli import main

SMALL_CONFIG = """
[channel]
preset = average

[harq]
max_rounds = 2
mixing_rate = 0.3
rate_bpcu = 2.0
snr_threshold_db = 0.0

[sim]
trials = 3
departures_per_trial = 20000
bank_size = 100000
master_seed = 777

[sweep]
kind = gamma-th
grid = 0.5 1.0 2.0
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(SMALL_CONFIG)
    return path


class TestAnalyze:
    def test_error_free_age(self, capsys):
        assert main(["analyze", "--pff", "0", "--pbt", "0.5", "--k", "2"]) == 0
        out = capsys.readouterr().out
        assert "average age          : 0.5 slots" in out

    def test_both_modes_flag_disagreement(self, capsys):
        rc = main(["analyze", "--pff", "0.5", "--pbt", "0.2", "--k", "2", "--mode", "both"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.count("average age") == 2
        assert "disagree" in out

    def test_json_output(self, capsys):
        rc = main(["analyze", "--pff", "0.5", "--pbt", "0.2", "--k", "2", "--json"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload[0]["mode"] == "corrected"
        assert payload[0]["interdeparture_mean"] == pytest.approx(2.0)

    def test_divergent_model_is_usage_error(self, capsys):
        assert main(["analyze", "--pff", "1", "--pbt", "0.2", "--k", "2"]) == 2
        assert "error:" in capsys.readouterr().err


class TestSimulate:
    def test_writes_csv_figure_manifest(self, small_config, tmp_path, capsys):
        out = tmp_path / "results"
        assert main(["simulate", "--config", str(small_config), "--out", str(out)]) == 0
        assert (out / "sweep-gamma-th.csv").exists()
        assert (out / "sweep-gamma-th.png").exists()
        manifest = json.loads((out / "sweep-gamma-th.manifest.json").read_text())
        assert manifest["spec"]["master_seed"] == 777
        assert "sweep-gamma-th.csv" in manifest["outputs"]

    def test_rerun_is_byte_identical(self, small_config, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(
                ["simulate", "--config", str(small_config), "--out", str(out),
                 "--no-figures"]
            ) == 0
            outs.append(hashlib.sha256((out / "sweep-gamma-th.csv").read_bytes()).hexdigest())
        assert outs[0] == outs[1]

    def test_missing_config_is_usage_error(self, tmp_path, capsys):
        rc = main(["simulate", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)])
        assert rc == 2

    def test_constraint_violation_names_the_rule(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text(
            "[harq]\nmax_rounds = 2\nmixing_rate = 0.8\nrate_bpcu = 0.5\n"
            "\n[sweep]\nkind = gamma-th\ngrid = 1.0\n"
        )
        rc = main(["simulate", "--config", str(bad), "--out", str(tmp_path)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "mixing_rate" in err and "coding" in err

    def test_unknown_key_rejected(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[harq]\nmax_rounds = 2\ntypo_key = 3\n\n[sweep]\nkind = k\ngrid = 2\n")
        assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
        assert "typo_key" in capsys.readouterr().err

    def test_failed_grid_point_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "steep.ini"
        cfg.write_text(
            SMALL_CONFIG.replace("grid = 0.5 1.0 2.0", "grid = 1e15")
        )
        rc = main(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--no-figures"])
        assert rc == 1
        assert "failed" in capsys.readouterr().err


class TestSweep:
    def test_named_sweep_with_grid_override(self, tmp_path):
        rc = main(
            ["sweep", "--kind", "k", "--out", str(tmp_path), "--grid", "1,2",
             "--no-figures"]
        )
        assert rc == 0
        lines = (tmp_path / "sweep-k.csv").read_text().splitlines()
        assert len(lines) == 3  # header + two grid points


class TestValidate:
    def test_quick_suite_passes(self, capsys):
        assert main(["validate", "--quick"]) == 0
        out = capsys.readouterr().out
        assert "[INFO] depth-closed-form-divergence" in out
        assert "1.44" in out and "0.16" in out
        assert "[PASS] closed-form-vs-simulation-grid" in out
        assert "FAIL" not in out

    def test_detects_injected_corruption(self, capsys, monkeypatch):
        # A sign flip in the corrected conditional depth must trip the grid
        # check by name.
        from lharq_aoei import analytics, validate

        real = analytics.expected_depth_given_rounds

        def flipped(p_bt, n, mode="corrected"):
            val = real(p_bt, n, mode)
            if mode == "corrected":
                q = 1.0 - p_bt
                val = val + 2 * (n - 1) * q**n  # push to the published value
            return val

        monkeypatch.setattr(analytics, "expected_depth_given_rounds", flipped)
        results = validate.run_validation(quick=True)
        by_name = {c.name: c for c in results}
        assert not by_name["closed-form-vs-simulation-grid"].passed


class TestPdfCheck:
    def test_preset_passes(self, capsys):
        rc = main(["pdf-check", "--preset", "average", "--samples", "100000"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "normalization" in out and "chi-square" in out

    def test_rayleigh_note(self, capsys):
        rc = main(
            ["pdf-check", "--b", "0.2", "--m", "3.0", "--omega", "0",
             "--samples", "100000"]
        )
        assert rc == 0
        assert "exponential" in capsys.readouterr().out

    def test_near_rician_note(self, capsys):
        rc = main(
            ["pdf-check", "--b", "0.1", "--m", "80.0", "--omega", "0.9",
             "--samples", "100000"]
        )
        assert rc == 0
        assert "Rician" in capsys.readouterr().out

    def test_invalid_params_usage_error(self, capsys):
        assert main(["pdf-check", "--b", "0", "--m", "1", "--omega", "1"]) == 2
