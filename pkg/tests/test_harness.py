import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest

from lharq_aoei.errors import InvalidParameterError
from lharq_aoei.figures import render_sweep_figure
from lharq_aoei.harness import (
    SweepResult,
    SweepRow,
    child_rng,
    default_spec,
    run_experiment,
    sweep_policy,
    write_manifest,
    write_rows_csv,
    _check_monotone,
)


def _small(**kw):
    base = dict(trials=3, departures_per_trial=20_000, bank_size=100_000,
                slots_per_trial=20_000)
    base.update(kw)
    return default_spec(**base)


class TestSeedSplitting:
    def test_streams_are_independent(self):
        a = child_rng(1, 0, 0).random(4)
        b = child_rng(1, 1, 0).random(4)
        c = child_rng(1, 0, 1).random(4)
        assert not np.allclose(a, b) and not np.allclose(a, c)

    def test_reconstructible_in_isolation(self):
        assert np.array_equal(child_rng(7, 2, 5).random(8), child_rng(7, 2, 5).random(8))


class TestSpecValidation:
    def test_unknown_sweep_rejected(self):
        with pytest.raises(InvalidParameterError):
            default_spec(sweep="bogus")

    def test_empty_grid_rejected(self):
        with pytest.raises(InvalidParameterError):
            default_spec(grid=())

    def test_manifest_echo_is_complete(self):
        spec = _small()
        d = spec.as_dict()
        assert d["master_seed"] == spec.master_seed
        assert d["harq"]["max_rounds"] == spec.harq.max_rounds
        assert len(d["link"]["interferers"]) == spec.num_gbs


class TestEngineSweeps:
    def test_gamma_threshold_rows(self):
        res = run_experiment(_small(sweep="gamma-th", grid=(0.5, 1.0, 2.0)))
        assert res.violations == []
        assert [r.axis["gamma_th"] for r in res.rows] == [0.5, 1.0, 2.0]
        ages = [r.aoei_empirical for r in res.rows]
        assert ages == sorted(ages)
        for r in res.rows:
            assert abs(r.aoei_empirical - r.aoei_corrected) <= max(
                0.01 * r.aoei_corrected, 3 * r.aoei_ci95
            )

    def test_snr_rows_fall(self):
        res = run_experiment(_small(sweep="snr", grid=(2.0, 8.0, 14.0, 20.0)))
        assert res.violations == []
        ages = [r.aoei_empirical for r in res.rows]
        assert ages == sorted(ages, reverse=True)

    def test_k_sweep_age_grows_through_depth_alone(self):
        # Rounds are i.i.d. across circle boundaries, so the interdeparture
        # law ignores the limit; only the recovery depth moves, adding age.
        spec = _small(sweep="k", grid=(1, 2, 4))
        spec = replace(spec, harq=replace(spec.harq, snr_threshold=8.0))
        res = run_experiment(spec)
        assert res.violations == []
        means = [r.interdeparture_mean for r in res.rows]
        assert max(means) - min(means) < 0.05 * means[0]
        ages = [r.aoei_empirical for r in res.rows]
        assert ages == sorted(ages)
        depths = [r.depth_mean for r in res.rows]
        assert depths == sorted(depths)

    def test_k_sweep_flat_at_high_snr(self):
        spec = _small(sweep="k", grid=(1, 2, 4, 8))
        spec = replace(spec, harq=replace(spec.harq, snr_threshold=0.05))
        res = run_experiment(spec)
        ages = [r.aoei_empirical for r in res.rows]
        cis = [r.aoei_ci95 for r in res.rows]
        assert max(ages) - min(ages) <= 2 * (max(cis) + 0.002)

    def test_interference_axes(self):
        for kind, grid in [
            ("gbs", (0, 1, 2, 3)),
            ("alpha", (2.0, 3.0, 4.0)),
            ("imbalance", (1.0, 3.0, 5.0)),
        ]:
            res = run_experiment(_small(sweep=kind, grid=grid))
            assert res.violations == [], (kind, res.violations)

    def test_impossible_threshold_marks_row_failed(self):
        spec = _small(sweep="gamma-th", grid=(1e12,))
        res = run_experiment(spec)
        assert res.rows[0].error != ""

    def test_determinism_across_runs(self):
        spec = _small(sweep="gamma-th", grid=(0.5, 1.5))
        r1 = run_experiment(spec)
        r2 = run_experiment(spec)
        for a, b in zip(r1.rows, r2.rows):
            assert a.aoei_empirical == b.aoei_empirical
            assert a.p_ff == b.p_ff

    def test_ci_shrinks_like_root_trials(self):
        spec_small = _small(trials=64, departures_per_trial=5_000,
                            sweep="gamma-th", grid=(1.0,))
        spec_big = replace(spec_small, trials=128)
        ci_small = run_experiment(spec_small).rows[0].aoei_ci95
        ci_big = run_experiment(spec_big).rows[0].aoei_ci95
        assert 0.6 <= ci_big / ci_small <= 0.85


class TestPolicySweep:
    def test_rows_trends_and_baseline(self):
        spec = _small(sweep="policy", trials=3, slots_per_trial=30_000)
        res = sweep_policy(spec, (0.0, 0.5, 1.0), (0.0, 100.0))
        assert res.violations == [], res.violations
        baseline = [r for r in res.rows if r.strategy == "baseline"]
        assert len(baseline) == 1
        phi_one = [r for r in res.rows if r.strategy == "adaptive" and r.axis["phi_th"] == 1.0]
        assert all(r.delivery_ratio == pytest.approx(0.5, rel=0.02) for r in phi_one)
        # threshold 1 is the efficiency maximum for each decay cut
        for beta in (0.0, 100.0):
            cut = [r for r in res.rows if r.strategy == "adaptive" and r.axis["beta"] == beta]
            best = max(cut, key=lambda r: r.efficiency)
            assert best.axis["phi_th"] == 1.0

    def test_parallel_matches_serial(self):
        spec = _small(sweep="policy", trials=2, slots_per_trial=5_000)
        serial = sweep_policy(spec, (0.0, 1.0), (0.0,), max_workers=1)
        parallel = sweep_policy(spec, (0.0, 1.0), (0.0,), max_workers=2)
        for a, b in zip(serial.rows, parallel.rows):
            assert a.aoei_empirical == b.aoei_empirical
            assert a.efficiency == b.efficiency


class TestViolationMachinery:
    def test_monotone_check_flags_drop(self):
        spec = _small(sweep="gamma-th", grid=(1.0,))
        rows = [
            SweepRow(axis={"x": 0.0}, aoei_empirical=1.0, aoei_ci95=0.0),
            SweepRow(axis={"x": 1.0}, aoei_empirical=0.5, aoei_ci95=0.0),
        ]
        res = SweepResult(spec, ("x",), rows)
        _check_monotone(res, "x", "aoei_empirical", "nondecreasing")
        assert len(res.violations) == 1


class TestOutputs:
    def test_csv_and_manifest_round_trip(self, tmp_path):
        spec = _small(sweep="gamma-th", grid=(0.5, 1.0))
        res = run_experiment(spec)
        csv_path = tmp_path / "rows.csv"
        write_rows_csv(res, csv_path)
        text = csv_path.read_text().splitlines()
        assert text[0].startswith("gamma_th,aoei_empirical,")
        assert len(text) == 1 + len(res.rows)
        manifest_path = tmp_path / "m.json"
        write_manifest(res, ["rows.csv"], manifest_path)
        manifest = json.loads(manifest_path.read_text())
        assert manifest["spec"]["master_seed"] == spec.master_seed
        assert manifest["outputs"] == ["rows.csv"]

    def test_csv_bytes_are_reproducible(self, tmp_path):
        spec = _small(sweep="snr", grid=(5.0, 10.0))
        digests = []
        for name in ("a.csv", "b.csv"):
            res = run_experiment(spec)
            path = tmp_path / name
            write_rows_csv(res, path)
            digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_figures_render(self, tmp_path):
        res = run_experiment(_small(sweep="gamma-th", grid=(0.5, 1.0)))
        out = render_sweep_figure(res, tmp_path / "fig.png")
        assert (tmp_path / "fig.png").stat().st_size > 1000
        spec = _small(sweep="policy", trials=2, slots_per_trial=4_000)
        res2 = sweep_policy(spec, (0.0, 1.0), (0.0, 2.0))
        render_sweep_figure(res2, tmp_path / "fig2.png")
        assert (tmp_path / "fig2.png").stat().st_size > 1000
