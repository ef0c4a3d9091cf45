import json

import numpy as np
import pytest

from lossprobe.analysis import PeakStats, RegionSegmentation, Span, detect_regions, global_diff, token_diff
from lossprobe.core import TokenSequence, ValidationError, derive_seed
from lossprobe.harness import (
    CSV_COLUMNS,
    DEFAULT_NOISE_LENGTHS,
    DEFAULT_SHUFFLE_SEGMENTS,
    ExperimentConfig,
    SweepRow,
    correlation_block,
    emit_report,
    load_config,
    load_report,
    merge_reports,
    report_to_canonical_json,
    run_sweep,
)
from lossprobe.scoring import BackendError, open_builtin, score_sequence
from lossprobe.toymodel import save_model

from conftest import stub_command


@pytest.fixture(scope="module")
def model_path(small_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.json"
    save_model(small_model, path)
    return path


def make_config(model_path, **over):
    base = dict(
        kind="noise",
        lengths=(5, 10, 30),
        start=20,
        expected_len=96,
        scorer={"kind": "builtin-ngram", "model": str(model_path)},
        noise_mode="constant",
        noise_vocab=(64,),
        master_seed=11,
    )
    base.update(over)
    return ExperimentConfig(**base)


class TestConfig:
    def test_round_trip(self, model_path):
        cfg = make_config(model_path, workers=3, formats=("csv", "json", "svg"))
        assert ExperimentConfig.from_json_dict(cfg.to_json_dict()) == cfg

    def test_shuffle_round_trip(self, model_path):
        cfg = make_config(model_path, kind="shuffle", lengths=(1, 2, 5), shuffle_window_len=60)
        assert ExperimentConfig.from_json_dict(cfg.to_json_dict()) == cfg

    def test_empty_lengths_take_kind_default(self, model_path):
        scorer = {"kind": "builtin-ngram", "model": str(model_path)}
        noise = ExperimentConfig(kind="noise", scorer=scorer)
        assert noise.lengths == DEFAULT_NOISE_LENGTHS
        shuffle = ExperimentConfig(kind="shuffle", scorer=scorer, expected_len=750)
        assert shuffle.lengths == DEFAULT_SHUFFLE_SEGMENTS

    def test_load_config_file(self, model_path, tmp_path):
        cfg = make_config(model_path)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_json_dict()))
        assert load_config(path) == cfg

    def test_rejects_unknown_field(self, model_path):
        doc = make_config(model_path).to_json_dict()
        doc["typo_field"] = 1
        with pytest.raises(ValidationError):
            ExperimentConfig.from_json_dict(doc)

    def test_rejects_wrong_version(self, model_path):
        doc = make_config(model_path).to_json_dict()
        doc["config_version"] = 99
        with pytest.raises(ValidationError):
            ExperimentConfig.from_json_dict(doc)

    def test_rejects_non_increasing_lengths(self, model_path):
        with pytest.raises(ValidationError):
            make_config(model_path, lengths=(5, 5, 10))

    def test_rejects_window_past_expected_len(self, model_path):
        with pytest.raises(ValidationError):
            make_config(model_path, lengths=(5, 90))

    def test_rejects_shuffle_window_past_expected_len(self, model_path):
        with pytest.raises(ValidationError):
            make_config(model_path, kind="shuffle", lengths=(1, 2), shuffle_window_len=90)

    def test_rejects_even_smooth_len(self, model_path):
        with pytest.raises(ValidationError):
            make_config(model_path, smooth_len=4)

    def test_rejects_zero_workers(self, model_path):
        with pytest.raises(ValidationError):
            make_config(model_path, workers=0)

    def test_rejects_unknown_format(self, model_path):
        with pytest.raises(ValidationError):
            make_config(model_path, formats=("csv", "pdf"))

    def test_rejects_missing_scorer(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(kind="noise", lengths=(5,), start=20, expected_len=96)


class TestRunSweep:
    def test_row_matches_manual_pipeline(self, model_path, small_model, small_eval):
        cfg = make_config(model_path, lengths=(10,))
        sample = small_eval[0]
        report = run_sweep(cfg, [sample])
        assert len(report.rows) == 1
        row = report.rows[0]

        handle = open_builtin(small_model)
        original = score_sequence(handle, sample)
        seed = derive_seed(cfg.master_seed, sample.id, 10)
        from lossprobe.core import PerturbationSpec

        spec = PerturbationSpec(kind="noise", start=20, length=10, seed=seed,
                                noise_mode="constant", noise_vocab=(64,))
        perturbed = score_sequence(handle, spec.apply(sample))
        diff = token_diff(original, perturbed, spec.window)
        assert row.seed == seed
        assert row.delta_nll == global_diff(diff)
        seg = detect_regions(diff, smooth_len=cfg.smooth_len, run_len=cfg.run_len,
                             zero_tol=cfg.zero_tol)
        assert row.regions == seg

    def test_accounting_rows_skipped_failed(self, model_path, small_eval):
        good = list(small_eval[:2])
        short = TokenSequence(id="zz-short", tokens=np.arange(50) % 60, vocab_size=68)
        # vocab 60 < noise token 64: scoring works, injection fails per length
        bad_vocab = TokenSequence(id="zz-small-vocab", tokens=np.arange(96) % 60, vocab_size=60)
        cfg = make_config(model_path)
        report = run_sweep(cfg, good + [short, bad_vocab])
        assert len(report.rows) == 2 * 3
        assert len(report.skipped) == 3
        assert len(report.failed) == 3
        total = len(report.rows) + len(report.skipped) + len(report.failed)
        assert total == 4 * 3
        assert all(s["sample_id"] == "zz-short" for s in report.skipped)
        assert all(f["sample_id"] == "zz-small-vocab" for f in report.failed)

    def test_oversized_sample_truncated(self, model_path, small_model):
        rng = np.random.default_rng(0)
        long_seq = TokenSequence(id="long", tokens=rng.integers(0, 64, size=300), vocab_size=68)
        cfg = make_config(model_path, lengths=(10,))
        report = run_sweep(cfg, [long_seq])
        row = report.rows[0]
        # regions live within the truncated length, not the raw length
        assert row.regions.recovery.end <= 96
        assert report.profile_example is not None
        assert len(report.profile_example["delta_nll_values"]) == 96

    def test_deterministic_reruns(self, model_path, small_eval):
        cfg = make_config(model_path)
        a = run_sweep(cfg, list(small_eval[:4]))
        b = run_sweep(cfg, list(small_eval[:4]))
        assert report_to_canonical_json(a.to_json_dict()) == report_to_canonical_json(b.to_json_dict())

    def test_worker_count_never_changes_output(self, model_path, small_eval):
        samples = list(small_eval[:6])
        one = run_sweep(make_config(model_path, workers=1), samples)
        four = run_sweep(make_config(model_path, workers=4), samples)
        a = one.to_json_dict()
        b = four.to_json_dict()
        a["config"]["workers"] = b["config"]["workers"] = 0
        assert report_to_canonical_json(a) == report_to_canonical_json(b)

    def test_external_scorer_sweep(self, small_eval):
        cfg = ExperimentConfig(
            kind="noise", lengths=(5, 10, 30), start=20, expected_len=96,
            scorer={"kind": "external", "command": stub_command("ok")},
            noise_vocab=(64,), master_seed=2, workers=2,
        )
        report = run_sweep(cfg, list(small_eval[:3]))
        assert len(report.rows) == 9
        assert report.scorer["name"] == "mock-ok"

    def test_prefix_is_exactly_zero(self, model_path, small_eval):
        cfg = make_config(model_path)
        report = run_sweep(cfg, list(small_eval[:2]))
        values = np.asarray(report.profile_example["delta_nll_values"])
        assert np.all(values[:20] == 0.0)

    def test_shuffle_identity_segment_gives_zero_delta(self, model_path, small_eval):
        cfg = make_config(model_path, kind="shuffle", lengths=(1, 5, 60),
                          shuffle_window_len=60)
        report = run_sweep(cfg, list(small_eval[:3]))
        # one segment spanning the whole window leaves the sequence intact
        for row in report.rows:
            if row.length == 60:
                assert row.delta_nll == 0.0
                assert row.regions.peak.empty

    def test_no_rows_raises(self, model_path):
        short = TokenSequence(id="tiny", tokens=np.arange(10) % 60, vocab_size=60)
        cfg = make_config(model_path)
        with pytest.raises(BackendError, match="no rows"):
            run_sweep(cfg, [short])

    def test_noise_vocab_checked_against_scorer(self, model_path, small_eval):
        cfg = make_config(model_path, noise_vocab=(200,))
        with pytest.raises(ValidationError):
            run_sweep(cfg, list(small_eval[:1]))

    def test_aggregates_recomputed_from_rows(self, model_path, small_eval):
        cfg = make_config(model_path)
        report = run_sweep(cfg, list(small_eval[:5]))
        for agg in report.aggregates:
            values = [r.delta_nll for r in report.rows if r.length == agg["length_tokens"]]
            assert agg["n"] == len(values)
            assert agg["mean_delta_nll"] == pytest.approx(float(np.mean(values)), abs=1e-12)
            want_std = float(np.std(values, ddof=1)) if len(values) >= 2 else 0.0
            assert agg["std_delta_nll"] == pytest.approx(want_std, abs=1e-12)


def stub_row(sample_id, length, delta, seed=0):
    empty = Span(5, 5)
    seg = RegionSegmentation(peak=empty, assimilation=empty, recovery=empty,
                             smooth_len=1, run_len=5, zero_tol=1e-6)
    return SweepRow(sample_id=sample_id, length=length, seed=seed,
                    delta_nll=delta, regions=seg, peak=None)


class TestCorrelations:
    def test_aggregated_uses_one_point_per_length(self):
        rows = [stub_row(f"s{i}", L, -0.5 * L + i) for i in range(4) for L in (5, 10, 20, 40)]
        block = correlation_block(rows, "aggregated")
        assert block["pearson"].n == 4
        assert block["spearman"].method == "spearman-exact"
        large = correlation_block(rows, "large-sample")
        assert large["pearson"].n == 16

    def test_strictly_decreasing_means_give_rho_minus_one(self):
        rows = [stub_row("a", L, -float(L)) for L in (5, 10, 20, 40, 80, 160)]
        block = correlation_block(rows, "aggregated")
        assert block["spearman"].statistic == -1.0
        assert block["pearson"].statistic == pytest.approx(-1.0, abs=1e-12)

    def test_constant_delta_not_computable(self):
        rows = [stub_row("a", L, 1.0) for L in (5, 10, 20)]
        with pytest.raises(ValidationError):
            correlation_block(rows, "aggregated")

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            correlation_block([stub_row("a", 5, 1.0)], "median")


@pytest.fixture(scope="module")
def report(model_path, small_eval):
    cfg = make_config(model_path)
    return run_sweep(cfg, list(small_eval[:4]))


class TestEmit:
    def test_csv_header_and_rows(self, report, tmp_path):
        emit_report(report, ("csv",), tmp_path)
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[0].startswith("sample_id,length_tokens,delta_nll,peak_height,peak_latency")
        assert len(lines) == 1 + len(report.rows)

    def test_json_round_trips_byte_identical(self, report, tmp_path):
        emit_report(report, ("json",), tmp_path / "a")
        emit_report(report, ("json",), tmp_path / "b")
        a = (tmp_path / "a" / "report.json").read_bytes()
        b = (tmp_path / "b" / "report.json").read_bytes()
        assert a == b
        doc = load_report(tmp_path / "a" / "report.json")
        emit_report(doc, ("json",), tmp_path / "c")
        assert (tmp_path / "c" / "report.json").read_bytes() == a

    def test_svg_outputs_are_stable(self, report, tmp_path):
        emit_report(report, ("svg",), tmp_path / "a")
        emit_report(report, ("svg",), tmp_path / "b")
        for name in ("mean_vs_length.svg", "profile_regions.svg"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b
            assert a.lstrip().startswith(b"<?xml")

    def test_refuses_empty_report(self, report, tmp_path):
        doc = report.to_json_dict()
        doc["rows"] = []
        out = tmp_path / "empty"
        with pytest.raises(ValidationError, match="no rows"):
            emit_report(doc, ("csv", "json"), out)
        assert not out.exists()

    def test_rejects_unknown_format(self, report, tmp_path):
        with pytest.raises(ValidationError):
            emit_report(report, ("html",), tmp_path)

    def test_load_report_rejects_other_json(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text(json.dumps({"hello": 1}))
        with pytest.raises(ValidationError):
            load_report(path)


class TestMerge:
    def test_pooled_rows_and_recomputed_stats(self, model_path, small_eval, tmp_path):
        a = run_sweep(make_config(model_path, master_seed=1), list(small_eval[:3]))
        b = run_sweep(make_config(model_path, master_seed=2), list(small_eval[3:6]))
        merged = merge_reports([a.to_json_dict(), b.to_json_dict()])
        assert len(merged["rows"]) == len(a.rows) + len(b.rows)
        assert {r["source"] for r in merged["rows"]} == {0, 1}
        assert merged["correlations"]["large_sample"]["pearson"]["n"] == len(merged["rows"])
        # merged output is emittable and canonical
        emit_report(merged, ("json", "csv"), tmp_path)
        again = load_report(tmp_path / "report.json")
        assert again["rows"] == merged["rows"]

    def test_kind_mismatch_rejected(self, model_path, small_eval):
        noise = run_sweep(make_config(model_path, lengths=(10,)), list(small_eval[:2]))
        shuffle = run_sweep(
            make_config(model_path, kind="shuffle", lengths=(5,), shuffle_window_len=60),
            list(small_eval[:2]),
        )
        with pytest.raises(ValidationError, match="different kinds"):
            merge_reports([noise.to_json_dict(), shuffle.to_json_dict()])

    def test_merge_nothing_rejected(self):
        with pytest.raises(ValidationError):
            merge_reports([])
