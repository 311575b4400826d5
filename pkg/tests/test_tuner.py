import numpy as np
import pytest

from convlabel import model, tuner
from convlabel.metrics import MetricsReport
from convlabel.trainer import TrainConfig
from convlabel.tuner import (
    ExperimentData,
    GridSpec,
    LedgerError,
    TrialRecord,
    aggregate,
    enumerate_grid,
    ledger_line,
    parse_ledger,
    run_trial,
    run_trials,
)
from conftest import signature_corpus


class TestEnumerateGrid:
    def test_default_triple_count(self):
        spec = GridSpec(eta_values=[0.001])
        assert len(enumerate_grid(spec)) == 120  # 6 * 5 * 4

    def test_default_full_count(self):
        assert len(enumerate_grid(GridSpec())) == 480

    def test_singletons(self):
        spec = GridSpec([50], [2], [0.2], [0.001], [1], top_m=1)
        grid = enumerate_grid(spec)
        assert grid == [model.Hyperparams(50, 2, 0.2, 0.001)]

    def test_canonical_order(self):
        spec = GridSpec([1, 2], [3, 4], [0.1], [0.5], [1], top_m=1)
        grid = enumerate_grid(spec)
        assert [(h.dc, h.k) for h in grid] == [(1, 3), (1, 4), (2, 3), (2, 4)]

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            GridSpec(dc_values=[])

    def test_stable_across_runs(self):
        assert enumerate_grid(GridSpec()) == enumerate_grid(GridSpec())


def _record(dc, idx, seed, valid_p, test_p, micro=0.5, mac_std=0.4, mac_om=0.45):
    report = MetricsReport(micro, mac_std, mac_om, {5: test_p})
    return TrialRecord(
        model.Hyperparams(dc, 2, 0.2, 0.001), idx, seed, "ok", valid_p, report
    )


class TestAggregate:
    def test_top1_is_best_record(self):
        records = [
            _record(50, 0, 1, 0.9, 0.61),
            _record(150, 1, 1, 0.7, 0.55),
        ]
        per_seed, grand = aggregate(records, 1)
        assert per_seed[1]["p_at_5"] == (0.61, 0.0)
        assert grand["p_at_5"] == 0.61

    def test_hand_mean_std(self):
        test_ps = [0.64, 0.65, 0.66, 0.64, 0.66]
        records = [_record(50 + 100 * i, i, 7, 0.9 - 0.01 * i, p) for i, p in enumerate(test_ps)]
        per_seed, _ = aggregate(records, 5)
        mean, std = per_seed[7]["p_at_5"]
        assert mean == pytest.approx(0.650, abs=1e-12)
        assert std == pytest.approx(0.01, abs=1e-12)

    def test_order_invariance(self):
        records = [_record(50 + 100 * i, i, 7, 0.5 + 0.05 * i, 0.6 + 0.01 * i) for i in range(6)]
        a = aggregate(records, 3)
        b = aggregate(list(reversed(records)), 3)
        assert a == b

    def test_selection_scale_invariance(self):
        records = [_record(50 + 100 * i, i, 7, 0.1 * (i + 1), 0.6 + 0.01 * i) for i in range(6)]
        base = aggregate(records, 3)
        for r in records:
            r.best_valid_p *= 7.5
        assert aggregate(records, 3)[0][7]["p_at_5"] == base[0][7]["p_at_5"]

    def test_too_few_records_names_seed(self):
        records = [_record(50, 0, 42, 0.9, 0.6)]
        with pytest.raises(ValueError, match="42"):
            aggregate(records, 5)

    def test_tie_break_by_grid_order(self):
        records = [
            _record(150, 1, 1, 0.8, 0.99),
            _record(50, 0, 1, 0.8, 0.11),
        ]
        per_seed, _ = aggregate(records, 1)
        assert per_seed[1]["p_at_5"] == (0.11, 0.0)  # lower grid index wins the tie

    def test_failed_records_excluded(self):
        records = [
            _record(50, 0, 1, 0.9, 0.6),
            TrialRecord(model.Hyperparams(150, 2, 0.2, 0.001), 1, 1, "failed"),
        ]
        per_seed, _ = aggregate(records, 1)
        assert per_seed[1]["p_at_5"] == (0.6, 0.0)


def small_data():
    docs, vocab_size, n_labels = signature_corpus()

    class FakeVocab:
        def __init__(self, n):
            self.n = n

        def __len__(self):
            return self.n

        def token_for(self, i):
            return f"tok{i}"

    return ExperimentData(docs, docs[:8], docs[8:16], n_labels, FakeVocab(vocab_size), 6)


def small_config():
    return TrainConfig(batch_size=8, max_epochs=5, patience=4, val_n=5)


class TestRunTrials:
    def test_singleton_matches_standalone(self):
        spec = GridSpec([8], [3], [0.2], [0.003], [99], top_m=1)
        data = small_data()
        config = small_config()
        records = run_trials(spec, "cnn", data, config)
        assert len(records) == 1
        result, report, _ = run_trial("cnn", data, model.Hyperparams(8, 3, 0.2, 0.003), 99, config)
        assert records[0].best_valid_p == result.best_score
        assert records[0].test_metrics == report

    def test_repeat_identical(self):
        spec = GridSpec([4, 8], [2], [0.2], [0.003], [3], top_m=1)
        data = small_data()
        a = run_trials(spec, "caml", data, small_config())
        b = run_trials(spec, "caml", data, small_config())
        for x, y in zip(a, b):
            assert x.best_valid_p == y.best_valid_p
            assert x.test_metrics == y.test_metrics

    def test_toy_grid_smoke(self):
        spec = GridSpec([4, 8], [2, 3], [0.2], [0.003], [3], top_m=2)
        records = run_trials(spec, "cnn", small_data(), small_config())
        assert len(records) == 4
        assert all(r.status == "ok" for r in records)
        assert all(np.isfinite(r.best_valid_p) for r in records)

    def test_parallel_equals_serial(self):
        spec = GridSpec([4, 8], [2], [0.2], [0.003], [3, 5], top_m=1)
        data = small_data()
        serial = run_trials(spec, "cnn", data, small_config(), workers=1)
        parallel = run_trials(spec, "cnn", data, small_config(), workers=4)
        for x, y in zip(serial, parallel):
            assert (x.hp, x.seed, x.best_valid_p) == (y.hp, y.seed, y.best_valid_p)
            assert x.test_metrics == y.test_metrics

    def test_skip_set_respected(self):
        spec = GridSpec([4, 8], [2], [0.2], [0.003], [3], top_m=1)
        skip = {(4, 2, 0.2, 0.003, 3)}
        records = run_trials(spec, "cnn", small_data(), small_config(), skip=skip)
        assert len(records) == 1
        assert records[0].hp.dc == 8

    def test_failure_recorded_not_raised(self):
        # k larger than every padded document -> forward error inside the trial
        spec = GridSpec([4], [4000], [0.2], [0.003], [3], top_m=1)
        records = run_trials(spec, "cnn", small_data(), small_config())
        assert records[0].status == "failed"
        assert records[0].error


class TestLedger:
    def test_round_trip(self, tmp_path):
        records = [
            _record(50, 0, 1337, 0.912345, 0.634567),
            TrialRecord(model.Hyperparams(150, 4, 0.4, 0.0003), 1, 42, "failed"),
        ]
        path = tmp_path / "ledger.tsv"
        lines = ["\t".join(tuner.LEDGER_HEADER)] + [ledger_line(r, 5) for r in records]
        path.write_text("\n".join(lines) + "\n")
        parsed, done = parse_ledger(path, 5)
        assert len(parsed) == 2
        assert (50, 2, 0.2, 0.001, 1337) in done
        assert (150, 4, 0.4, 0.0003, 42) in done
        assert parsed[0].best_valid_p == pytest.approx(0.912345)
        assert parsed[1].status == "failed"

    def test_corrupt_line_named(self, tmp_path):
        path = tmp_path / "ledger.tsv"
        path.write_text("\t".join(tuner.LEDGER_HEADER) + "\nnot\tenough\tfields\n")
        with pytest.raises(LedgerError, match="line 2"):
            parse_ledger(path, 5)

    def test_bad_status_named(self, tmp_path):
        good = ledger_line(_record(50, 0, 1, 0.9, 0.6), 5)
        bad = good.rsplit("\t", 1)[0] + "\tweird"
        path = tmp_path / "ledger.tsv"
        path.write_text("\t".join(tuner.LEDGER_HEADER) + "\n" + bad + "\n")
        with pytest.raises(LedgerError, match="line 2"):
            parse_ledger(path, 5)


class TestSummary:
    def test_render_contains_all_seeds(self):
        records = [
            _record(50 + 100 * i, i, seed, 0.5 + 0.01 * i, 0.6)
            for seed in (1337, 1331, 42)
            for i in range(2)
        ]
        per_seed, grand = aggregate(records, 2)
        text = tuner.render_summary(per_seed, grand, "caml")
        for seed in ("1337", "1331", "42"):
            assert seed in text
        assert "Micro-F1" in text and "P@5" in text
        assert text.strip().split("\n")[-1].startswith("mean")
