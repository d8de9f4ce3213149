import math
import random

import pytest

from idsplit.corpus import SubtokenRecord, build_dataset, to_record
from idsplit.evaluation import (
    EvalReport,
    compare,
    evaluate_model,
    half_error_horizon,
    metrics_tsv,
    plot_data,
    score,
    vocab_reduction,
)

REFERENCE_ROWS = [
    ("Char. ML LM or", 0.563, 0.936),
    ("Char. ML LM and", 0.966, 0.573),
    ("Stat. dyn. prog., Wiki", 0.741, 0.912),
    ("Stat. dyn. prog., Zipf", 0.937, 0.783),
    ("Stat. dyn. prog., posterior", 0.931, 0.892),
    ("GBDT", 0.931, 0.924),
    ("Char. CNN", 0.922, 0.938),
    ("Char. BiGRU", 0.945, 0.955),
    ("Char. BiLSTM", 0.947, 0.958),
]


class TestScore:
    def test_exact_match(self):
        assert score({3}, {3}) == (1, 0, 0)

    def test_all_wrong(self):
        assert score({2, 4}, {3}) == (0, 2, 1)

    def test_partial(self):
        tp, fp, fn = score({3, 5}, {3})
        assert (tp, fp, fn) == (1, 1, 0)
        rep = EvalReport.from_counts("m", tp, fp, fn)
        assert rep.precision == 0.5
        assert rep.recall == 1.0
        assert rep.f1 == pytest.approx(2 / 3)

    def test_empty_prediction(self):
        assert score(set(), {3, 4}) == (0, 0, 2)


class TestEvalReport:
    def test_zero_denominators(self):
        rep = EvalReport.from_counts("m", 0, 0, 5)
        assert rep.precision == 0.0 and rep.recall == 0.0 and rep.f1 == 0.0

    def test_f1_between_precision_and_recall(self):
        rng = random.Random(0)
        for _ in range(200):
            tp = rng.randint(0, 50)
            fp = rng.randint(0, 50)
            fn = rng.randint(0, 50)
            rep = EvalReport.from_counts("m", tp, fp, fn)
            if rep.precision + rep.recall > 0:
                assert min(rep.precision, rep.recall) - 1e-12 <= rep.f1
                assert rep.f1 <= max(rep.precision, rep.recall) + 1e-12


class TestEvaluateModel:
    RECORDS = [
        SubtokenRecord("foobar", (3,)),
        SubtokenRecord("getname", (3,)),
        SubtokenRecord("abc", (1, 2)),
    ]

    def test_perfect_splitter(self):
        rep = evaluate_model(lambda r: set(r.boundaries), self.RECORDS, "oracle")
        assert rep.precision == 1.0 and rep.recall == 1.0 and rep.f1 == 1.0
        assert rep.exact_match_rate == 1.0
        assert rep.record_count == 3

    def test_never_split_splitter(self):
        rep = evaluate_model(lambda r: set(), self.RECORDS, "never")
        assert rep.precision == 0.0 and rep.recall == 0.0 and rep.f1 == 0.0

    def test_batch_protocol(self):
        class Batch:
            def split_records(self, records):
                return [set(r.boundaries) for r in records]

        rep = evaluate_model(Batch(), self.RECORDS, "batch")
        assert rep.f1 == 1.0

    def test_counts_are_additive_across_corpus_halves(self):
        rng = random.Random(1)

        def noisy(record):
            return {p for p in range(1, len(record.merged)) if rng.random() < 0.3}

        records = [
            SubtokenRecord("somelongname", (4, 8)),
            SubtokenRecord("foobar", (3,)),
            SubtokenRecord("readfile", (4,)),
            SubtokenRecord("writelock", (5,)),
        ]
        preds = {r.merged: noisy(r) for r in records}
        splitter = lambda r: preds[r.merged]
        whole = evaluate_model(splitter, records, "m")
        first = evaluate_model(splitter, records[:2], "m")
        second = evaluate_model(splitter, records[2:], "m")
        assert whole.true_positives == first.true_positives + second.true_positives
        assert whole.false_positives == first.false_positives + second.false_positives
        assert whole.false_negatives == first.false_negatives + second.false_negatives

    def test_empty_records_rejected(self):
        with pytest.raises(ValueError):
            evaluate_model(lambda r: set(), [], "m")


class TestCompare:
    def test_reference_ordering(self):
        reports = [EvalReport.from_rates(*row) for row in REFERENCE_ROWS]
        table = compare(reports)
        lines = table.splitlines()
        assert lines[0].split()[0] == "Model"
        assert lines[1].startswith("Char. BiLSTM")
        assert lines[1].rstrip().endswith("0.952")

    def test_single_report(self):
        table = compare([EvalReport.from_rates("only", 0.5, 0.5)])
        assert len(table.splitlines()) == 2

    def test_deterministic_tie_breaking(self):
        a = EvalReport.from_rates("alpha", 0.8, 0.8)
        b = EvalReport.from_rates("beta", 0.8, 0.8)
        table = compare([b, a])
        lines = table.splitlines()
        assert lines[1].startswith("alpha")
        assert compare([a, b]) == compare([b, a])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compare([])

    def test_metrics_tsv_round_trip(self):
        rep = EvalReport.from_counts("m", 10, 2, 3, record_count=8)
        text = metrics_tsv([rep])
        header, row = text.splitlines()
        fields = dict(zip(header.split("\t"), row.split("\t")))
        assert fields["model"] == "m"
        assert float(fields["precision"]) == pytest.approx(10 / 12)
        assert int(fields["tp"]) == 10


class TestPlotData:
    def test_isocurve_passes_through_diagonal(self):
        text = plot_data([EvalReport.from_rates("m", 0.9, 0.9)])
        rows = [line.split("\t") for line in text.splitlines()[1:]]
        curve = [
            (float(p), float(r))
            for kind, label, p, r in rows
            if kind == "isocurve" and label == "0.8"
        ]
        assert curve, "expected isocurve rows for level 0.8"
        nearest = min(curve, key=lambda pr: abs(pr[0] - 0.8))
        assert nearest[1] == pytest.approx(0.8, abs=0.02)

    def test_curve_points_satisfy_harmonic_identity(self):
        text = plot_data([EvalReport.from_rates("m", 0.9, 0.9)], samples=20)
        for line in text.splitlines()[1:]:
            kind, label, p, r = line.split("\t")
            if kind != "isocurve":
                continue
            p, r, level = float(p), float(r), float(label)
            assert 2 * p * r / (p + r) == pytest.approx(level, abs=1e-4)
            assert 0.0 < r <= 1.0 + 1e-9

    def test_points_listed(self):
        text = plot_data([EvalReport.from_rates("m", 0.7, 0.6)])
        assert "point\tm\t0.700000\t0.600000" in text


class TestVocabReduction:
    def test_identity_splitter(self):
        ds = build_dataset([to_record(["foo", "bar"])], seed=0)
        before, after, ratio = vocab_reduction(ds, lambda w: [w])
        assert before == after == 2
        assert ratio == 0.0

    def test_resplit_can_keep_size_constant(self):
        ds = build_dataset([to_record(["foobar", "foo"])], seed=0)

        def resplit(word):
            return ["foo", "bar"] if word == "foobar" else [word]

        before, after, ratio = vocab_reduction(ds, resplit)
        assert (before, after) == (2, 2)
        assert ratio == 0.0

    def test_reduction_measured(self):
        ds = build_dataset(
            [to_record(["foobar", "x1"]), to_record(["foobaz", "x1"])], seed=0
        )

        def resplit(word):
            if word.startswith("foo") and len(word) > 3:
                return ["foo", word[3:]]
            return [word]

        before, after, ratio = vocab_reduction(ds, resplit)
        assert before == 3  # foobar, foobaz, x1
        assert after == 4  # foo, bar, baz, x1
        assert ratio == pytest.approx(1 - 4 / 3)

    def test_lossy_resplit_rejected(self):
        ds = build_dataset([to_record(["foo", "bar"])], seed=0)
        with pytest.raises(ValueError):
            vocab_reduction(ds, lambda w: [w[:-1]])


class TestHalfErrorHorizon:
    def test_reference_value(self):
        value = half_error_horizon(0.95)
        assert value == pytest.approx(13.51, abs=0.01)
        assert round(value) == 14

    def test_coin_flip(self):
        assert half_error_horizon(0.5) == pytest.approx(1.0)

    def test_high_accuracy(self):
        assert half_error_horizon(0.99) == pytest.approx(
            math.log(0.5) / math.log(0.99)
        )
        assert half_error_horizon(0.99) == pytest.approx(68.97, abs=0.01)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.5, 1.5])
    def test_domain_validation(self, bad):
        with pytest.raises(ValueError):
            half_error_horizon(bad)
