"""Split-point scoring, model comparison tables, and corpus statistics.

Counts are micro-averaged: true/false positives and false negatives are
pooled over every record before precision, recall, and F1 are computed.
Records that alias the same merged string with different boundary sets are
scored independently against their own labels.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .corpus import Dataset, SubtokenRecord

ISOCURVE_LEVELS = (0.7, 0.8, 0.9, 0.95)


@dataclass
class EvalReport:
    """Micro-averaged counts and rates for one model."""

    label: str
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    record_count: int = 0
    exact_match_rate: float = 0.0
    runtime_seconds: float = 0.0

    @classmethod
    def from_counts(cls, label, tp, fp, fn, record_count=0, exact=0, runtime=0.0):
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = _harmonic(precision, recall)
        return cls(
            label=label,
            true_positives=tp,
            false_positives=fp,
            false_negatives=fn,
            precision=precision,
            recall=recall,
            f1=f1,
            record_count=record_count,
            exact_match_rate=exact / record_count if record_count else 0.0,
            runtime_seconds=runtime,
        )

    @classmethod
    def from_rates(cls, label, precision, recall):
        return cls(
            label=label,
            precision=precision,
            recall=recall,
            f1=_harmonic(precision, recall),
        )


def _harmonic(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def score(predicted: Iterable[int], truth: Iterable[int]) -> tuple[int, int, int]:
    """(TP, FP, FN) of one prediction against one ground-truth boundary set."""
    predicted = set(predicted)
    truth = set(truth)
    tp = len(predicted & truth)
    return tp, len(predicted - truth), len(truth - predicted)


def evaluate_model(
    splitter,
    records: Sequence[SubtokenRecord],
    label: str = "model",
) -> EvalReport:
    """Micro-averaged evaluation of a splitter over records.

    ``splitter`` is either a callable mapping a record to a predicted
    boundary set, or an object with ``split_records(records)`` returning one
    boundary set per record (for batched models).
    """
    if not records:
        raise ValueError("cannot evaluate on an empty record list")
    started = time.perf_counter()
    if hasattr(splitter, "split_records"):
        predictions = splitter.split_records(records)
    else:
        predictions = [splitter(record) for record in records]
    tp = fp = fn = exact = 0
    for record, predicted in zip(records, predictions):
        d_tp, d_fp, d_fn = score(predicted, record.boundaries)
        tp += d_tp
        fp += d_fp
        fn += d_fn
        exact += d_fp == 0 and d_fn == 0
    return EvalReport.from_counts(
        label,
        tp,
        fp,
        fn,
        record_count=len(records),
        exact=exact,
        runtime=time.perf_counter() - started,
    )


def compare(reports: Sequence[EvalReport]) -> str:
    """Aligned text table sorted by F1, best first; ties break on the label."""
    if not reports:
        raise ValueError("cannot compare an empty report list")
    ordered = sorted(reports, key=lambda r: (-r.f1, r.label))
    rows = [("Model", "Precision", "Recall", "F1")]
    for rep in ordered:
        rows.append(
            (rep.label, f"{rep.precision:.3f}", f"{rep.recall:.3f}", f"{rep.f1:.3f}")
        )
    widths = [max(len(row[col]) for row in rows) for col in range(4)]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0])]
        cells += [row[col].rjust(widths[col]) for col in range(1, 4)]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def metrics_tsv(reports: Sequence[EvalReport]) -> str:
    """Machine-readable variant of the comparison table."""
    if not reports:
        raise ValueError("cannot compare an empty report list")
    ordered = sorted(reports, key=lambda r: (-r.f1, r.label))
    lines = ["model\tprecision\trecall\tf1\ttp\tfp\tfn\trecords"]
    for r in ordered:
        lines.append(
            f"{r.label}\t{r.precision:.6f}\t{r.recall:.6f}\t{r.f1:.6f}"
            f"\t{r.true_positives}\t{r.false_positives}\t{r.false_negatives}"
            f"\t{r.record_count}"
        )
    return "\n".join(lines) + "\n"


def plot_data(reports: Sequence[EvalReport], samples: int = 50) -> str:
    """Scatter points plus F1 isocurve polylines, as tab-separated text.

    Curve points satisfy 2pr/(p+r) = f with precision swept over the range
    where recall stays in (0, 1].
    """
    lines = ["kind\tlabel\tprecision\trecall"]
    for rep in sorted(reports, key=lambda r: (-r.f1, r.label)):
        lines.append(f"point\t{rep.label}\t{rep.precision:.6f}\t{rep.recall:.6f}")
    for level in ISOCURVE_LEVELS:
        p_min = level / (2.0 - level)  # recall hits 1.0 here
        for k in range(samples + 1):
            p = p_min + (1.0 - p_min) * k / samples
            r = level * p / (2.0 * p - level)
            lines.append(f"isocurve\t{level}\t{p:.6f}\t{r:.6f}")
    return "\n".join(lines) + "\n"


def vocab_reduction(
    dataset: Dataset, resplit: Callable[[str], Sequence[str]]
) -> tuple[int, int, float]:
    """Unique-subtoken counts before and after model re-splitting.

    ``before`` counts the distinct ground-truth subtokens; ``after`` counts
    the distinct parts produced by re-splitting each of those subtokens.
    Returns (before, after, 1 - after/before).
    """
    if not len(dataset):
        raise ValueError("cannot measure vocabulary reduction on an empty dataset")
    vocabulary = set()
    for record in dataset.records:
        vocabulary.update(record.subtokens())
    refined = set()
    for word in vocabulary:
        parts = list(resplit(word))
        if "".join(parts) != word:
            raise ValueError(
                f"resplit of {word!r} produced {parts!r}, which does not concatenate back"
            )
        refined.update(parts)
    before = len(vocabulary)
    after = len(refined)
    return before, after, 1.0 - after / before


def half_error_horizon(per_identifier_accuracy: float) -> float:
    """Identifiers until an error becomes as likely as not.

    Solves accuracy**n = 0.5 for n; defined only for accuracy strictly
    between 0 and 1.
    """
    if not 0.0 < per_identifier_accuracy < 1.0:
        raise ValueError(
            f"accuracy must be in (0, 1), got {per_identifier_accuracy}"
        )
    return math.log(0.5) / math.log(per_identifier_accuracy)
