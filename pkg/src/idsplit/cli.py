"""Command-line entry point: extract, train, split, evaluate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal fault.
Output files are written to a temporary name and renamed, so no subcommand
leaves a partial file behind. ``IDSPLIT_THREADS`` caps worker threads (both
the extraction pool and, when set before the first numpy import, BLAS).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, corpus
from .errors import IdsplitError, SourceDecodeError

SOURCE_EXTENSIONS = {
    ".py", ".c", ".h", ".cc", ".cpp", ".hpp", ".cxx", ".hxx", ".java", ".js",
    ".ts", ".tsx", ".go", ".rs", ".rb", ".php", ".cs", ".m", ".mm", ".swift",
    ".kt", ".scala", ".pl", ".pm", ".lua", ".sh", ".pyx", ".pxd", ".pyi",
}

MODEL_CHOICES = ["heuristic", "lm-and", "lm-or", "dp-zipf", "dp-posterior", "bilstm", "bigru"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; the CLI wants 1
        raise UsageError(message)


def thread_cap() -> int:
    value = os.environ.get("IDSPLIT_THREADS", "")
    try:
        cap = int(value)
    except ValueError:
        cap = 0
    return cap if cap > 0 else (os.cpu_count() or 1)


def _configure_blas_threads() -> None:
    if "numpy" in sys.modules or "IDSPLIT_THREADS" not in os.environ:
        return
    cap = str(thread_cap())
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _atomic_replace(final_path: Path, write_to):
    """Write via ``write_to(tmp_path)`` then rename onto the final path."""
    final_path = Path(final_path)
    tmp = final_path.with_name(final_path.name + ".tmp")
    try:
        write_to(tmp)
        os.replace(tmp, final_path)
    finally:
        if tmp.exists():
            tmp.unlink()


def build_parser() -> _Parser:
    parser = _Parser(prog="idsplit", description="Identifier splitting toolkit")
    parser.add_argument("--version", action="version", version=f"idsplit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser("extract", help="build a dataset from source files")
    p_extract.add_argument("inputs", nargs="+", help="source files or directories")
    p_extract.add_argument("--out", required=True, help="dataset file to write")
    p_extract.add_argument("--seed", type=int, default=0)
    p_extract.add_argument(
        "--ext",
        default=None,
        help="comma-separated extension filter for directory walks "
        "(default: common source extensions)",
    )

    p_train = sub.add_parser("train", help="train a splitter model")
    p_train.add_argument("--dataset", help="dataset file from `extract`")
    p_train.add_argument("--model", required=True, choices=MODEL_CHOICES[1:])
    p_train.add_argument("--out", required=True, help="checkpoint file to write")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--epochs", type=int, default=10)
    p_train.add_argument("--batch-size", type=int, default=512)
    p_train.add_argument("--hidden", type=int, default=64)
    p_train.add_argument("--depth", type=int, default=11)
    p_train.add_argument("--threshold", type=float, default=0.5)
    p_train.add_argument("--mode", choices=["zipf", "posterior"], default=None)
    p_train.add_argument("--oov-penalty", type=float, default=None)
    p_train.add_argument("--max-word-len", type=int, default=None)
    p_train.add_argument(
        "--freq-file",
        default=None,
        help="train the dp model from an external frequency file instead of "
        "the dataset (zipf: rank-ordered word list; posterior: word<TAB>count)",
    )

    p_split = sub.add_parser("split", help="split identifiers from args or stdin")
    p_split.add_argument("identifiers", nargs="*", help="identifiers (default: stdin lines)")
    p_split.add_argument("--model", help="model checkpoint")
    p_split.add_argument("--heuristic-only", action="store_true")

    p_eval = sub.add_parser("evaluate", help="score models on the validation split")
    p_eval.add_argument(
        "models", nargs="+", help="model checkpoints, or the literal `heuristic`"
    )
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--emit-plot", default=None, help="write scatter + isocurve data")
    p_eval.add_argument("--emit-metrics", default=None, help="write metrics as TSV")
    p_eval.add_argument(
        "--vocab-reduction",
        action="store_true",
        help="also report unique-subtoken reduction per model",
    )
    return parser


def _iter_source_files(inputs, ext_filter):
    """(path, strict) pairs; files named explicitly are decoded strictly,
    files discovered by walking may be skipped when not valid UTF-8."""
    seen = []
    for item in inputs:
        path = Path(item)
        if path.is_file():
            seen.append((path, True))
        elif path.is_dir():
            for child in sorted(path.rglob("*")):
                if child.is_file() and child.suffix.lower() in ext_filter:
                    seen.append((child, False))
        else:
            raise IdsplitError(f"input path {path} does not exist")
    return seen


def _extract_one(job):
    path, strict = job
    stats = corpus.ExtractionStats()
    try:
        text = corpus.decode_source(path.read_bytes(), path=str(path))
    except SourceDecodeError:
        if strict:
            raise
        return None, stats  # walked file with legacy encoding: skip, count
    idents = corpus.extract_identifiers(text, path=str(path), stats=stats)
    return [ident.text for ident in idents], stats


def cmd_extract(args) -> int:
    ext_filter = (
        SOURCE_EXTENSIONS
        if args.ext is None
        else {e if e.startswith(".") else f".{e}" for e in args.ext.lower().split(",")}
    )
    files = _iter_source_files(args.inputs, ext_filter)
    if not files:
        raise IdsplitError("no source files found")
    totals = corpus.ExtractionStats()
    undecodable = 0
    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        per_file = list(pool.map(_extract_one, files))
    distinct: dict[str, None] = {}
    for texts, stats in per_file:
        if texts is None:
            undecodable += 1
            continue
        totals.identifiers += stats.identifiers
        totals.non_ascii_dropped += stats.non_ascii_dropped
        for text in texts:
            distinct.setdefault(text)
    totals.unique_texts = len(distinct)
    records = []
    for text in distinct:
        parts = corpus.heuristic_split(text)
        if len(parts) < 2:
            totals.single_part += 1
            continue
        record = corpus.to_record(parts)
        if record is None:
            totals.over_length += 1
            continue
        records.append(record)
    if not records:
        raise IdsplitError("no identifiers extracted")
    dataset = corpus.build_dataset(records, seed=args.seed)
    totals.records = len(dataset)
    _atomic_replace(Path(args.out), lambda tmp: corpus.write_dataset(dataset, tmp))
    validation = len(dataset.validation_records())
    print(f"files scanned          {len(files)}")
    print(f"files skipped encoding {undecodable}")
    print(f"identifiers extracted  {totals.identifiers}")
    print(f"non-ascii dropped      {totals.non_ascii_dropped}")
    print(f"distinct identifiers   {totals.unique_texts}")
    print(f"single-part dropped    {totals.single_part}")
    print(f"over-length dropped    {totals.over_length}")
    print(f"unique records         {totals.records}")
    print(f"validation records     {validation}")
    return 0


def _require_dataset(args):
    if not args.dataset:
        raise UsageError("--dataset is required for this model")
    return corpus.read_dataset(args.dataset, seed=args.seed)


def cmd_train(args) -> int:
    from . import dp_splitter, lm_splitter, rnn_splitter, splitters

    if args.model.startswith("dp-"):
        table_mode = args.model.removeprefix("dp-")
        if args.mode is not None and args.mode != table_mode:
            raise UsageError(
                f"--mode {args.mode} conflicts with --model {args.model}"
            )
        oov_penalty = (
            args.oov_penalty
            if args.oov_penalty is not None
            else dp_splitter.DEFAULT_OOV_PENALTY
        )
        max_word_len = (
            args.max_word_len
            if args.max_word_len is not None
            else dp_splitter.DEFAULT_MAX_WORD_LEN
        )
        if args.freq_file:
            table = dp_splitter.load_frequency_file(
                args.freq_file, mode=table_mode, oov_penalty=oov_penalty
            )
            if table.skipped_words:
                print(
                    f"warning: skipped {table.skipped_words} malformed words",
                    file=sys.stderr,
                )
        else:
            table = dp_splitter.table_from_dataset(
                _require_dataset(args), mode=table_mode, oov_penalty=oov_penalty
            )
        _atomic_replace(
            Path(args.out),
            lambda tmp: splitters.save_dp_model(tmp, table, max_word_len=max_word_len),
        )
        print(
            f"dp table: {table.vocab_size} words, mode={table.mode}", file=sys.stderr
        )
        return 0

    if args.model.startswith("lm-"):
        dataset = _require_dataset(args)
        forward = lm_splitter.train_lm(dataset, max_depth=args.depth, direction="forward")
        backward = lm_splitter.train_lm(dataset, max_depth=args.depth, direction="backward")
        mode = args.model.removeprefix("lm-")
        _atomic_replace(
            Path(args.out),
            lambda tmp: splitters.save_lm_model(tmp, forward, backward, mode),
        )
        print(
            f"lm tries: depth {args.depth}, "
            f"{forward.trie.node_count()} forward nodes, "
            f"{backward.trie.node_count()} backward nodes",
            file=sys.stderr,
        )
        return 0

    dataset = _require_dataset(args)
    cell = args.model.removeprefix("bi")
    manifest = rnn_splitter.ModelManifest(
        cell=cell, hidden=args.hidden, threshold=args.threshold
    )
    if args.epochs == 0:
        print("warning: --epochs 0 writes the untrained initialization", file=sys.stderr)

    def sink(entry):
        print(f"{entry.epoch}\t{entry.train_loss:.6f}\t{entry.val_f1:.6f}", flush=True)

    params, _ = rnn_splitter.train(
        dataset,
        manifest,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        log_sink=sink,
    )
    _atomic_replace(
        Path(args.out), lambda tmp: rnn_splitter.save_model(params, manifest, tmp)
    )
    return 0


def cmd_split(args) -> int:
    if args.heuristic_only:
        splitter = None
    elif args.model:
        from .splitters import load_any_model

        splitter = load_any_model(args.model)
    else:
        raise UsageError("either --model or --heuristic-only is required")
    lines = args.identifiers if args.identifiers else (
        line.rstrip("\n") for line in sys.stdin
    )
    for line in lines:
        if splitter is None:
            parts = corpus.heuristic_split(line)
        else:
            parts = splitter.split_identifier(line)
        print(" ".join(parts))
    return 0


def cmd_evaluate(args) -> int:
    from . import evaluation
    from .splitters import HeuristicSplitter, load_any_model

    dataset = corpus.read_dataset(args.dataset, seed=args.seed)
    validation = dataset.validation_records()
    if not validation:
        raise IdsplitError("dataset has no validation records")
    adapters = []
    for item in args.models:
        if item == "heuristic":
            adapters.append(HeuristicSplitter())
        else:
            adapters.append(load_any_model(item))
    labels = _unique_labels(adapters, args.models)
    reports = []
    reductions = []
    for adapter, label in zip(adapters, labels):
        report = evaluation.evaluate_model(adapter, validation, label)
        reports.append(report)
        print(
            f"{label}: {report.record_count} records in {report.runtime_seconds:.2f}s, "
            f"exact-match rate {report.exact_match_rate:.4f}"
            + (
                f", half-error horizon {evaluation.half_error_horizon(report.exact_match_rate):.1f}"
                if 0.0 < report.exact_match_rate < 1.0
                else ""
            ),
            file=sys.stderr,
        )
        if args.vocab_reduction:
            reductions.append((label, _vocab_reduction(adapter, dataset)))
    sys.stdout.write(evaluation.compare(reports))
    for label, (before, after, ratio) in reductions:
        print(f"vocab-reduction\t{label}\t{before}\t{after}\t{ratio:.4f}")
    if args.emit_metrics:
        text = evaluation.metrics_tsv(reports)
        _atomic_replace(Path(args.emit_metrics), lambda tmp: tmp.write_text(text))
    if args.emit_plot:
        text = evaluation.plot_data(reports)
        _atomic_replace(Path(args.emit_plot), lambda tmp: tmp.write_text(text))
    return 0


def _vocab_reduction(adapter, dataset):
    from . import evaluation
    from .splitters import RnnModelSplitter

    if isinstance(adapter, RnnModelSplitter):
        vocabulary = set()
        for record in dataset.records:
            vocabulary.update(record.subtokens())
        mapping = adapter.split_words_batch(sorted(vocabulary))
        return evaluation.vocab_reduction(dataset, lambda w: mapping[w])
    return evaluation.vocab_reduction(dataset, adapter.split_word)


def _unique_labels(adapters, items):
    labels = []
    counts: dict[str, int] = {}
    for adapter in adapters:
        counts[adapter.label] = counts.get(adapter.label, 0) + 1
    for adapter, item in zip(adapters, items):
        if counts[adapter.label] > 1 and item != "heuristic":
            labels.append(f"{adapter.label}({Path(item).stem})")
        else:
            labels.append(adapter.label)
    return labels


_COMMANDS = {
    "extract": cmd_extract,
    "train": cmd_train,
    "split": cmd_split,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    _configure_blas_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (IdsplitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal faults
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
