"""Model adapters behind one splitting protocol, plus checkpoint containers.

Every adapter answers three questions: boundaries of a merged identifier
(``split_merged``), parts of a single word (``split_word``), and the full
pipeline on raw identifier text (``split_identifier``: heuristic split, then
model refinement of each heuristic part, which preserves every heuristic
boundary). Adapters with a ``split_records`` method are evaluated in batch.

Checkpoint containers are sniffed by their leading magic: ``IDLMC1`` holds a
forward and a backward trie, ``IDDP1`` a frequency table with its splitting
hyperparameters, and the network checkpoint starts with its manifest block.
"""

from __future__ import annotations

from . import dp_splitter, lm_splitter, rnn_splitter
from .corpus import MAX_MERGED_LEN, heuristic_split
from .errors import CheckpointError

LM_CONTAINER_MAGIC = "IDLMC1"
DP_MAGIC = "IDDP1"


def _parts_from_boundaries(word: str, boundaries) -> list[str]:
    cuts = [0, *sorted(boundaries), len(word)]
    return [word[a:b] for a, b in zip(cuts, cuts[1:])]


class _PipelineMixin:
    def split_records(self, records):
        return [self.split_merged(record.merged) for record in records]

    def split_word(self, word: str) -> list[str]:
        if not word:
            return []
        if len(word) > MAX_MERGED_LEN:
            return [word]
        return _parts_from_boundaries(word, self.split_merged(word))

    def split_identifier(self, text: str) -> list[str]:
        parts = []
        for part in heuristic_split(text):
            parts.extend(self.split_word(part))
        return parts


class HeuristicSplitter(_PipelineMixin):
    """Convention rules only; merged strings are never split further.

    Evaluating it scores the heuristic's own output reconstructed from each
    record's subtokens, which makes it a self-consistency smoke test.
    """

    label = "heuristic"

    def split_merged(self, merged: str) -> set[int]:
        parts = heuristic_split(merged)
        bounds = set()
        pos = 0
        for part in parts[:-1]:
            pos += len(part)
            bounds.add(pos)
        return bounds

    def split_records(self, records):
        return [
            self.split_merged("_".join(record.subtokens())) for record in records
        ]


class LmPairSplitter(_PipelineMixin):
    """Forward and backward character LMs combined by `and` or `or`."""

    def __init__(self, forward, backward, mode: str):
        if forward.direction != "forward" or backward.direction != "backward":
            raise CheckpointError("LM pair must hold one forward and one backward model")
        lm_splitter.combine(set(), set(), mode)  # validates the mode
        self.forward = forward
        self.backward = backward
        self.mode = mode
        self.label = f"lm-{mode}"

    def split_merged(self, merged: str) -> set[int]:
        return lm_splitter.combine(
            lm_splitter.greedy_split(self.forward, merged),
            lm_splitter.greedy_split(self.backward, merged),
            self.mode,
        )

    def directional_predictions(self, merged: str) -> tuple[set[int], set[int]]:
        return (
            lm_splitter.greedy_split(self.forward, merged),
            lm_splitter.greedy_split(self.backward, merged),
        )


class DpTableSplitter(_PipelineMixin):
    """Dynamic-programming segmentation over a frequency table."""

    def __init__(self, table, max_word_len: int = dp_splitter.DEFAULT_MAX_WORD_LEN):
        self.table = table
        self.max_word_len = max_word_len
        self.label = f"dp-{table.mode}"

    def split_merged(self, merged: str) -> set[int]:
        bounds, _ = dp_splitter.dp_split(self.table, merged, self.max_word_len)
        return bounds


class RnnModelSplitter(_PipelineMixin):
    """Trained recurrent model; batch evaluation avoids per-record forwards."""

    def __init__(self, params, manifest):
        self.params = params
        self.manifest = manifest
        self.label = f"bi{manifest.cell}"

    def split_merged(self, merged: str) -> set[int]:
        return rnn_splitter.predict(self.params, self.manifest, merged).boundaries

    def split_records(self, records):
        return rnn_splitter.predict_boundaries_batch(
            self.params, self.manifest, [record.merged for record in records]
        )

    def split_words_batch(self, words) -> dict[str, list[str]]:
        """Vocabulary re-splitting in one batched pass."""
        words = list(words)
        bounds = rnn_splitter.predict_boundaries_batch(self.params, self.manifest, words)
        return {w: _parts_from_boundaries(w, b) for w, b in zip(words, bounds)}

    def split_identifier(self, text: str) -> list[str]:
        return rnn_splitter.split_text(self.params, self.manifest, text)


def save_lm_model(path, forward, backward, mode: str) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{LM_CONTAINER_MAGIC} mode={mode}\n".encode("ascii"))
        lm_splitter.save_trie(forward, fh)
        lm_splitter.save_trie(backward, fh)


def load_lm_model(path) -> LmPairSplitter:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        fields = header.split(" ")
        if len(fields) != 2 or fields[0] != LM_CONTAINER_MAGIC:
            raise CheckpointError(f"bad LM container header {header!r}")
        if not fields[1].startswith("mode="):
            raise CheckpointError(f"bad LM container header {header!r}")
        mode = fields[1].removeprefix("mode=")
        forward = lm_splitter.load_trie(fh)
        backward = lm_splitter.load_trie(fh)
    return LmPairSplitter(forward, backward, mode)


def save_dp_model(path, table, max_word_len: int = dp_splitter.DEFAULT_MAX_WORD_LEN):
    entries = table.entries
    if table.mode == "zipf":
        ordered = sorted(entries, key=entries.__getitem__)
    else:
        ordered = sorted(entries)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            f"{DP_MAGIC} mode={table.mode} oov_penalty={table.oov_penalty!r} "
            f"oov_constant={table.oov_constant!r} max_word_len={max_word_len} "
            f"total_count={table.total_count}\n"
        )
        for word in ordered:
            fh.write(f"{word}\t{entries[word]}\n")


def load_dp_model(path) -> DpTableSplitter:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        fields = header.split(" ")
        if not fields or fields[0] != DP_MAGIC:
            raise CheckpointError(f"bad DP model header {header!r}")
        meta = {}
        for item in fields[1:]:
            key, _, value = item.partition("=")
            meta[key] = value
        try:
            mode = meta["mode"]
            oov_penalty = float(meta["oov_penalty"])
            oov_constant = float(meta["oov_constant"])
            max_word_len = int(meta["max_word_len"])
            total_count = int(meta["total_count"])
        except (KeyError, ValueError):
            raise CheckpointError(f"bad DP model header {header!r}") from None
        entries = {}
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            word, _, value = line.partition("\t")
            try:
                entries[word] = int(value)
            except ValueError:
                raise CheckpointError(
                    f"bad DP model entry at line {lineno}: {line!r}"
                ) from None
    table = dp_splitter.FrequencyTable(
        entries=entries,
        mode=mode,
        total_count=total_count if mode == "posterior" else 0,
        oov_penalty=oov_penalty,
        oov_constant=oov_constant,
    )
    return DpTableSplitter(table, max_word_len=max_word_len)


def load_any_model(path):
    """Open a checkpoint by sniffing its magic; returns a splitter adapter."""
    with open(path, "rb") as fh:
        head = fh.read(16)
    if head.startswith(LM_CONTAINER_MAGIC.encode()):
        return load_lm_model(path)
    if head.startswith(DP_MAGIC.encode()):
        return load_dp_model(path)
    if head.startswith(b"format: " + rnn_splitter.CHECKPOINT_MAGIC.encode()):
        params, manifest = rnn_splitter.load_model(path)
        return RnnModelSplitter(params, manifest)
    raise CheckpointError(f"{path}: unrecognized model file")
