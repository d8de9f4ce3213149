"""Minimum-cost identifier segmentation over a word-frequency table.

Costs are negative log probabilities. Posterior tables price a word at
-log(count/total); Zipf tables at log(rank * log(vocab_size)). Words missing
from the table pay a per-character penalty plus a constant, so segmentation
is total. The optimal split is found by a left-to-right dynamic program with
ties broken toward fewer words, then the lexicographically earliest boundary
set.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

from .corpus import Dataset
from .errors import ConfigError, FrequencyFileError

DEFAULT_OOV_PENALTY = 10.0  # nats per character
DEFAULT_OOV_CONSTANT = 3.0  # nats per out-of-vocabulary word
DEFAULT_MAX_WORD_LEN = 24

_WORD_RE = re.compile(r"[a-z0-9]+$")


@dataclass
class FrequencyTable:
    """Immutable word->count (posterior) or word->rank (zipf) lookup.

    ``total_count`` may be pinned explicitly to price words against a fixed
    normalizer; by default it is the sum of counts. ``skipped_words`` counts
    malformed words dropped while loading from a file.
    """

    entries: dict[str, int]
    mode: str  # "posterior" | "zipf"
    total_count: int = 0
    oov_penalty: float = DEFAULT_OOV_PENALTY
    oov_constant: float = DEFAULT_OOV_CONSTANT
    skipped_words: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.mode not in ("posterior", "zipf"):
            raise ConfigError(f"unknown frequency table mode {self.mode!r}")
        for word, value in self.entries.items():
            if not _WORD_RE.match(word):
                raise ValueError(f"table word {word!r} must match [a-z0-9]+")
            if value < 1:
                raise ValueError(f"table value for {word!r} must be >= 1, got {value}")
        if self.mode == "zipf":
            ranks = sorted(self.entries.values())
            if ranks != list(range(1, len(ranks) + 1)):
                raise ValueError("zipf ranks must be exactly 1..N with no duplicates")
        if self.mode == "posterior" and self.total_count == 0:
            self.total_count = sum(self.entries.values())

    @property
    def vocab_size(self) -> int:
        return len(self.entries)


def word_cost(
    table: FrequencyTable,
    word: str,
    oov_penalty: Optional[float] = None,
    oov_constant: Optional[float] = None,
) -> float:
    """Cost in nats of one candidate word under the table."""
    value = table.entries.get(word)
    if value is None:
        penalty = table.oov_penalty if oov_penalty is None else oov_penalty
        constant = table.oov_constant if oov_constant is None else oov_constant
        return penalty * len(word) + constant
    if table.mode == "posterior":
        return -math.log(value / table.total_count)
    return math.log(value * math.log(table.vocab_size))


def dp_split(
    table: FrequencyTable,
    merged: str,
    max_word_len: int = DEFAULT_MAX_WORD_LEN,
    oov_penalty: Optional[float] = None,
    oov_constant: Optional[float] = None,
) -> tuple[set[int], float]:
    """Minimum-cost segmentation of a merged identifier.

    Returns the boundary positions and the total cost of the winning
    segmentation. Ties go to fewer words, then to the lexicographically
    earliest boundary tuple.
    """
    if max_word_len < 1:
        raise ConfigError(f"max_word_len must be >= 1, got {max_word_len}")
    if not _WORD_RE.match(merged):
        raise ValueError(f"merged string {merged!r} must match [a-z0-9]+")
    n = len(merged)
    # best[i]: (cost, word_count, boundaries) of the best split of merged[:i]
    best: list[Optional[tuple[float, int, tuple[int, ...]]]] = [None] * (n + 1)
    best[0] = (0.0, 0, ())
    for i in range(1, n + 1):
        candidate = None
        for j in range(max(0, i - max_word_len), i):
            prev = best[j]
            if prev is None:
                continue
            cost = prev[0] + word_cost(table, merged[j:i], oov_penalty, oov_constant)
            bounds = prev[2] + (j,) if j > 0 else prev[2]
            entry = (cost, prev[1] + 1, bounds)
            if candidate is None or entry < candidate:
                candidate = entry
        best[i] = candidate
    final = best[n]
    if final is None:  # only possible for n > max_word_len with tiny windows
        raise ConfigError(
            f"max_word_len {max_word_len} cannot cover a string of length {n}"
        )
    return set(final[2]), final[0]


def table_from_dataset(
    dataset: Dataset,
    mode: str = "posterior",
    oov_penalty: float = DEFAULT_OOV_PENALTY,
    oov_constant: float = DEFAULT_OOV_CONSTANT,
) -> FrequencyTable:
    """Count subtoken occurrences over the training split.

    In zipf mode the counts are converted to ranks, most frequent first,
    ties broken alphabetically.
    """
    counts: dict[str, int] = {}
    for record in dataset.train_records():
        for token in record.subtokens():
            counts[token] = counts.get(token, 0) + 1
    if not counts:
        raise ValueError("empty frequency table: dataset has no training records")
    if mode == "zipf":
        ordered = sorted(counts, key=lambda w: (-counts[w], w))
        entries = {word: rank for rank, word in enumerate(ordered, start=1)}
    else:
        entries = counts
    return FrequencyTable(
        entries=entries, mode=mode, oov_penalty=oov_penalty, oov_constant=oov_constant
    )


def load_frequency_file(
    path,
    mode: str,
    oov_penalty: float = DEFAULT_OOV_PENALTY,
    oov_constant: float = DEFAULT_OOV_CONSTANT,
) -> FrequencyTable:
    """Load an external frequency table.

    Posterior files carry ``word<TAB>count`` lines; zipf files are plain word
    lists ordered most frequent first. Words that are not lowercase
    alphanumeric are skipped and counted in ``skipped_words``; duplicates and
    malformed lines are errors naming the line number.
    """
    if mode not in ("posterior", "zipf"):
        raise ConfigError(f"unknown frequency table mode {mode!r}")
    entries: dict[str, int] = {}
    skipped = 0
    rank = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if mode == "posterior":
                columns = line.split("\t")
                if len(columns) != 2:
                    raise FrequencyFileError(
                        f"expected `word<TAB>count`, got {line!r}", line=lineno
                    )
                word, count_text = columns
                try:
                    value = int(count_text)
                except ValueError:
                    raise FrequencyFileError(
                        f"count {count_text!r} is not an integer", line=lineno
                    ) from None
                if value < 1:
                    raise FrequencyFileError(f"count must be >= 1, got {value}", line=lineno)
            else:
                word = line
                value = 0  # assigned after the word passes validation
            if not _WORD_RE.match(word):
                skipped += 1
                continue
            if word in entries:
                raise FrequencyFileError(f"duplicate word {word!r}", line=lineno)
            if mode == "zipf":
                rank += 1
                value = rank
            entries[word] = value
    table = FrequencyTable(
        entries=entries, mode=mode, oov_penalty=oov_penalty, oov_constant=oov_constant
    )
    table.skipped_words = skipped
    return table
