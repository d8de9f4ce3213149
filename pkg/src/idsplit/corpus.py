"""Identifier extraction, convention-based splitting, and dataset handling.

The pipeline turns raw source text into `SubtokenRecord`s: extract identifier
tokens, split them on delimiters and case transitions, lowercase, and keep
only multi-part identifiers of bounded length. Records are deduplicated and
deterministically assigned to train/validation splits by a salted hash of the
merged string, so rebuilding a dataset from the same input is bit-identical.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

from .errors import DatasetFormatError, SourceDecodeError

MAX_MERGED_LEN = 40
VALIDATION_MODULUS = 5  # one bucket out of five -> 20% validation

DEFAULT_TOKEN_PATTERN = r"[A-Za-z_%$][A-Za-z0-9_]*"

# Maximal runs of word-ish characters, unicode-aware. Runs containing
# non-ASCII are dropped whole (with a counter) instead of being shredded
# into bogus ASCII fragments.
_WORD_RUN_RE = re.compile(r"[\w%$]+", re.UNICODE)
_ASCII_TOKEN_RE = re.compile(DEFAULT_TOKEN_PATTERN)
_ASCII_LETTER_RE = re.compile(r"[A-Za-z]")

_FRAGMENT_RE = re.compile(r"[A-Za-z0-9]+")
# Case-transition splitter: break before an uppercase that follows a
# lowercase, and before the last uppercase of a run followed by lowercase.
_CASE_SPLIT_RE = re.compile(r".+?(?:(?<=[a-z])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])|$)")

_MERGED_RE = re.compile(r"[a-z0-9]+$")


@dataclass(frozen=True)
class RawIdentifier:
    """An identifier token as found in source, with an optional origin."""

    text: str
    path: Optional[str] = None
    line: Optional[int] = None


@dataclass(frozen=True)
class SubtokenRecord:
    """A merged lowercase identifier plus its ground-truth boundary positions.

    ``boundaries`` is a sorted tuple of positions p, 0 < p < len(merged),
    each meaning "a new subtoken begins at index p". Records always describe
    multi-part identifiers, so the tuple is never empty.
    """

    merged: str
    boundaries: tuple[int, ...]

    def __post_init__(self):
        if not _MERGED_RE.match(self.merged):
            raise ValueError(f"merged string {self.merged!r} must match [a-z0-9]+")
        if not 2 <= len(self.merged) <= MAX_MERGED_LEN:
            raise ValueError(
                f"merged string {self.merged!r} has length {len(self.merged)}, "
                f"allowed range is 2..{MAX_MERGED_LEN}"
            )
        bounds = tuple(self.boundaries)
        if not bounds:
            raise ValueError("dataset records must have at least one boundary")
        if list(bounds) != sorted(set(bounds)):
            raise ValueError(f"boundaries {bounds} must be strictly increasing")
        if bounds[0] <= 0 or bounds[-1] >= len(self.merged):
            raise ValueError(
                f"boundaries {bounds} out of range for merged of length {len(self.merged)}"
            )
        object.__setattr__(self, "boundaries", bounds)

    def subtokens(self) -> list[str]:
        """Subtokens induced by the boundary set; concatenation is ``merged``."""
        cuts = [0, *self.boundaries, len(self.merged)]
        return [self.merged[a:b] for a, b in zip(cuts, cuts[1:])]


@dataclass
class ExtractionStats:
    """Funnel counters for an extraction run."""

    identifiers: int = 0
    non_ascii_dropped: int = 0
    unique_texts: int = 0
    single_part: int = 0
    over_length: int = 0
    records: int = 0


def decode_source(data: bytes, path: str = "<bytes>") -> str:
    """Decode source bytes as UTF-8, naming the byte offset on failure."""
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SourceDecodeError(path, exc.start) from exc


def extract_identifiers(
    source_text: str,
    token_pattern: Optional[str] = None,
    path: Optional[str] = None,
    stats: Optional[ExtractionStats] = None,
) -> list[RawIdentifier]:
    """Extract identifier tokens from source text, in order, duplicates kept.

    The default pattern is ``[A-Za-z_%$][A-Za-z0-9_]*``. Tokens must contain
    at least one ASCII letter; word runs containing non-ASCII characters are
    dropped whole and counted in ``stats.non_ascii_dropped``.
    """
    line_starts = _line_start_offsets(source_text)
    out: list[RawIdentifier] = []
    if token_pattern is None:
        for run in _WORD_RUN_RE.finditer(source_text):
            text = run.group(0)
            if not text.isascii():
                if stats is not None and _has_any_letter(text):
                    stats.non_ascii_dropped += 1
                continue
            for match in _ASCII_TOKEN_RE.finditer(text):
                token = match.group(0)
                if not _ASCII_LETTER_RE.search(token):
                    continue
                out.append(
                    RawIdentifier(
                        text=token,
                        path=path,
                        line=_line_of(line_starts, run.start() + match.start()),
                    )
                )
    else:
        for match in re.finditer(token_pattern, source_text):
            token = match.group(0)
            if not token.isascii():
                if stats is not None:
                    stats.non_ascii_dropped += 1
                continue
            if not _ASCII_LETTER_RE.search(token):
                continue
            out.append(
                RawIdentifier(
                    text=token, path=path, line=_line_of(line_starts, match.start())
                )
            )
    if stats is not None:
        stats.identifiers += len(out)
    return out


def _has_any_letter(text: str) -> bool:
    return any(ch.isalpha() for ch in text)


def _line_start_offsets(text: str) -> list[int]:
    starts = [0]
    for i, ch in enumerate(text):
        if ch == "\n":
            starts.append(i + 1)
    return starts


def _line_of(starts: list[int], offset: int) -> int:
    # binary search for the last start <= offset; 1-based line numbers
    lo, hi = 0, len(starts) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if starts[mid] <= offset:
            lo = mid
        else:
            hi = mid - 1
    return lo + 1


def heuristic_split(text: str) -> list[str]:
    """Split an identifier into lowercase subtokens by naming conventions.

    Rules, in order: fragments are maximal alphanumeric runs (delimiters
    dropped); inside a fragment, split before a lower-to-upper transition and
    before the last uppercase of an uppercase run followed by a lowercase;
    digits attach to the run they follow; everything is lowercased.

    Returns an empty list when the text has no alphanumeric characters.
    """
    parts: list[str] = []
    for fragment in _FRAGMENT_RE.findall(text):
        for piece in _CASE_SPLIT_RE.findall(fragment):
            parts.append(piece.lower())
    return parts


def to_record(subtokens: Sequence[str]) -> Optional[SubtokenRecord]:
    """Merge subtokens into a record, or None when the identifier is dropped.

    Drops single-part identifiers and identifiers whose merged form exceeds
    40 characters. Subtokens must already be lowercase alphanumeric.
    """
    for tok in subtokens:
        if not tok or not _MERGED_RE.match(tok):
            raise ValueError(f"subtoken {tok!r} must match [a-z0-9]+")
    if len(subtokens) < 2:
        return None
    merged = "".join(subtokens)
    if len(merged) > MAX_MERGED_LEN:
        return None
    boundaries = []
    pos = 0
    for tok in subtokens[:-1]:
        pos += len(tok)
        boundaries.append(pos)
    return SubtokenRecord(merged=merged, boundaries=tuple(boundaries))


def split_hash(merged: str, seed: int) -> int:
    """Stable 64-bit hash of a merged string, salted with the seed."""
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(merged.encode("ascii"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def is_validation(merged: str, seed: int) -> bool:
    return split_hash(merged, seed) % VALIDATION_MODULUS == 0


@dataclass(frozen=True)
class Dataset:
    """Deduplicated records plus a deterministic 80/20 split assignment.

    Records are kept in canonical (merged, boundaries) order. The split is a
    pure function of each record's merged string and the seed, so it survives
    a write/read round-trip.
    """

    records: tuple[SubtokenRecord, ...]
    seed: int = 0

    def train_records(self) -> list[SubtokenRecord]:
        return [r for r in self.records if not is_validation(r.merged, self.seed)]

    def validation_records(self) -> list[SubtokenRecord]:
        return [r for r in self.records if is_validation(r.merged, self.seed)]

    def __len__(self) -> int:
        return len(self.records)


def build_dataset(records: Iterable[SubtokenRecord], seed: int) -> Dataset:
    """Deduplicate records by (merged, boundaries) and order them canonically."""
    unique = {(r.merged, r.boundaries): r for r in records}
    ordered = tuple(unique[k] for k in sorted(unique))
    return Dataset(records=ordered, seed=seed)


def write_dataset(dataset: Dataset, path) -> None:
    """Write records as sorted `merged<TAB>space-joined subtokens` lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in sorted(dataset.records, key=lambda r: (r.merged, r.boundaries)):
            fh.write(f"{rec.merged}\t{' '.join(rec.subtokens())}\n")


def read_dataset(path, seed: int = 0) -> Dataset:
    """Read a dataset file, validating every line.

    Lines starting with ``#`` are comments. Raises DatasetFormatError with a
    1-based line number for malformed lines, bad subtokens, concatenation
    mismatches, single-part records, or over-length records.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            columns = line.split("\t")
            if len(columns) != 2:
                raise DatasetFormatError(
                    f"expected 2 tab-separated columns, got {len(columns)}", line=lineno
                )
            merged, joined = columns
            subtokens = joined.split(" ")
            try:
                record = to_record(subtokens)
            except ValueError as exc:
                raise DatasetFormatError(str(exc), line=lineno) from exc
            if record is None:
                raise DatasetFormatError(
                    f"record {merged!r} must have at least 2 subtokens and at most "
                    f"{MAX_MERGED_LEN} merged characters",
                    line=lineno,
                )
            if record.merged != merged:
                raise DatasetFormatError(
                    f"subtokens {joined!r} concatenate to {record.merged!r}, "
                    f"not {merged!r}",
                    line=lineno,
                )
            records.append(record)
    return build_dataset(records, seed=seed)


def records_from_text(
    source_text: str,
    path: Optional[str] = None,
    stats: Optional[ExtractionStats] = None,
) -> Iterator[SubtokenRecord]:
    """Extract, split, and filter one source text into records (dups kept)."""
    for ident in extract_identifiers(source_text, path=path, stats=stats):
        record = to_record(heuristic_split(ident.text))
        if record is not None:
            yield record
