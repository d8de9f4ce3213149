"""Unsmoothed maximum-likelihood character language model over subtokens.

Training inserts every training subtoken into a depth-limited prefix trie,
recording how often each prefix occurs and how often a subtoken ends right
after it. A candidate prefix is scored as the product of its character
conditionals plus the probability of the end-of-token event after the final
context. Contexts longer than the trie depth are shortened from the left
(Markov assumption); a context the trie has never seen slides its oldest
characters away until a known path remains. No smoothing: unseen
continuations score -inf.

Splitting is greedy: repeatedly take the prefix of the remaining suffix with
the maximal score (ties to the shortest), in the forward or the backward
reading direction, and combine the two directions by set intersection or
union.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .corpus import Dataset
from .errors import CheckpointError, ConfigError

DEFAULT_MAX_DEPTH = 11

TRIE_MAGIC = "IDLM1"

_WORD_RE = re.compile(r"[a-z0-9]+$")


class _Node:
    __slots__ = ("count", "boundary_count", "children")

    def __init__(self):
        self.count = 0
        self.boundary_count = 0
        self.children: dict[str, _Node] = {}


class PrefixTrie:
    """Depth-limited character trie with occurrence and end-of-token counts."""

    def __init__(self, max_depth: int = DEFAULT_MAX_DEPTH):
        if max_depth < 2:
            raise ConfigError(f"trie max_depth must be >= 2, got {max_depth}")
        self.max_depth = max_depth
        self.root = _Node()

    def add(self, word: str, multiplicity: int = 1) -> None:
        """Insert one subtoken occurrence (its prefixes up to max_depth)."""
        self.root.count += multiplicity
        node = self.root
        for ch in word[: self.max_depth]:
            child = node.children.get(ch)
            if child is None:
                child = _Node()
                node.children[ch] = child
            child.count += multiplicity
            node = child
        if len(word) <= self.max_depth:
            node.boundary_count += multiplicity

    def lookup(self, path: str):
        """Node at the end of ``path``, or None when the path is unseen."""
        node = self.root
        for ch in path:
            node = node.children.get(ch)
            if node is None:
                return None
        return node

    def node_count(self) -> int:
        total = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            total += 1
            stack.extend(node.children.values())
        return total


@dataclass
class DirectionalLM:
    """A prefix trie read in one direction; backward models are trained on
    reversed subtokens."""

    trie: PrefixTrie
    direction: str  # "forward" | "backward"

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ConfigError(f"unknown direction {self.direction!r}")


def train_lm(
    dataset: Dataset, max_depth: int = DEFAULT_MAX_DEPTH, direction: str = "forward"
) -> DirectionalLM:
    """Count subtoken prefix n-grams over the training split."""
    if max_depth < 2:
        raise ConfigError(f"max_depth must be >= 2, got {max_depth}")
    lm = DirectionalLM(trie=PrefixTrie(max_depth), direction=direction)
    train = dataset.train_records()
    if not train:
        raise ValueError("cannot train a language model on an empty train split")
    for record in train:
        for token in record.subtokens():
            lm.trie.add(token if direction == "forward" else token[::-1])
    return lm


def _slide_to_known(trie: PrefixTrie, context: str) -> _Node:
    """Drop the oldest context characters until the trie knows the path."""
    while True:
        node = trie.lookup(context)
        if node is not None:
            return node
        context = context[1:]


def _char_log_prob(trie: PrefixTrie, context: str, ch: str) -> float:
    node = _slide_to_known(trie, context[-(trie.max_depth - 1):] if context else "")
    child = node.children.get(ch)
    if child is None or child.count == 0:
        return -math.inf
    return math.log(child.count / node.count)


def _boundary_log_prob(trie: PrefixTrie, context: str) -> float:
    node = _slide_to_known(trie, context[-trie.max_depth:])
    if node.boundary_count == 0:
        return -math.inf
    return math.log(node.boundary_count / node.count)


def score_prefix(lm: DirectionalLM, chars: str, include_boundary: bool = True) -> float:
    """Log-probability that ``chars`` is a complete subtoken.

    With ``include_boundary=False`` the end-of-token term is omitted, leaving
    the plain character product, which is monotone non-increasing in prefix
    length.
    """
    if not chars:
        raise ValueError("cannot score an empty prefix")
    total = 0.0
    for k, ch in enumerate(chars):
        logp = _char_log_prob(lm.trie, chars[:k], ch)
        if logp == -math.inf:
            return -math.inf
        total += logp
    if include_boundary:
        logp = _boundary_log_prob(lm.trie, chars)
        if logp == -math.inf:
            return -math.inf
        total += logp
    return total


def greedy_split(lm: DirectionalLM, merged: str) -> set[int]:
    """Boundary positions chosen by repeated maximal-prefix selection.

    For the backward direction the string is reversed before splitting and
    the boundaries are mirrored back. A suffix whose prefixes all score -inf
    is kept whole.
    """
    if not _WORD_RE.match(merged):
        raise ValueError(f"merged string {merged!r} must match [a-z0-9]+")
    text = merged if lm.direction == "forward" else merged[::-1]
    boundaries = []
    pos = 0
    n = len(text)
    while pos < n:
        suffix = text[pos:]
        best_len = len(suffix)
        best_score = -math.inf
        for plen in range(1, len(suffix) + 1):
            score = score_prefix(lm, suffix[:plen])
            if score > best_score:
                best_score = score
                best_len = plen
        pos += best_len
        if pos < n:
            boundaries.append(pos)
    if lm.direction == "backward":
        return {n - b for b in boundaries}
    return set(boundaries)


def combine(forward_pred: set[int], backward_pred: set[int], mode: str) -> set[int]:
    """Conjunction (intersection) or disjunction (union) of both directions."""
    if mode == "and":
        return set(forward_pred) & set(backward_pred)
    if mode == "or":
        return set(forward_pred) | set(backward_pred)
    raise ConfigError(f"unknown combination mode {mode!r}")


def save_trie(lm: DirectionalLM, fh) -> None:
    """Write the checkpoint block: textual header + preorder node stream."""
    trie = lm.trie
    header = f"{TRIE_MAGIC} {trie.max_depth} {lm.direction} {trie.node_count()}\n"
    fh.write(header.encode("ascii"))
    stack = [("\x00", trie.root)]
    while stack:
        char, node = stack.pop()
        fh.write(char.encode("latin-1"))
        fh.write(node.count.to_bytes(8, "little"))
        fh.write(node.boundary_count.to_bytes(8, "little"))
        fh.write(len(node.children).to_bytes(8, "little"))
        for ch in sorted(node.children, reverse=True):
            stack.append((ch, node.children[ch]))


def load_trie(fh) -> DirectionalLM:
    """Read one checkpoint block written by :func:`save_trie`."""
    header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
    fields = header.split(" ")
    if len(fields) != 4 or fields[0] != TRIE_MAGIC:
        raise CheckpointError(f"bad trie header {header!r}")
    try:
        max_depth = int(fields[1])
        node_total = int(fields[3])
    except ValueError:
        raise CheckpointError(f"bad trie header {header!r}") from None
    direction = fields[2]
    if direction not in ("forward", "backward"):
        raise CheckpointError(f"bad trie direction {direction!r}")
    trie = PrefixTrie(max_depth)

    def read_node():
        raw = fh.read(25)
        if len(raw) != 25:
            raise CheckpointError("truncated trie checkpoint")
        node = _Node()
        node.count = int.from_bytes(raw[1:9], "little")
        node.boundary_count = int.from_bytes(raw[9:17], "little")
        n_children = int.from_bytes(raw[17:25], "little")
        return raw[0:1].decode("latin-1"), node, n_children

    _, root, n_children = read_node()
    trie.root = root
    read = 1
    stack = [(root, n_children)]
    while stack:
        parent, remaining = stack.pop()
        if remaining == 0:
            continue
        stack.append((parent, remaining - 1))
        char, node, n_children = read_node()
        read += 1
        parent.children[char] = node
        stack.append((node, n_children))
    if read != node_total:
        raise CheckpointError(
            f"trie node count mismatch: header says {node_total}, stream has {read}"
        )
    return DirectionalLM(trie=trie, direction=direction)
