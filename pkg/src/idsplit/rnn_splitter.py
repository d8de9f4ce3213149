"""Character-level bidirectional recurrent splitter.

Merged identifiers are one-hot encoded over [a-z0-9] plus a catch-all
symbol, padded to 40 positions, and labeled 1 wherever a new subtoken
begins. Two stacked bidirectional layers feed a per-position sigmoid head;
positions whose probability exceeds the threshold become predicted
boundaries. Inputs longer than the sequence length are handled at
prediction time with overlapping windows.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import nn_engine
from .corpus import Dataset
from .errors import CheckpointError, ConfigError, ShapeMismatchError

ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"
SEQ_LEN = 40
CHECKPOINT_MAGIC = "IDNN1"
CHECKPOINT_VERSION = "1"

WINDOW_STRIDE = 20


@dataclass(frozen=True)
class ModelManifest:
    """Architecture description; parameter names and shapes follow from it."""

    cell: str = "lstm"
    hidden: int = 64
    layers: int = 2
    seq_len: int = SEQ_LEN
    alphabet: str = ALPHABET
    threshold: float = 0.5
    version: str = CHECKPOINT_VERSION

    def __post_init__(self):
        if self.cell not in ("lstm", "gru"):
            raise ConfigError(f"unknown cell type {self.cell!r}")
        if self.hidden < 1:
            raise ConfigError(f"hidden size must be >= 1, got {self.hidden}")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ConfigError("alphabet must not contain duplicates")

    @property
    def input_dim(self) -> int:
        # one extra column for characters outside the alphabet
        return len(self.alphabet) + 1

    def char_index(self, ch: str) -> int:
        idx = self.alphabet.find(ch)
        return idx if idx >= 0 else len(self.alphabet)

    def param_shapes(self) -> dict[str, tuple]:
        return nn_engine.param_shapes(self.cell, self.input_dim, self.hidden, self.layers)


@dataclass
class SplitPrediction:
    """Per-position boundary probabilities and the thresholded boundary set."""

    probs: np.ndarray  # length == mask
    boundaries: set[int]


@dataclass
class TrainLogEntry:
    epoch: int
    train_loss: float
    val_loss: float
    val_precision: float
    val_recall: float
    val_f1: float


def encode(merged: str, manifest: ModelManifest, boundaries=None):
    """One-hot inputs, labels, and mask for a merged identifier.

    Labels are 1 at each boundary index and 0 elsewhere (zero everywhere when
    no boundaries are given). Characters outside the alphabet map to the
    catch-all column.
    """
    if not merged:
        raise ValueError("cannot encode an empty string")
    if len(merged) > manifest.seq_len:
        raise ValueError(
            f"string of length {len(merged)} exceeds sequence length {manifest.seq_len}"
        )
    x = np.zeros((manifest.seq_len, manifest.input_dim), dtype=np.float32)
    for t, ch in enumerate(merged):
        x[t, manifest.char_index(ch)] = 1.0
    labels = np.zeros(manifest.seq_len, dtype=np.float32)
    if boundaries:
        for p in boundaries:
            labels[p] = 1.0
    return x, labels, len(merged)


def _index_encode(records, manifest):
    """Compact index/label/mask arrays for a record list, one-hot on demand."""
    n = len(records)
    idx = np.zeros((n, manifest.seq_len), dtype=np.uint8)
    labels = np.zeros((n, manifest.seq_len), dtype=np.float32)
    mask = np.zeros(n, dtype=np.int64)
    for row, rec in enumerate(records):
        for t, ch in enumerate(rec.merged):
            idx[row, t] = manifest.char_index(ch)
        for p in rec.boundaries:
            labels[row, p] = 1.0
        mask[row] = len(rec.merged)
    return idx, labels, mask


def _one_hot(idx_rows, manifest, dtype=np.float32):
    eye = np.eye(manifest.input_dim, dtype=dtype)
    return eye[idx_rows]


def _network(manifest: ModelManifest, params=None, seed: int = 0, dtype=np.float32):
    return nn_engine.BiRnnNetwork(
        cell=manifest.cell,
        input_dim=manifest.input_dim,
        hidden=manifest.hidden,
        layers=manifest.layers,
        seed=seed,
        dtype=dtype,
        params=params,
    )


def train(
    dataset: Dataset,
    manifest: ModelManifest,
    epochs: int,
    batch_size: int = 512,
    seed: int = 0,
    lr: float = 0.001,
    log_sink=None,
):
    """Mini-batch Adam over the training split.

    Returns the final parameters and one log entry per epoch with train loss
    and validation loss/precision/recall/F1. ``log_sink`` is called with each
    entry as it is produced. ``epochs=0`` returns the seeded initialization
    with an empty log.
    """
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    train_records = dataset.train_records()
    if not train_records:
        raise ValueError("dataset has no training records")
    val_records = dataset.validation_records()
    net = _network(manifest, seed=seed)
    log: list[TrainLogEntry] = []
    if epochs == 0:
        return net.params, log
    idx, labels, mask = _index_encode(train_records, manifest)
    rng = np.random.default_rng(seed)
    state = nn_engine.adam_init(net.params, lr=lr)
    n = len(train_records)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        valid_sum = 0
        for start in range(0, n, batch_size):
            take = order[start:start + batch_size]
            X = _one_hot(idx[take], manifest)
            batch_labels = labels[take]
            batch_mask = mask[take]
            probs = net.forward(X, batch_mask)
            loss, dprobs = nn_engine.masked_bce(probs, batch_labels, batch_mask)
            grads = net.backward(dprobs)
            nn_engine.adam_step(state, net.params, grads)
            n_valid = int(batch_mask.sum())
            loss_sum += loss * n_valid
            valid_sum += n_valid
        entry = _epoch_entry(
            epoch, loss_sum / valid_sum, net, manifest, val_records, batch_size
        )
        log.append(entry)
        if log_sink is not None:
            log_sink(entry)
    return net.params, log


def _epoch_entry(epoch, train_loss, net, manifest, val_records, batch_size):
    if not val_records:
        return TrainLogEntry(epoch, train_loss, 0.0, 0.0, 0.0, 0.0)
    idx, labels, mask = _index_encode(val_records, manifest)
    loss_sum = 0.0
    valid_sum = 0
    tp = fp = fn = 0
    for start in range(0, len(val_records), batch_size):
        stop = start + batch_size
        X = _one_hot(idx[start:stop], manifest)
        batch_mask = mask[start:stop]
        batch_labels = labels[start:stop]
        probs = net.forward(X, batch_mask)
        loss, _ = nn_engine.masked_bce(probs, batch_labels, batch_mask)
        n_valid = int(batch_mask.sum())
        loss_sum += loss * n_valid
        valid_sum += n_valid
        valid = np.arange(manifest.seq_len)[None, :] < batch_mask[:, None]
        valid[:, 0] = False  # position 0 is never a boundary
        pred = (probs > manifest.threshold) & valid
        truth = batch_labels > 0.5
        tp += int((pred & truth).sum())
        fp += int((pred & ~truth).sum())
        fn += int((~pred & truth).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return TrainLogEntry(epoch, train_loss, loss_sum / valid_sum, precision, recall, f1)


def _boundaries_from_probs(probs, mask, threshold):
    return {p for p in range(1, mask) if probs[p] > threshold}


def predict(params, manifest: ModelManifest, merged: str) -> SplitPrediction:
    """Boundary probabilities for one merged identifier.

    Strings longer than the sequence length are processed in overlapping
    windows (stride 20) and per-position probabilities are averaged across
    the windows that cover them; a window's leading position is skipped
    because position 0 carries no boundary signal.
    """
    if not merged:
        raise ValueError("cannot predict on an empty string")
    net = _network(manifest, params=params)
    if len(merged) <= manifest.seq_len:
        x, _, mask = encode(merged, manifest)
        probs = net.forward(x[None], np.array([mask]))[0][:mask]
        probs = np.asarray(probs, dtype=np.float32)
        return SplitPrediction(
            probs=probs,
            boundaries=_boundaries_from_probs(probs, mask, manifest.threshold),
        )
    length = len(merged)
    starts = list(range(0, length - manifest.seq_len, WINDOW_STRIDE))
    starts.append(length - manifest.seq_len)
    sums = np.zeros(length, dtype=np.float64)
    hits = np.zeros(length, dtype=np.int64)
    for start in starts:
        chunk = merged[start:start + manifest.seq_len]
        x, _, mask = encode(chunk, manifest)
        probs = net.forward(x[None], np.array([mask]))[0][:mask]
        begin = 1 if start > 0 else 0
        sums[start + begin:start + mask] += probs[begin:]
        hits[start + begin:start + mask] += 1
    averaged = (sums / np.maximum(hits, 1)).astype(np.float32)
    return SplitPrediction(
        probs=averaged,
        boundaries=_boundaries_from_probs(averaged, length, manifest.threshold),
    )


def predict_boundaries_batch(params, manifest, merged_list, batch_size=512):
    """Boundary sets for many identifiers, batched for throughput.

    Oversize strings fall back to the windowed single path.
    """
    net = _network(manifest, params=params)
    out: list[set] = [set()] * len(merged_list)
    small = [(i, m) for i, m in enumerate(merged_list) if len(m) <= manifest.seq_len]
    for start in range(0, len(small), batch_size):
        chunk = small[start:start + batch_size]
        idx = np.zeros((len(chunk), manifest.seq_len), dtype=np.uint8)
        mask = np.zeros(len(chunk), dtype=np.int64)
        for row, (_, merged) in enumerate(chunk):
            for t, ch in enumerate(merged):
                idx[row, t] = manifest.char_index(ch)
            mask[row] = len(merged)
        probs = net.forward(_one_hot(idx, manifest), mask)
        for row, (i, _) in enumerate(chunk):
            out[i] = _boundaries_from_probs(
                probs[row], int(mask[row]), manifest.threshold
            )
    for i, merged in enumerate(merged_list):
        if len(merged) > manifest.seq_len:
            out[i] = predict(params, manifest, merged).boundaries
    return out


def split_text(params, manifest: ModelManifest, identifier: str) -> list[str]:
    """Heuristic split followed by model refinement of each part.

    Convention-derived boundaries are always preserved; the network only adds
    boundaries inside individual heuristic parts.
    """
    from .corpus import heuristic_split

    parts = heuristic_split(identifier)
    out: list[str] = []
    for part in parts:
        if len(part) < 2:
            out.append(part)
            continue
        bounds = sorted(predict(params, manifest, part).boundaries)
        cuts = [0, *bounds, len(part)]
        out.extend(part[a:b] for a, b in zip(cuts, cuts[1:]))
    return out


def save_model(params, manifest: ModelManifest, path) -> None:
    """Write the checkpoint: manifest block, named tensors, trailing CRC32."""
    blob = bytearray()
    blob += f"format: {CHECKPOINT_MAGIC}\n".encode()
    blob += f"version: {manifest.version}\n".encode()
    blob += f"cell: {manifest.cell}\n".encode()
    blob += f"layers: {manifest.layers}\n".encode()
    blob += f"hidden: {manifest.hidden}\n".encode()
    blob += f"seq_len: {manifest.seq_len}\n".encode()
    blob += f"alphabet: {manifest.alphabet}\n".encode()
    blob += f"threshold: {manifest.threshold!r}\n".encode()
    blob += b"\n"
    for name in sorted(params):
        tensor = np.ascontiguousarray(params[name], dtype=np.float32)
        encoded = name.encode("ascii")
        blob += len(encoded).to_bytes(4, "little")
        blob += encoded
        blob += tensor.ndim.to_bytes(4, "little")
        for dim in tensor.shape:
            blob += int(dim).to_bytes(4, "little")
        blob += tensor.tobytes(order="C")
    blob += (zlib.crc32(bytes(blob)) & 0xFFFFFFFF).to_bytes(4, "little")
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_model(path, expected_cell: str | None = None):
    """Read a checkpoint back into (params, manifest).

    Verifies the trailing CRC32, the manifest version, and every tensor shape
    against the manifest; ``expected_cell`` adds an explicit architecture
    check for callers that require one cell type.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise CheckpointError("checkpoint too short to contain a checksum")
    body, stored = blob[:-4], blob[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != int.from_bytes(stored, "little"):
        raise CheckpointError("checkpoint checksum mismatch (truncated or corrupt)")
    header_end = body.find(b"\n\n")
    if header_end < 0:
        raise CheckpointError("checkpoint has no manifest terminator")
    fields = {}
    for line in body[:header_end].decode("utf-8").splitlines():
        key, _, value = line.partition(": ")
        fields[key] = value
    if fields.get("format") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"unknown checkpoint format {fields.get('format')!r}")
    if fields.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unknown checkpoint version {fields.get('version')!r}")
    try:
        manifest = ModelManifest(
            cell=fields["cell"],
            hidden=int(fields["hidden"]),
            layers=int(fields["layers"]),
            seq_len=int(fields["seq_len"]),
            alphabet=fields["alphabet"],
            threshold=float(fields["threshold"]),
            version=fields["version"],
        )
    except KeyError as exc:
        raise CheckpointError(f"manifest is missing key {exc}") from None
    if expected_cell is not None and manifest.cell != expected_cell:
        raise ShapeMismatchError(
            f"checkpoint holds a {manifest.cell} model, expected {expected_cell}"
        )
    params = {}
    offset = header_end + 2
    while offset < len(body):
        name_len = int.from_bytes(body[offset:offset + 4], "little")
        offset += 4
        name = body[offset:offset + name_len].decode("ascii")
        offset += name_len
        rank = int.from_bytes(body[offset:offset + 4], "little")
        offset += 4
        dims = []
        for _ in range(rank):
            dims.append(int.from_bytes(body[offset:offset + 4], "little"))
            offset += 4
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw = body[offset:offset + 4 * count]
        if len(raw) != 4 * count:
            raise CheckpointError(f"tensor {name!r} is truncated")
        offset += 4 * count
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    expected = manifest.param_shapes()
    if set(params) != set(expected):
        missing = sorted(set(expected) ^ set(params))
        raise CheckpointError(f"checkpoint tensors do not match manifest: {missing}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeMismatchError(
                f"tensor {name} has shape {params[name].shape}, manifest requires {shape}"
            )
    return params, manifest
