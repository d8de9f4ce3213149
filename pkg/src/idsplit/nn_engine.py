"""Dense-tensor recurrent network engine.

Implements exactly the architecture family this package trains: stacked
bidirectional LSTM/GRU layers over padded character sequences, a
time-distributed affine+sigmoid head, masked binary cross-entropy, full
backpropagation through time, and Adam. Everything is plain numpy; input
projections are batched into single GEMMs per layer-direction so CPU
training stays tractable.

Sequences are padded to a fixed length T and carry a per-sample mask (the
number of valid leading positions). States and outputs at positions at or
beyond the mask are forced to zero in both directions, and gradients never
flow through padding.

Gate conventions: LSTM gates are ordered (input, forget, cell, output) in
the stacked weight matrices; GRU gates are (update, reset, candidate) with
h = (1-z) * h_prev + z * n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeMismatchError


def sigmoid(x):
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def assert_finite(name, arr) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {name}")


def _check_shape(name, arr, expected) -> None:
    if tuple(arr.shape) != tuple(expected):
        raise ShapeMismatchError(f"{name} has shape {arr.shape}, expected {expected}")


@dataclass
class LstmCellParams:
    """Stacked LSTM weights: W [4H x D], U [4H x H], b [4H]."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        hidden = self.U.shape[1]
        _check_shape("lstm U", self.U, (4 * hidden, hidden))
        _check_shape("lstm W", self.W, (4 * hidden, self.W.shape[1]))
        _check_shape("lstm b", self.b, (4 * hidden,))

    @property
    def hidden(self) -> int:
        return self.U.shape[1]


@dataclass
class GruCellParams:
    """Stacked GRU weights: W [3H x D], U [3H x H], b [3H]."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        hidden = self.U.shape[1]
        _check_shape("gru U", self.U, (3 * hidden, hidden))
        _check_shape("gru W", self.W, (3 * hidden, self.W.shape[1]))
        _check_shape("gru b", self.b, (3 * hidden,))

    @property
    def hidden(self) -> int:
        return self.U.shape[1]


def lstm_step(p: LstmCellParams, x, h_prev, c_prev):
    """One LSTM step. Accepts [D]/[H] vectors or [B,D]/[B,H] batches."""
    h = p.hidden
    if x.shape[-1] != p.W.shape[1]:
        raise ShapeMismatchError(
            f"lstm input has size {x.shape[-1]}, W expects {p.W.shape[1]}"
        )
    if h_prev.shape[-1] != h or c_prev.shape[-1] != h:
        raise ShapeMismatchError(
            f"lstm state has size {h_prev.shape[-1]}/{c_prev.shape[-1]}, expected {h}"
        )
    a = x @ p.W.T + h_prev @ p.U.T + p.b
    i = sigmoid(a[..., :h])
    f = sigmoid(a[..., h:2 * h])
    g = np.tanh(a[..., 2 * h:3 * h])
    o = sigmoid(a[..., 3 * h:])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def gru_step(p: GruCellParams, x, h_prev):
    """One GRU step. Accepts [D]/[H] vectors or [B,D]/[B,H] batches."""
    h = p.hidden
    if x.shape[-1] != p.W.shape[1]:
        raise ShapeMismatchError(
            f"gru input has size {x.shape[-1]}, W expects {p.W.shape[1]}"
        )
    if h_prev.shape[-1] != h:
        raise ShapeMismatchError(f"gru state has size {h_prev.shape[-1]}, expected {h}")
    a_in = x @ p.W.T + p.b
    z = sigmoid(a_in[..., :h] + h_prev @ p.U[:h].T)
    r = sigmoid(a_in[..., h:2 * h] + h_prev @ p.U[h:2 * h].T)
    n = np.tanh(a_in[..., 2 * h:] + (r * h_prev) @ p.U[2 * h:].T)
    return (1.0 - z) * h_prev + z * n


def _lstm_sequence(p, X, valid, reverse):
    """Run an LSTM over [B,T,D] inputs, zeroing states beyond the mask."""
    B, T, _ = X.shape
    H = p.hidden
    xp = (X.reshape(B * T, -1) @ p.W.T).reshape(B, T, 4 * H) + p.b
    gates = np.empty((B, T, 4 * H), dtype=X.dtype)
    C = np.empty((B, T, H), dtype=X.dtype)
    Hprev = np.empty((B, T, H), dtype=X.dtype)
    Cprev = np.empty((B, T, H), dtype=X.dtype)
    out = np.empty((B, T, H), dtype=X.dtype)
    h = np.zeros((B, H), dtype=X.dtype)
    c = np.zeros((B, H), dtype=X.dtype)
    times = range(T - 1, -1, -1) if reverse else range(T)
    for t in times:
        v = valid[:, t:t + 1]
        a = xp[:, t] + h @ p.U.T
        i = sigmoid(a[:, :H])
        f = sigmoid(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = sigmoid(a[:, 3 * H:])
        Hprev[:, t] = h
        Cprev[:, t] = c
        c = (f * c + i * g) * v
        h = (o * np.tanh(c)) * v
        gates[:, t, :H] = i
        gates[:, t, H:2 * H] = f
        gates[:, t, 2 * H:3 * H] = g
        gates[:, t, 3 * H:] = o
        C[:, t] = c
        out[:, t] = h
    return out, (X, valid, reverse, gates, C, Hprev, Cprev)


def _lstm_sequence_backward(p, cache, dOut):
    X, valid, reverse, gates, C, Hprev, Cprev = cache
    B, T, _ = X.shape
    H = p.hidden
    dA = np.empty((B, T, 4 * H), dtype=X.dtype)
    dh_rec = np.zeros((B, H), dtype=X.dtype)
    dc_rec = np.zeros((B, H), dtype=X.dtype)
    times = range(T) if reverse else range(T - 1, -1, -1)
    for t in times:
        v = valid[:, t:t + 1]
        i = gates[:, t, :H]
        f = gates[:, t, H:2 * H]
        g = gates[:, t, 2 * H:3 * H]
        o = gates[:, t, 3 * H:]
        tc = np.tanh(C[:, t])
        dh = (dOut[:, t] + dh_rec) * v
        dc = dc_rec * v + dh * o * (1.0 - tc * tc)
        da_o = dh * tc * o * (1.0 - o)
        da_f = dc * Cprev[:, t] * f * (1.0 - f)
        da_i = dc * g * i * (1.0 - i)
        da_g = dc * i * (1.0 - g * g)
        dA[:, t, :H] = da_i
        dA[:, t, H:2 * H] = da_f
        dA[:, t, 2 * H:3 * H] = da_g
        dA[:, t, 3 * H:] = da_o
        dc_rec = dc * f
        dh_rec = dA[:, t] @ p.U
    flatA = dA.reshape(B * T, 4 * H)
    dW = flatA.T @ X.reshape(B * T, -1)
    dU = flatA.T @ Hprev.reshape(B * T, H)
    db = flatA.sum(axis=(0))
    dX = (flatA @ p.W).reshape(X.shape)
    return dX, dW, dU, db.reshape(-1)


def _gru_sequence(p, X, valid, reverse):
    """Run a GRU over [B,T,D] inputs, zeroing states beyond the mask."""
    B, T, _ = X.shape
    H = p.hidden
    xp = (X.reshape(B * T, -1) @ p.W.T).reshape(B, T, 3 * H) + p.b
    gates = np.empty((B, T, 3 * H), dtype=X.dtype)
    RH = np.empty((B, T, H), dtype=X.dtype)
    Hprev = np.empty((B, T, H), dtype=X.dtype)
    out = np.empty((B, T, H), dtype=X.dtype)
    Uz, Ur, Un = p.U[:H], p.U[H:2 * H], p.U[2 * H:]
    h = np.zeros((B, H), dtype=X.dtype)
    times = range(T - 1, -1, -1) if reverse else range(T)
    for t in times:
        v = valid[:, t:t + 1]
        z = sigmoid(xp[:, t, :H] + h @ Uz.T)
        r = sigmoid(xp[:, t, H:2 * H] + h @ Ur.T)
        rh = r * h
        n = np.tanh(xp[:, t, 2 * H:] + rh @ Un.T)
        Hprev[:, t] = h
        h = ((1.0 - z) * h + z * n) * v
        gates[:, t, :H] = z
        gates[:, t, H:2 * H] = r
        gates[:, t, 2 * H:] = n
        RH[:, t] = rh
        out[:, t] = h
    return out, (X, valid, reverse, gates, RH, Hprev)


def _gru_sequence_backward(p, cache, dOut):
    X, valid, reverse, gates, RH, Hprev = cache
    B, T, _ = X.shape
    H = p.hidden
    dA = np.empty((B, T, 3 * H), dtype=X.dtype)
    Uz, Ur, Un = p.U[:H], p.U[H:2 * H], p.U[2 * H:]
    dh_rec = np.zeros((B, H), dtype=X.dtype)
    times = range(T) if reverse else range(T - 1, -1, -1)
    for t in times:
        v = valid[:, t:t + 1]
        z = gates[:, t, :H]
        r = gates[:, t, H:2 * H]
        n = gates[:, t, 2 * H:]
        h_prev = Hprev[:, t]
        dh = (dOut[:, t] + dh_rec) * v
        da_z = dh * (n - h_prev) * z * (1.0 - z)
        da_n = dh * z * (1.0 - n * n)
        drh = da_n @ Un
        da_r = drh * h_prev * r * (1.0 - r)
        dA[:, t, :H] = da_z
        dA[:, t, H:2 * H] = da_r
        dA[:, t, 2 * H:] = da_n
        dh_rec = dh * (1.0 - z) + drh * r + da_z @ Uz + da_r @ Ur
    flatA = dA.reshape(B * T, 3 * H)
    dW = flatA.T @ X.reshape(B * T, -1)
    dU = np.concatenate(
        [
            dA[:, :, :H].reshape(B * T, H).T @ Hprev.reshape(B * T, H),
            dA[:, :, H:2 * H].reshape(B * T, H).T @ Hprev.reshape(B * T, H),
            dA[:, :, 2 * H:].reshape(B * T, H).T @ RH.reshape(B * T, H),
        ]
    )
    db = flatA.sum(axis=0)
    dX = (flatA @ p.W).reshape(X.shape)
    return dX, dW, dU, db


_SEQUENCE = {"lstm": _lstm_sequence, "gru": _gru_sequence}
_SEQUENCE_BACKWARD = {"lstm": _lstm_sequence_backward, "gru": _gru_sequence_backward}
GATE_FACTORS = {"lstm": 4, "gru": 3}


def _valid_matrix(mask, batch, seq_len, dtype):
    mask = np.asarray(mask)
    if mask.ndim == 0:
        mask = mask.reshape(1)
    if np.any(mask < 1) or np.any(mask > seq_len):
        raise ConfigError(f"mask values must be in 1..{seq_len}")
    return (np.arange(seq_len)[None, :] < mask[:, None]).astype(dtype)


def bidi_layer(fwd, bwd, inputs, mask, cell: str = "lstm"):
    """Forward-only bidirectional layer over [T,D] or [B,T,D] inputs.

    Forward states cover positions 0..mask-1, backward states are computed
    from mask-1 down to 0, and the two are concatenated per position.
    Positions at or beyond the mask are zero.
    """
    single = inputs.ndim == 2
    X = inputs[None] if single else inputs
    B, T, _ = X.shape
    valid = _valid_matrix(mask, B, T, X.dtype)
    run = _SEQUENCE[cell]
    out_f, _ = run(fwd, X, valid, reverse=False)
    out_b, _ = run(bwd, X, valid, reverse=True)
    out = np.concatenate([out_f, out_b], axis=-1)
    return out[0] if single else out


def sigmoid_head(W, b, states):
    """Per-position sigmoid of an affine map of [.., T, K] states."""
    w = np.asarray(W).reshape(-1)
    if states.shape[-1] != w.shape[0]:
        raise ShapeMismatchError(
            f"head states have size {states.shape[-1]}, W expects {w.shape[0]}"
        )
    return sigmoid(states @ w + np.asarray(b).reshape(-1)[0])


BCE_EPSILON = 1e-7


def masked_bce(probs, labels, mask):
    """Mean binary cross-entropy over valid positions, with its gradient.

    Accepts a single [T] sequence with an integer mask, or a [B,T] batch with
    a [B] mask vector (the mean pools every valid position in the batch).
    Probabilities are clamped to [1e-7, 1 - 1e-7]; the returned gradient is
    zero at clamped and padded positions.
    """
    probs = np.asarray(probs)
    single = probs.ndim == 1
    P = probs[None] if single else probs
    Y = np.asarray(labels)[None] if single else np.asarray(labels)
    if P.shape != Y.shape:
        raise ShapeMismatchError(f"probs shape {P.shape} != labels shape {Y.shape}")
    if not np.all((Y == 0) | (Y == 1)):
        raise ValueError("labels must be 0 or 1")
    valid = _valid_matrix(mask, P.shape[0], P.shape[1], P.dtype)
    n_valid = valid.sum()
    clamped = np.clip(P, BCE_EPSILON, 1.0 - BCE_EPSILON)
    losses = -(Y * np.log(clamped) + (1.0 - Y) * np.log(1.0 - clamped))
    loss = float((losses * valid).sum() / n_valid)
    inside = (P > BCE_EPSILON) & (P < 1.0 - BCE_EPSILON)
    grad = np.where(
        inside, (clamped - Y) / (clamped * (1.0 - clamped)), 0.0
    ) * valid / n_valid
    grad = grad.astype(P.dtype)
    return loss, (grad[0] if single else grad)


def init_params(
    cell: str,
    input_dim: int,
    hidden: int,
    layers: int = 2,
    seed: int = 0,
    dtype=np.float32,
) -> dict[str, np.ndarray]:
    """Seeded parameter bundle for the stacked bidirectional network.

    Weights are uniform in [-k, k] with k = 1/sqrt(hidden) (head: fan-in);
    biases start at zero except the LSTM forget gate, which starts at 1.
    """
    if cell not in GATE_FACTORS:
        raise ConfigError(f"unknown cell type {cell!r}")
    if hidden < 1:
        raise ConfigError(f"hidden size must be >= 1, got {hidden}")
    if layers < 1:
        raise ConfigError(f"layer count must be >= 1, got {layers}")
    gate = GATE_FACTORS[cell]
    rng = np.random.default_rng(seed)
    k = 1.0 / math.sqrt(hidden)
    params: dict[str, np.ndarray] = {}
    for layer in range(1, layers + 1):
        dim = input_dim if layer == 1 else 2 * hidden
        for direction in ("fwd", "bwd"):
            prefix = f"layer{layer}.{direction}"
            params[f"{prefix}.W"] = rng.uniform(-k, k, (gate * hidden, dim)).astype(dtype)
            params[f"{prefix}.U"] = rng.uniform(-k, k, (gate * hidden, hidden)).astype(dtype)
            bias = np.zeros(gate * hidden, dtype=dtype)
            if cell == "lstm":
                bias[hidden:2 * hidden] = 1.0
            params[f"{prefix}.b"] = bias
    kh = 1.0 / math.sqrt(2 * hidden)
    params["head.W"] = rng.uniform(-kh, kh, (1, 2 * hidden)).astype(dtype)
    params["head.b"] = np.zeros(1, dtype=dtype)
    return params


def param_shapes(cell: str, input_dim: int, hidden: int, layers: int = 2) -> dict[str, tuple]:
    """Expected tensor shapes, keyed by parameter name."""
    gate = GATE_FACTORS[cell]
    shapes: dict[str, tuple] = {}
    for layer in range(1, layers + 1):
        dim = input_dim if layer == 1 else 2 * hidden
        for direction in ("fwd", "bwd"):
            prefix = f"layer{layer}.{direction}"
            shapes[f"{prefix}.W"] = (gate * hidden, dim)
            shapes[f"{prefix}.U"] = (gate * hidden, hidden)
            shapes[f"{prefix}.b"] = (gate * hidden,)
    shapes["head.W"] = (1, 2 * hidden)
    shapes["head.b"] = (1,)
    return shapes


class BiRnnNetwork:
    """Stacked bidirectional recurrent network with a sigmoid head.

    ``forward`` caches everything ``backward`` needs; ``backward`` raises if
    no forward pass is cached.
    """

    def __init__(
        self,
        cell: str,
        input_dim: int,
        hidden: int,
        layers: int = 2,
        seed: int = 0,
        dtype=np.float32,
        params: dict | None = None,
    ):
        if cell not in GATE_FACTORS:
            raise ConfigError(f"unknown cell type {cell!r}")
        self.cell = cell
        self.input_dim = input_dim
        self.hidden = hidden
        self.layers = layers
        self.dtype = dtype
        self.params = (
            params
            if params is not None
            else init_params(cell, input_dim, hidden, layers, seed, dtype)
        )
        for name, shape in param_shapes(cell, input_dim, hidden, layers).items():
            _check_shape(name, self.params[name], shape)
        self._cache = None

    def _cell_params(self, layer: int, direction: str):
        prefix = f"layer{layer}.{direction}"
        cls = LstmCellParams if self.cell == "lstm" else GruCellParams
        return cls(
            W=self.params[f"{prefix}.W"],
            U=self.params[f"{prefix}.U"],
            b=self.params[f"{prefix}.b"],
        )

    def forward(self, X, mask):
        """Probabilities [B,T] for one-hot inputs [B,T,input_dim]."""
        X = np.asarray(X, dtype=self.dtype)
        if X.ndim != 3 or X.shape[2] != self.input_dim:
            raise ShapeMismatchError(
                f"network input has shape {X.shape}, expected [B,T,{self.input_dim}]"
            )
        valid = _valid_matrix(mask, X.shape[0], X.shape[1], self.dtype)
        run = _SEQUENCE[self.cell]
        layer_caches = []
        inp = X
        for layer in range(1, self.layers + 1):
            out_f, cache_f = run(self._cell_params(layer, "fwd"), inp, valid, False)
            out_b, cache_b = run(self._cell_params(layer, "bwd"), inp, valid, True)
            inp = np.concatenate([out_f, out_b], axis=-1)
            layer_caches.append((cache_f, cache_b))
        w = self.params["head.W"].reshape(-1)
        probs = sigmoid(inp @ w + self.params["head.b"][0])
        assert_finite("probs", probs)
        self._cache = (layer_caches, inp, probs)
        return probs

    def backward(self, dprobs):
        """Gradients of the cached forward pass for every parameter tensor."""
        if self._cache is None:
            raise ConfigError("backward called without a cached forward pass")
        layer_caches, states, probs = self._cache
        dz = np.asarray(dprobs, dtype=self.dtype) * probs * (1.0 - probs)
        w = self.params["head.W"].reshape(-1)
        B, T, K = states.shape
        grads: dict[str, np.ndarray] = {}
        grads["head.W"] = (dz.reshape(B * T) @ states.reshape(B * T, K)).reshape(1, K)
        grads["head.b"] = np.array([dz.sum()], dtype=self.dtype)
        dstates = dz[..., None] * w
        backward_run = _SEQUENCE_BACKWARD[self.cell]
        for layer in range(self.layers, 0, -1):
            cache_f, cache_b = layer_caches[layer - 1]
            hidden = self.hidden
            dX_f, dW_f, dU_f, db_f = backward_run(
                self._cell_params(layer, "fwd"), cache_f, dstates[..., :hidden]
            )
            dX_b, dW_b, dU_b, db_b = backward_run(
                self._cell_params(layer, "bwd"), cache_b, dstates[..., hidden:]
            )
            prefix = f"layer{layer}"
            grads[f"{prefix}.fwd.W"] = dW_f
            grads[f"{prefix}.fwd.U"] = dU_f
            grads[f"{prefix}.fwd.b"] = db_f
            grads[f"{prefix}.bwd.W"] = dW_b
            grads[f"{prefix}.bwd.U"] = dU_b
            grads[f"{prefix}.bwd.b"] = db_b
            dstates = dX_f + dX_b
        for name, grad in grads.items():
            assert_finite(f"grad[{name}]", grad)
        return grads


@dataclass
class AdamState:
    """Per-tensor first/second moment estimates plus the step counter."""

    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict[str, np.ndarray], lr: float = 0.001) -> AdamState:
    return AdamState(
        t=0,
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        lr=lr,
    )


def adam_step(state: AdamState, params: dict, grads: dict):
    """Bias-corrected Adam update, applied in place. Returns (params, state)."""
    state.t += 1
    correct1 = 1.0 - state.beta1 ** state.t
    correct2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(
                f"gradient for {name} has shape {g.shape}, parameter has {p.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)
        assert_finite(f"params[{name}]", p)
    return params, state
