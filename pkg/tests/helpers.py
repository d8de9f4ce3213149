"""Shared test utilities: finite-difference gradients and reference cells."""

import math

import numpy as np

from idsplit import nn_engine
from idsplit.nn_engine import BiRnnNetwork, masked_bce


def scalar_sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def lstm_step_reference(W, U, b, x, h_prev, c_prev):
    """Straight-line scalar LSTM step, independent of the vectorized path."""
    H = len(h_prev)
    h_out = [0.0] * H
    c_out = [0.0] * H
    for j in range(H):
        acts = []
        for gate in range(4):
            row = gate * H + j
            a = b[row]
            for d in range(len(x)):
                a += W[row][d] * x[d]
            for k in range(H):
                a += U[row][k] * h_prev[k]
            acts.append(a)
        i = scalar_sigmoid(acts[0])
        f = scalar_sigmoid(acts[1])
        g = math.tanh(acts[2])
        o = scalar_sigmoid(acts[3])
        c_out[j] = f * c_prev[j] + i * g
        h_out[j] = o * math.tanh(c_out[j])
    return np.array(h_out), np.array(c_out)


def gru_step_reference(W, U, b, x, h_prev):
    """Straight-line scalar GRU step, update/reset/candidate gate order."""
    H = len(h_prev)
    D = len(x)

    def affine(row, vec):
        return b[row] + sum(W[row][d] * x[d] for d in range(D)) + sum(
            U[row][k] * vec[k] for k in range(H)
        )

    z = [scalar_sigmoid(affine(j, h_prev)) for j in range(H)]
    r = [scalar_sigmoid(affine(H + j, h_prev)) for j in range(H)]
    rh = [r[k] * h_prev[k] for k in range(H)]
    n = [math.tanh(affine(2 * H + j, rh)) for j in range(H)]
    return np.array([(1.0 - z[j]) * h_prev[j] + z[j] * n[j] for j in range(H)])


def relative_error(a, b, floor=1e-5):
    a = float(a)
    b = float(b)
    return abs(a - b) / max(floor, abs(a), abs(b))


def max_param_rel_error(analytic, numeric, floor=1e-5):
    worst = 0.0
    for (x, y) in zip(analytic.reshape(-1), numeric.reshape(-1)):
        worst = max(worst, relative_error(x, y, floor))
    return worst


def random_batch(rng, batch, seq_len, input_dim, min_mask=1):
    X = rng.standard_normal((batch, seq_len, input_dim))
    labels = (rng.random((batch, seq_len)) < 0.3).astype(np.float64)
    mask = rng.integers(min_mask, seq_len + 1, size=batch)
    for b in range(batch):
        labels[b, mask[b]:] = 0.0
    return X, labels, mask


def network_loss(net, X, labels, mask):
    probs = net.forward(X, mask)
    loss, _ = masked_bce(probs, labels, mask)
    return loss


def analytic_grads(net, X, labels, mask):
    probs = net.forward(X, mask)
    _, dprobs = masked_bce(probs, labels, mask)
    return net.backward(dprobs)


def numeric_grad(net, X, labels, mask, name, step=1e-5):
    """Central finite differences over every element of one parameter."""
    tensor = net.params[name]
    grad = np.zeros_like(tensor)
    flat = tensor.reshape(-1)
    grad_flat = grad.reshape(-1)
    for idx in range(flat.size):
        original = flat[idx]
        flat[idx] = original + step
        loss_plus = network_loss(net, X, labels, mask)
        flat[idx] = original - step
        loss_minus = network_loss(net, X, labels, mask)
        flat[idx] = original
        grad_flat[idx] = (loss_plus - loss_minus) / (2.0 * step)
    return grad


def _np_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _stacked_losses(cell, params, override_name, stacked, X, labels, mask):
    """Loss of every parameter variant in one broadcast forward pass.

    ``stacked`` is a [K, *shape] bundle of variants of ``override_name``;
    every other tensor keeps a leading broadcast axis of 1. Returns [K]
    losses. This is the vectorized finite-difference oracle: it reimplements
    the forward pass independently of the engine's backward code.
    """
    B, T, D = X.shape

    def tensor(name):
        if name == override_name:
            return stacked
        return params[name][None]

    valid = (np.arange(T)[None, :] < np.asarray(mask)[:, None]).astype(np.float64)
    inputs = X[None]  # [V,B,T,D]
    layers = sorted({name.split(".")[0] for name in params if name.startswith("layer")})
    for layer in layers:
        outs = []
        for direction, reverse in (("fwd", False), ("bwd", True)):
            W = tensor(f"{layer}.{direction}.W")
            U = tensor(f"{layer}.{direction}.U")
            b = tensor(f"{layer}.{direction}.b")
            H = U.shape[-1]
            din = inputs.shape[-1]
            prod = np.matmul(
                inputs.reshape(inputs.shape[0], B * T, din), W.transpose(0, 2, 1)
            )
            xp = prod.reshape(prod.shape[0], B, T, prod.shape[-1]) + b[:, None, None, :]
            h = np.zeros((1, B, H))
            c = np.zeros((1, B, H))
            slots = [None] * T
            times = range(T - 1, -1, -1) if reverse else range(T)
            for t in times:
                v = valid[None, :, t:t + 1]
                if cell == "lstm":
                    a = xp[:, :, t] + np.matmul(h, U.transpose(0, 2, 1))
                    i = _np_sigmoid(a[..., :H])
                    f = _np_sigmoid(a[..., H:2 * H])
                    g = np.tanh(a[..., 2 * H:3 * H])
                    o = _np_sigmoid(a[..., 3 * H:])
                    c = (f * c + i * g) * v
                    h = (o * np.tanh(c)) * v
                else:
                    Uz, Ur, Un = U[:, :H], U[:, H:2 * H], U[:, 2 * H:]
                    z = _np_sigmoid(xp[:, :, t, :H] + np.matmul(h, Uz.transpose(0, 2, 1)))
                    r = _np_sigmoid(
                        xp[:, :, t, H:2 * H] + np.matmul(h, Ur.transpose(0, 2, 1))
                    )
                    n = np.tanh(
                        xp[:, :, t, 2 * H:] + np.matmul(r * h, Un.transpose(0, 2, 1))
                    )
                    h = ((1.0 - z) * h + z * n) * v
                slots[t] = h
            variants = max(s.shape[0] for s in slots)
            stacked_out = np.empty((variants, B, T, H))
            for t in range(T):
                stacked_out[:, :, t] = slots[t]
            outs.append(stacked_out)
        variants = max(o.shape[0] for o in outs)
        outs = [
            np.broadcast_to(o, (variants, *o.shape[1:])) if o.shape[0] != variants else o
            for o in outs
        ]
        inputs = np.concatenate(outs, axis=-1)
    w_row = tensor("head.W").reshape(tensor("head.W").shape[0], -1)
    bias = tensor("head.b").reshape(tensor("head.b").shape[0], -1)
    logits = (inputs * w_row[:, None, None, :]).sum(-1) + bias[:, :, None]
    probs = _np_sigmoid(logits)
    clamped = np.clip(probs, 1e-7, 1.0 - 1e-7)
    Y = labels[None]
    losses = -(Y * np.log(clamped) + (1.0 - Y) * np.log(1.0 - clamped))
    return (losses * valid[None]).sum(axis=(1, 2)) / valid.sum()


def batched_numeric_grad(cell, params, X, labels, mask, name, step=1e-5, chunk=96):
    """Central finite differences, vectorized over parameter elements."""
    tensor = params[name]
    flat = tensor.reshape(-1)
    grad = np.zeros_like(flat)
    for start in range(0, flat.size, chunk):
        idx = np.arange(start, min(start + chunk, flat.size))
        k = idx.size
        variants = np.broadcast_to(tensor, (2 * k, *tensor.shape)).copy()
        flat_variants = variants.reshape(2 * k, -1)
        flat_variants[np.arange(k), idx] += step
        flat_variants[np.arange(k, 2 * k), idx] -= step
        losses = _stacked_losses(cell, params, name, variants, X, labels, mask)
        grad[idx] = (losses[:k] - losses[k:]) / (2.0 * step)
    return grad.reshape(tensor.shape)


def check_network_gradients(cell, seed, hidden=5, seq_len=8, batch=3, input_dim=6,
                            tolerance=1e-4, fast=False):
    """Full-network finite-difference check; returns the worst relative error."""
    rng = np.random.default_rng(seed)
    net = BiRnnNetwork(
        cell, input_dim=input_dim, hidden=hidden, seed=seed, dtype=np.float64
    )
    X, labels, mask = random_batch(rng, batch, seq_len, input_dim)
    grads = analytic_grads(net, X, labels, mask)
    worst = 0.0
    for name in sorted(net.params):
        if fast:
            numeric = batched_numeric_grad(cell, net.params, X, labels, mask, name)
        else:
            numeric = numeric_grad(net, X, labels, mask, name)
        worst = max(worst, max_param_rel_error(grads[name], numeric))
    assert worst < tolerance, f"{cell} seed {seed}: max relative error {worst}"
    return worst


def make_network_params_f64(cell, input_dim, hidden, layers=2, seed=0):
    return nn_engine.init_params(cell, input_dim, hidden, layers, seed, np.float64)
