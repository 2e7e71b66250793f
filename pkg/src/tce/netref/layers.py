"""Numpy building blocks: 3x3 convolutions, BLSTM, attention, positional encoding.

Recurrent layers run feature-major, (steps, features, batch), so every
per-step matmul and gate update touches contiguous memory.
"""

from __future__ import annotations

import numpy as np


def conv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Cross-correlation, stride 1, zero padding 1. x: [C_in, T, F] -> [C_out, T, F]."""
    c_in, T, F = x.shape
    c_out = weight.shape[0]
    xp = np.zeros((c_in, T + 2, F + 2), dtype=np.float32)
    xp[:, 1:-1, 1:-1] = x
    out = np.empty((c_out, T * F), dtype=np.float32)
    out[:] = bias[:, None]
    for i in range(3):
        for j in range(3):
            patch = np.ascontiguousarray(xp[:, i:i + T, j:j + F]).reshape(c_in, T * F)
            out += weight[:, :, i, j] @ patch
    return out.reshape(c_out, T, F)


def deconv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Transposed convolution, stride 1, padding 1. weight: [C_in, C_out, 3, 3]."""
    kernel = np.ascontiguousarray(weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    return conv3x3(x, kernel, bias)


def prelu(x: np.ndarray, slope) -> np.ndarray:
    return np.where(x >= 0, x, x * np.float32(slope[0] if np.ndim(slope) else slope))


def _gate_order(w: np.ndarray, hidden: int) -> np.ndarray:
    """Reorder rows from (i, f, g, o) to (i, f, o, g) and halve the sigmoid rows.

    sigmoid(z) = (1 + tanh(z / 2)) / 2, so one tanh over the whole gate block
    serves all four gates.
    """
    i, f, g, o = (w[k * hidden:(k + 1) * hidden] for k in range(4))
    return np.concatenate([0.5 * i, 0.5 * f, 0.5 * o, g]).astype(np.float32)


def _run_direction(x, w_ih, w_hh, bias, hidden, reverse, proj, acc):
    """One LSTM direction; adds ``proj @ h_s`` into ``acc[s]`` for every step.

    Input, recurrent state and a constant-one row share one buffer so each
    step is a single matmul against [w_ih | w_hh | bias].
    """
    steps, n_in, batch = x.shape
    H = hidden
    w = np.concatenate(
        [_gate_order(w_ih, H), _gate_order(w_hh, H), _gate_order(bias[:, None], H)], axis=1
    )
    xh = np.zeros((n_in + H + 1, batch), dtype=np.float32)
    xh[-1] = 1.0
    h = xh[n_in:n_in + H]
    c = np.zeros((H, batch), dtype=np.float32)
    g = np.empty((4 * H, batch), dtype=np.float32)
    tmp = np.empty((H, batch), dtype=np.float32)
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for s in order:
        xh[:n_in] = x[s]
        np.matmul(w, xh, out=g)
        np.tanh(g, out=g)
        sig = g[:3 * H]
        sig += 1.0
        sig *= 0.5
        c *= g[H:2 * H]
        np.multiply(g[:H], g[3 * H:], out=tmp)
        c += tmp
        np.tanh(c, out=tmp)
        np.multiply(tmp, g[2 * H:3 * H], out=h)
        acc[s] += proj @ h


def blstm_project(x: np.ndarray, params, prefix: str, proj_prefix: str, hidden: int) -> np.ndarray:
    """Bidirectional LSTM followed by a linear 2H -> D projection.

    x: [steps, D_in, batch] -> [steps, D_out, batch]. The hidden states are
    never materialised for the whole sequence; each direction's projection
    is accumulated step by step.
    """
    pw = params[f"{proj_prefix}.weight"]
    out = np.empty((x.shape[0], pw.shape[0], x.shape[2]), dtype=np.float32)
    out[:] = params[f"{proj_prefix}.bias"][None, :, None]
    for d, reverse, cols in (("fwd", False, slice(0, hidden)), ("bwd", True, slice(hidden, 2 * hidden))):
        _run_direction(
            x,
            params[f"{prefix}.{d}.w_ih"],
            params[f"{prefix}.{d}.w_hh"],
            params[f"{prefix}.{d}.bias"],
            hidden,
            reverse,
            np.ascontiguousarray(pw[:, cols]),
            out,
        )
    return out


def positional_encoding(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(0, dim, 2, dtype=np.float64)
    freq = np.exp(-np.log(10000.0) * i / dim)
    pe = np.zeros((n, dim))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq[: dim // 2])
    return pe.astype(np.float32)


def softmax_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, block: int = 1024) -> np.ndarray:
    """softmax(q k^T / sqrt(E)) v for one head, processed in query blocks.

    q, k: [N, E]; v: [N, Dv]. Blocking keeps memory at block x N.
    """
    n, e = q.shape
    scale = np.float32(1.0 / np.sqrt(e))
    out = np.empty((n, v.shape[1]), dtype=np.float32)
    kt = np.ascontiguousarray(k.T)
    for s in range(0, n, block):
        sc = (q[s:s + block] @ kt) * scale
        sc -= sc.max(axis=1, keepdims=True)
        np.exp(sc, out=sc)
        sc /= sc.sum(axis=1, keepdims=True)
        out[s:s + block] = sc @ v
    return out


def multi_head_attention(flat: np.ndarray, params, prefix: str, heads: int, qk_dim: int) -> np.ndarray:
    """Self-attention over the rows of ``flat`` [N, DF]; returns [N, DF]."""
    q = flat @ params[f"{prefix}.query.weight"].T + params[f"{prefix}.query.bias"]
    k = flat @ params[f"{prefix}.key.weight"].T + params[f"{prefix}.key.bias"]
    v = flat @ params[f"{prefix}.value.weight"].T + params[f"{prefix}.value.bias"]
    dv = v.shape[1] // heads
    out = np.empty_like(v)
    for h in range(heads):
        qs = slice(h * qk_dim, (h + 1) * qk_dim)
        vs = slice(h * dv, (h + 1) * dv)
        out[:, vs] = softmax_attention(
            np.ascontiguousarray(q[:, qs]), np.ascontiguousarray(k[:, qs]),
            np.ascontiguousarray(v[:, vs]),
        )
    return out
