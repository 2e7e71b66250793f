"""Forward pass of the target-conversation extraction network.

STFT -> 3x3 conv -> B blocks (FiLM, local BLSTMs, global pooled attention)
-> 3x3 transposed conv -> iSTFT. Hidden tensors are [D, T, F] float32.
"""

from __future__ import annotations

import numpy as np

from ..audio_io import SpectrogramTF, Waveform, istft, stft
from ..corpus import SpeakerEmbedding
from ..errors import ShapeMismatch, UnknownVariant
from .config import ModelConfig
from .layers import (
    blstm_project,
    conv3x3,
    deconv3x3,
    multi_head_attention,
    positional_encoding,
    prelu,
)
from .weights import WeightStore


def encode(x: Waveform, params: WeightStore, cfg: ModelConfig) -> np.ndarray:
    spec = stft(x, cfg.stft).bins
    ri = np.stack([spec.real, spec.imag]).astype(np.float32)
    return conv3x3(ri, params["encoder.weight"], params["encoder.bias"])


def film(Y: np.ndarray, eps0, params, prefix: str) -> np.ndarray:
    v = np.asarray(getattr(eps0, "vector", eps0), dtype=np.float32)
    gw = params[f"{prefix}.gamma.weight"]
    if v.shape[0] != gw.shape[1] or Y.shape[0] != gw.shape[0]:
        raise ShapeMismatch(f"FiLM expects D={gw.shape[0]}, K={gw.shape[1]}")
    gamma = gw @ v + params[f"{prefix}.gamma.bias"]
    beta = params[f"{prefix}.beta.weight"] @ v + params[f"{prefix}.beta.bias"]
    return gamma[:, None, None] * Y + beta[:, None, None]


def _window_index(T: int, window: int, stride: int) -> np.ndarray:
    """[C, W] frame indices per window; -1 marks zero padding past the end."""
    C = -(-T // stride)
    idx = np.arange(C)[:, None] * stride + np.arange(window)[None, :]
    idx[idx >= T] = -1
    return idx


def _gather_windows(Y: np.ndarray, idx: np.ndarray) -> np.ndarray:
    D, T, F = Y.shape
    padded = np.concatenate([Y, np.zeros((D, 1, F), dtype=Y.dtype)], axis=1)
    return padded[:, idx, :]  # [D, C, W, F]; index -1 hits the zero frame


def _scatter_windows(Zw: np.ndarray, idx: np.ndarray, T: int) -> np.ndarray:
    D, C, W, F = Zw.shape
    valid = idx >= 0
    if C * W == T and np.array_equal(idx.reshape(-1), np.arange(T)):
        return Zw.reshape(D, T, F)
    out = np.zeros((D, T, F), dtype=np.float32)
    counts = np.zeros(T, dtype=np.float32)
    flat_idx = idx[valid]
    np.add.at(out, (slice(None), flat_idx), Zw[:, valid])
    np.add.at(counts, flat_idx, 1.0)
    return out / counts[None, :, None]


def local_module(Y: np.ndarray, params, prefix: str, cfg: ModelConfig) -> np.ndarray:
    """Frequency BLSTM then time BLSTM inside each window, each with a residual."""
    D, T, F = Y.shape
    if D != cfg.emb_channels or F != cfg.n_freq:
        raise ShapeMismatch(f"local module got {Y.shape}, expected D={cfg.emb_channels}, F={cfg.n_freq}")
    H = cfg.hidden
    idx = _window_index(T, cfg.window, cfg.stride)
    C, W = idx.shape
    S, W_ = cfg.stride, cfg.window
    if S == W_:
        Tp = C * W
        Zw = np.zeros((D, Tp, F), dtype=np.float32)
        Zw[:, :T] = Y
        Zw = Zw.reshape(D, C, W, F)
    else:
        Zw = _gather_windows(Y, idx)

    # frequency axis: sequences of length F, one per frame
    xf = np.ascontiguousarray(Zw.transpose(3, 0, 1, 2)).reshape(F, D, C * W)
    yf = blstm_project(xf, params, f"{prefix}.freq_lstm", f"{prefix}.freq_proj", H)
    Zw = Zw + yf.reshape(F, D, C, W).transpose(1, 2, 3, 0)

    # time axis: sequences of length W, one per (window, frequency)
    xt = np.ascontiguousarray(Zw.transpose(2, 0, 1, 3)).reshape(W, D, C * F)
    yt = blstm_project(xt, params, f"{prefix}.time_lstm", f"{prefix}.time_proj", H)
    Zw = Zw + yt.reshape(W, D, C, F).transpose(1, 2, 0, 3)

    if S == W_:
        return np.ascontiguousarray(Zw.reshape(D, C * W, F)[:, :T])
    return _scatter_windows(Zw, idx, T)


def pool_frames(Y: np.ndarray, window: int, stride: int, op: str = "mean") -> np.ndarray:
    """[D, T, F] -> [D, C, F], pooling the valid frames of each window."""
    D, T, F = Y.shape
    if window == 1 and stride == 1:
        return Y
    idx = _window_index(T, window, stride)
    valid = idx >= 0
    win = _gather_windows(Y, idx)  # [D, C, W, F]
    if op == "mean":
        return win.sum(axis=2) / valid.sum(axis=1)[None, :, None]
    if op == "max":
        masked = np.where(valid[None, :, :, None], win, -np.inf)
        return masked.max(axis=2).astype(np.float32)
    raise ValueError(f"unknown pooling op {op!r}")


def upsample_chunks(G: np.ndarray, T: int, stride: int) -> np.ndarray:
    """Piecewise-constant broadcast of chunk c over frames [c*S, (c+1)*S)."""
    C = G.shape[1]
    which = np.minimum(np.arange(T) // stride, C - 1)
    return G[:, which, :]


def _ffn(Z: np.ndarray, params, prefix: str) -> np.ndarray:
    """D -> D linear + PReLU applied at every (chunk, frequency) position."""
    D = Z.shape[0]
    w = params[f"{prefix}.ffn.weight"]
    out = (w @ Z.reshape(D, -1)).reshape(Z.shape) + params[f"{prefix}.ffn.bias"][:, None, None]
    return prelu(out, params[f"{prefix}.ffn.prelu"])


def pooled_attention(Zg: np.ndarray, params, prefix: str, cfg: ModelConfig) -> np.ndarray:
    """Positional encoding + multi-head self-attention across chunks. [D, C, F] -> [D, C, F]."""
    D, C, F = Zg.shape
    flat = np.ascontiguousarray(Zg.transpose(1, 0, 2)).reshape(C, D * F)
    flat = flat + positional_encoding(C, D * F)
    att = multi_head_attention(flat, params, prefix, cfg.heads, cfg.qk_dim)
    return np.ascontiguousarray(att.reshape(C, D, F).transpose(1, 0, 2))


def global_module(Y: np.ndarray, params, prefix: str, cfg: ModelConfig, variant: str | None = None) -> np.ndarray:
    variant = variant or cfg.global_variant
    D, T, F = Y.shape
    if D != cfg.emb_channels or F != cfg.n_freq:
        raise ShapeMismatch(f"global module got {Y.shape}")
    if variant in ("pooling_attention", "full_attention"):
        W, S = (1, 1) if variant == "full_attention" else (cfg.window, cfg.stride)
        Zg = pool_frames(Y, W, S, "mean")
        G = _ffn(pooled_attention(Zg, params, prefix, cfg), params, prefix)
        return Y + upsample_chunks(G, T, S)
    if variant in ("mean_pool", "max_pool"):
        Zg = pool_frames(Y, cfg.window, cfg.stride, variant.split("_")[0])
        G = _ffn(Zg, params, prefix)
        return Y + upsample_chunks(G, T, cfg.stride)
    if variant == "local_attention":
        idx = _window_index(T, cfg.window, cfg.window)
        C, W = idx.shape
        Zw = _gather_windows(Y, idx)  # [D, C, W, F]
        out = np.empty_like(Zw)
        for c in range(C):
            out[:, c] = pooled_attention(Zw[:, c], params, prefix, cfg)
        G = _ffn(out.reshape(D, C * W, F), params, prefix)
        return Y + G[:, :T]
    if variant == "full_lstm":
        x = np.ascontiguousarray(Y.transpose(1, 0, 2))  # [T, D, F]: sequence over all frames
        y = blstm_project(x, params, f"{prefix}.lstm", f"{prefix}.proj", cfg.hidden)
        return Y + y.transpose(1, 0, 2)
    raise UnknownVariant(variant)


def decode(Y: np.ndarray, params, cfg: ModelConfig, out_len: int) -> Waveform:
    ri = deconv3x3(Y, params["decoder.weight"], params["decoder.bias"])
    bins = (ri[0] + 1j * ri[1]).astype(np.complex64)
    spec = SpectrogramTF(bins, cfg.stft.hop_s, cfg.stft.window_len_s, cfg.stft)
    return istft(spec, out_len)


def forward(x: Waveform, eps0: SpeakerEmbedding, weights: WeightStore, cfg: ModelConfig) -> Waveform:
    """y = G(x | eps0; theta): the extracted target conversation, same length as ``x``."""
    weights.validate(cfg)
    Y = encode(x, weights, cfg)
    for b in range(cfg.n_blocks):
        p = f"blocks.{b}"
        if b > 0:
            Y = film(Y, eps0, weights, f"{p}.film")
        Y = local_module(Y, weights, f"{p}.local", cfg)
        Y = global_module(Y, weights, f"{p}.global", cfg)
    return decode(Y, weights, cfg, len(x))


class Extractor:
    """Convenience wrapper binding a config and its weights."""

    def __init__(self, cfg: ModelConfig | None = None, weights: WeightStore | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        self.weights = weights if weights is not None else WeightStore.random(self.cfg, seed)
        self.weights.validate(self.cfg)

    def __call__(self, x: Waveform, eps0: SpeakerEmbedding) -> Waveform:
        return forward(x, eps0, self.weights, self.cfg)
