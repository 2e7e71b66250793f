"""WAV I/O and the STFT/iSTFT front end.

All pipeline audio is mono float32 at 16 kHz. The STFT uses a 200-sample
(12.5 ms) sqrt-Hann window, a 64-sample (4 ms) hop and a 256-point FFT with
centre padding, so frame ``t`` is centred on sample ``t * hop``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    EmptyInput,
    IncompatibleConfig,
    NotWav,
    UnsupportedEncoding,
    WrongSampleRate,
)

SAMPLE_RATE = 16000

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size < 1:
            raise EmptyInput("waveform has no samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    @classmethod
    def zeros(cls, n: int, sample_rate: int = SAMPLE_RATE) -> "Waveform":
        return cls(np.zeros(n, dtype=np.float32), sample_rate)


def read_wav(path, pipeline: bool = True) -> Waveform:
    """Read a PCM16 or float32 WAV file and return its first channel.

    With ``pipeline=True`` (the default) anything that is not 16 kHz is
    rejected with :class:`WrongSampleRate`.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotWav(f"{path}: missing RIFF/WAVE header")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise NotWav(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == _FMT_EXTENSIBLE and size >= 40:
                sub = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise NotWav(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _, _, bits = fmt
    if tag == _FMT_PCM and bits == 16:
        arr = np.frombuffer(payload, dtype="<i2").astype(np.float32) / 32768.0
    elif tag == _FMT_FLOAT and bits == 32:
        arr = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    else:
        raise UnsupportedEncoding(f"{path}: format tag {tag} with {bits} bits")
    if pipeline and rate != SAMPLE_RATE:
        raise WrongSampleRate(f"{path}: {rate} Hz, expected {SAMPLE_RATE} Hz")
    n_frames = arr.size // channels
    arr = arr[: n_frames * channels].reshape(n_frames, channels)[:, 0]
    return Waveform(np.ascontiguousarray(arr), rate)


def write_wav(w: Waveform, path) -> None:
    """Write ``w`` as a 32-bit float WAV with a canonical 44-byte header."""
    data = np.asarray(w.samples, dtype="<f4").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, _FMT_FLOAT, 1, w.sample_rate, w.sample_rate * 4, 4, 32
    )
    header += b"data" + struct.pack("<I", len(data))
    # OSError (missing directory etc.) is the IoError of the contract.
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


@lru_cache(maxsize=32)
def _read_cached(path: str, mtime: float) -> Waveform:
    return read_wav(path)


def read_wav_cached(path) -> Waveform:
    """``read_wav`` memoised on (path, mtime); callers must not mutate the result."""
    path = os.fspath(path)
    return _read_cached(path, os.path.getmtime(path))


@dataclass(frozen=True)
class StftConfig:
    window_len_s: float = 0.0125
    hop_s: float = 0.004
    nfft: int = 256
    sample_rate: int = SAMPLE_RATE

    @property
    def win(self) -> int:
        return int(round(self.window_len_s * self.sample_rate))

    @property
    def hop(self) -> int:
        return int(round(self.hop_s * self.sample_rate))

    @property
    def n_freq(self) -> int:
        return self.nfft // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        pad = self.win // 2
        return (n_samples + 2 * pad - self.win) // self.hop + 1

    def window(self) -> np.ndarray:
        """Periodic sqrt-Hann of length ``win``, centred in an ``nfft`` frame."""
        n = np.arange(self.win)
        hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.win)
        w = np.zeros(self.nfft)
        off = (self.nfft - self.win) // 2
        w[off:off + self.win] = np.sqrt(hann)
        return w


@dataclass
class SpectrogramTF:
    bins: np.ndarray  # complex64 [T, F]
    frame_hop_s: float
    window_len_s: float
    config: StftConfig = field(default_factory=StftConfig)

    @property
    def n_frames(self) -> int:
        return self.bins.shape[0]

    @property
    def n_freq(self) -> int:
        return self.bins.shape[1]


def _frame_view(x: np.ndarray, nfft: int, hop: int, n_frames: int) -> np.ndarray:
    return np.lib.stride_tricks.as_strided(
        x, shape=(n_frames, nfft), strides=(x.strides[0] * hop, x.strides[0])
    )


def stft(w: Waveform, cfg: StftConfig | None = None) -> SpectrogramTF:
    cfg = cfg or StftConfig()
    if cfg.win > cfg.nfft:
        raise IncompatibleConfig(f"window {cfg.win} longer than nfft {cfg.nfft}")
    x = np.asarray(w.samples if isinstance(w, Waveform) else w, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("cannot transform an empty signal")
    T = cfg.n_frames(x.size)
    lead = _lead(cfg)
    padded = np.zeros(lead + x.size + cfg.nfft)
    padded[lead:lead + x.size] = x
    frames = _frame_view(padded, cfg.nfft, cfg.hop, T) * cfg.window()
    bins = np.fft.rfft(frames, n=cfg.nfft, axis=1).astype(np.complex64)
    return SpectrogramTF(bins, cfg.hop_s, cfg.window_len_s, cfg)


def _lead(cfg: StftConfig) -> int:
    # zeros ahead of sample 0 so that nfft-frame t starts at t * hop
    return cfg.win // 2 + (cfg.nfft - cfg.win) // 2


def overlap_norm(cfg: StftConfig, n_frames: int) -> np.ndarray:
    """Sum of squared synthesis windows at every padded-buffer position."""
    wsq = cfg.window() ** 2
    norm = np.zeros((n_frames - 1) * cfg.hop + cfg.nfft)
    for t in range(-(-cfg.nfft // cfg.hop)):
        idx = np.arange(t, n_frames, -(-cfg.nfft // cfg.hop))
        pos = (idx[:, None] * cfg.hop + np.arange(cfg.nfft)).reshape(-1)
        norm[pos] += np.tile(wsq, idx.size)
    return norm


def istft(s: SpectrogramTF, out_len: int) -> Waveform:
    """Weighted overlap-add inverse with squared-window normalisation."""
    cfg = s.config
    if cfg.win > cfg.nfft or s.bins.shape[1] != cfg.n_freq:
        raise IncompatibleConfig(
            f"spectrogram has {s.bins.shape[1]} bins, config expects {cfg.n_freq}"
        )
    T = s.bins.shape[0]
    frames = np.fft.irfft(s.bins.astype(np.complex128), n=cfg.nfft, axis=1) * cfg.window()
    y = np.zeros((T - 1) * cfg.hop + cfg.nfft)
    # frames k, k+step, ... never overlap, so each group is one fancy-index add
    step = -(-cfg.nfft // cfg.hop)
    for k in range(step):
        idx = np.arange(k, T, step)
        pos = (idx[:, None] * cfg.hop + np.arange(cfg.nfft)).reshape(-1)
        y[pos] += frames[idx].reshape(-1)
    norm = overlap_norm(cfg, T)
    lead = _lead(cfg)
    out = np.zeros(out_len)
    n = max(0, min(out_len, y.size - lead))
    seg_y = y[lead:lead + n]
    seg_n = norm[lead:lead + n]
    good = seg_n > 1e-10
    out[:n][good] = seg_y[good] / seg_n[good]
    return Waveform(out.astype(np.float32), cfg.sample_rate)


def tf_energy(s: SpectrogramTF) -> float:
    """Signal energy estimated from the bins, compensated for window overlap.

    Uses one-sided Parseval weighting and divides by the mean squared-window
    overlap, so for broadband signals it tracks ``sum(x**2)``.
    """
    cfg = s.config
    mag = np.abs(s.bins.astype(np.complex128)) ** 2
    weights = np.full(cfg.n_freq, 2.0)
    weights[0] = 1.0
    if cfg.nfft % 2 == 0:
        weights[-1] = 1.0
    frame_energy = (mag * weights).sum() / cfg.nfft
    mean_overlap = (cfg.window() ** 2).sum() / cfg.hop
    return float(frame_energy / mean_overlap)
