"""Named float32 tensors and the ``.tcew`` container.

Layout: b"TCEW", u32 version, u32 count, then per tensor u32 name length,
UTF-8 name, u32 rank, rank x u64 dims, float32 little-endian data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import WeightMismatch
from .config import ModelConfig

MAGIC = b"TCEW"
VERSION = 1


def _lstm_shapes(prefix: str, n_in: int, hidden: int) -> dict[str, tuple]:
    out = {}
    for d in ("fwd", "bwd"):
        out[f"{prefix}.{d}.w_ih"] = (4 * hidden, n_in)
        out[f"{prefix}.{d}.w_hh"] = (4 * hidden, hidden)
        out[f"{prefix}.{d}.bias"] = (4 * hidden,)
    return out


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Every tensor the forward pass reads, in canonical order."""
    D, H, K, F = cfg.emb_channels, cfg.hidden, cfg.embed_dim, cfg.n_freq
    DF = D * F
    s: dict[str, tuple] = {
        "encoder.weight": (D, 2, 3, 3),
        "encoder.bias": (D,),
    }
    for b in range(cfg.n_blocks):
        p = f"blocks.{b}"
        if b > 0:
            s[f"{p}.film.gamma.weight"] = (D, K)
            s[f"{p}.film.gamma.bias"] = (D,)
            s[f"{p}.film.beta.weight"] = (D, K)
            s[f"{p}.film.beta.bias"] = (D,)
        s.update(_lstm_shapes(f"{p}.local.freq_lstm", D, H))
        s[f"{p}.local.freq_proj.weight"] = (D, 2 * H)
        s[f"{p}.local.freq_proj.bias"] = (D,)
        s.update(_lstm_shapes(f"{p}.local.time_lstm", D, H))
        s[f"{p}.local.time_proj.weight"] = (D, 2 * H)
        s[f"{p}.local.time_proj.bias"] = (D,)
        g = f"{p}.global"
        v = cfg.global_variant
        if v == "full_lstm":
            s.update(_lstm_shapes(f"{g}.lstm", D, H))
            s[f"{g}.proj.weight"] = (D, 2 * H)
            s[f"{g}.proj.bias"] = (D,)
            continue
        if v in ("pooling_attention", "local_attention", "full_attention"):
            LE = cfg.heads * cfg.qk_dim
            s[f"{g}.query.weight"] = (LE, DF)
            s[f"{g}.query.bias"] = (LE,)
            s[f"{g}.key.weight"] = (LE, DF)
            s[f"{g}.key.bias"] = (LE,)
            s[f"{g}.value.weight"] = (DF, DF)
            s[f"{g}.value.bias"] = (DF,)
        s[f"{g}.ffn.weight"] = (D, D)
        s[f"{g}.ffn.bias"] = (D,)
        s[f"{g}.ffn.prelu"] = (1,)
    s["decoder.weight"] = (D, 2, 3, 3)
    s["decoder.bias"] = (2,)
    return s


def param_count(cfg: ModelConfig) -> int:
    return int(sum(np.prod(shape) for shape in expected_shapes(cfg).values()))


def _fan_in(name: str, shape: tuple, cfg: ModelConfig) -> int:
    if name.startswith("encoder"):
        return 2 * 9
    if name.startswith("decoder"):
        return cfg.emb_channels * 9
    if "_lstm" in name or ".lstm." in name:
        return cfg.hidden
    if name.endswith(".bias"):
        return None
    return shape[1]


class WeightStore:
    def __init__(self, tensors: dict[str, np.ndarray] | None = None):
        self.tensors: dict[str, np.ndarray] = {}
        for k, v in (tensors or {}).items():
            self.tensors[k] = np.ascontiguousarray(v, dtype=np.float32)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightMismatch(f"missing tensor {name!r}") from None

    def __setitem__(self, name: str, value) -> None:
        self.tensors[name] = np.ascontiguousarray(value, dtype=np.float32)

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def param_count(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def validate(self, cfg: ModelConfig, strict: bool = True) -> None:
        want = expected_shapes(cfg)
        for name, shape in want.items():
            if name not in self.tensors:
                raise WeightMismatch(f"missing tensor {name!r}")
            if self.tensors[name].shape != tuple(shape):
                raise WeightMismatch(
                    f"{name}: shape {self.tensors[name].shape}, expected {tuple(shape)}"
                )
        if strict:
            extra = sorted(set(self.tensors) - set(want))
            if extra:
                raise WeightMismatch(f"unused tensors: {extra[:5]}{'...' if len(extra) > 5 else ''}")

    @classmethod
    def random(cls, cfg: ModelConfig, seed: int = 0) -> "WeightStore":
        """Uniform(+-1/sqrt(fan_in)) init; PReLU slopes start at 0.25."""
        rng = np.random.default_rng(seed)
        shapes = expected_shapes(cfg)
        ws = cls()
        last_fan = 1
        for name, shape in shapes.items():
            if name.endswith(".prelu"):
                ws[name] = np.full(shape, 0.25)
                continue
            fan = _fan_in(name, shape, cfg)
            if fan is None:
                fan = last_fan
            else:
                last_fan = fan
            bound = 1.0 / np.sqrt(fan)
            ws[name] = rng.uniform(-bound, bound, size=shape)
        return ws

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<II", VERSION, len(self.tensors)))
            for name, arr in self.tensors.items():
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)) + raw)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
                fh.write(arr.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "WeightStore":
        data = Path(path).read_bytes()
        if data[:4] != MAGIC:
            raise WeightMismatch(f"{path}: not a TCEW file")
        version, count = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise WeightMismatch(f"{path}: unsupported version {version}")
        pos = 12
        ws = cls()
        try:
            for _ in range(count):
                (n,) = struct.unpack_from("<I", data, pos)
                pos += 4
                name = data[pos:pos + n].decode("utf-8")
                pos += n
                (rank,) = struct.unpack_from("<I", data, pos)
                pos += 4
                dims = struct.unpack_from(f"<{rank}Q", data, pos)
                pos += 8 * rank
                size = int(np.prod(dims)) if rank else 1
                arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims)
                pos += 4 * size
                ws[name] = arr
        except (struct.error, ValueError) as exc:
            raise WeightMismatch(f"{path}: truncated or corrupt ({exc})") from exc
        return ws
