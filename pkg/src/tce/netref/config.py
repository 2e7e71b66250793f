from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..audio_io import StftConfig
from ..errors import UnknownVariant

VARIANTS = (
    "pooling_attention",
    "mean_pool",
    "max_pool",
    "full_lstm",
    "local_attention",
    "full_attention",
)


@dataclass(frozen=True)
class ModelConfig:
    """Extraction network hyperparameters.

    ``window``/``stride`` are in STFT frames (100 frames = 0.4 s at a 4 ms hop).
    ``proj_kernel`` is the width of the projection after each BLSTM; only 1 is
    implemented.
    """

    emb_channels: int = 16       # D
    n_blocks: int = 3            # B
    window: int = 100            # W
    stride: int = 100            # S
    hidden: int = 64             # H
    heads: int = 4               # L
    qk_dim: int = 64             # E, per head
    embed_dim: int = 256         # K
    global_variant: str = "pooling_attention"
    proj_kernel: int = 1
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.global_variant not in VARIANTS:
            raise UnknownVariant(f"{self.global_variant!r}; expected one of {VARIANTS}")
        for name in ("emb_channels", "n_blocks", "window", "stride", "hidden", "heads",
                     "qk_dim", "embed_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.stride > self.window:
            raise ValueError("stride must not exceed window")
        if (self.emb_channels * self.n_freq) % self.heads:
            raise ValueError("D*F must be divisible by the number of heads")
        if self.proj_kernel != 1:
            raise ValueError("only kernel-1 projections are implemented")

    @property
    def n_freq(self) -> int:
        return self.stft.n_freq

    def n_chunks(self, n_frames: int) -> int:
        return -(-n_frames // self.stride)

    def attention_geometry(self) -> tuple[int, int]:
        """(window, stride) seen by the global attention path."""
        if self.global_variant == "full_attention":
            return 1, 1
        return self.window, self.stride

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stft"] = asdict(self.stft)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "stft" in d:
            d["stft"] = StftConfig(**d["stft"])
        return cls(**d)
