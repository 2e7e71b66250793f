from .config import VARIANTS, ModelConfig
from .model import (
    Extractor,
    encode,
    film,
    forward,
    global_module,
    local_module,
    pool_frames,
)
from .weights import WeightStore, expected_shapes, param_count

__all__ = [
    "VARIANTS",
    "Extractor",
    "ModelConfig",
    "WeightStore",
    "encode",
    "expected_shapes",
    "film",
    "forward",
    "global_module",
    "local_module",
    "param_count",
    "pool_frames",
]
