"""Real-time-factor benchmark across global-module variants."""

from __future__ import annotations

import dataclasses
import logging
import time

import numpy as np
from threadpoolctl import threadpool_limits

from ..audio_io import SAMPLE_RATE, Waveform
from ..corpus import pseudo_embedding
from .config import ModelConfig
from .model import forward
from .weights import WeightStore

log = logging.getLogger(__name__)


def rtf_bench(
    cfg: ModelConfig,
    variants,
    input_len_s: float = 60.0,
    reps: int = 3,
    seed: int = 0,
    threads: int = 1,
) -> dict[str, dict]:
    """Median wall-clock of ``forward`` per variant, divided by the input duration."""
    if reps < 3:
        raise ValueError("reps must be >= 3")
    rng = np.random.default_rng(seed)
    x = Waveform(rng.uniform(-0.5, 0.5, int(round(input_len_s * SAMPLE_RATE))))
    eps0 = pseudo_embedding("bench", seed)
    table = {}
    with threadpool_limits(limits=threads):
        for v in variants:
            vcfg = dataclasses.replace(cfg, global_variant=v)
            weights = WeightStore.random(vcfg, seed)
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                forward(x, eps0, weights, vcfg)
                times.append(time.perf_counter() - t0)
            med = float(np.median(times))
            table[v] = {
                "rtf": med / input_len_s,
                "median_s": med,
                "times_s": times,
                "param_count": weights.param_count,
                "input_len_s": input_len_s,
                "threads": threads,
            }
            log.info("%s: median %.2f s, RTF %.4f", v, med, med / input_len_s)
    return table
