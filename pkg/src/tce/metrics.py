"""SNR / SI-SDR, improvements, the negative-SNR loss, incorrect-target ratio, t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateSample, EmptyList, LengthMismatch, ZeroEstimate, ZeroReference

LOSS_FLOOR = 1e-10


def _pair(est, ref) -> tuple[np.ndarray, np.ndarray]:
    est = np.asarray(getattr(est, "samples", est), dtype=np.float64).reshape(-1)
    ref = np.asarray(getattr(ref, "samples", ref), dtype=np.float64).reshape(-1)
    if est.shape != ref.shape:
        raise LengthMismatch(f"estimate has {est.size} samples, reference {ref.size}")
    if not np.any(ref):
        raise ZeroReference("reference signal is all zeros")
    return est, ref


def _ratio_db(num: float, den: float) -> float:
    if den == 0:
        return math.inf
    if num == 0:
        return -math.inf
    return 10.0 * math.log10(num / den)


def snr(est, ref) -> float:
    est, ref = _pair(est, ref)
    return _ratio_db(float(ref @ ref), float(np.sum((est - ref) ** 2)))


def si_sdr(est, ref) -> float:
    """Scale-invariant SDR without mean removal."""
    est, ref = _pair(est, ref)
    if not np.any(est):
        raise ZeroEstimate("estimate is all zeros")
    alpha = float(est @ ref) / float(ref @ ref)
    s_target = alpha * ref
    e = est - s_target
    return _ratio_db(float(s_target @ s_target), float(e @ e))


@dataclass
class EvalResult:
    sample_id: str
    snr_db: float
    si_sdr_db: float
    snri_db: float
    si_sdri_db: float
    input_snr_db: float
    input_si_sdr_db: float


def improvements(mixture, est, ref) -> dict[str, float]:
    return {
        "snri_db": snr(est, ref) - snr(mixture, ref),
        "si_sdri_db": si_sdr(est, ref) - si_sdr(mixture, ref),
    }


def evaluate(sample_id: str, mixture, est, ref) -> EvalResult:
    out_snr, out_si = snr(est, ref), si_sdr(est, ref)
    in_snr, in_si = snr(mixture, ref), si_sdr(mixture, ref)
    return EvalResult(sample_id, out_snr, out_si, out_snr - in_snr, out_si - in_si, in_snr, in_si)


def neg_snr_loss(est, ref) -> float:
    """Negative SNR with the residual energy floored at 1e-10 of the reference energy."""
    est, ref = _pair(est, ref)
    r2 = float(ref @ ref)
    resid = max(float(np.sum((est - ref) ** 2)), LOSS_FLOOR * r2)
    return -10.0 * math.log10(r2 / resid)


def neg_snr_loss_grad(est, ref) -> np.ndarray:
    """Gradient of :func:`neg_snr_loss` w.r.t. ``est`` (zero when the floor is active)."""
    est, ref = _pair(est, ref)
    diff = est - ref
    resid = float(diff @ diff)
    if resid <= LOSS_FLOOR * float(ref @ ref):
        return np.zeros_like(est)
    return (20.0 / math.log(10.0)) * diff / resid


def incorrect_target_ratio(samples) -> float:
    """Fraction of outputs whose SNRi is higher against the wrong conversation.

    Each sample is a mapping with ``output``, ``target_conv`` (s0 + conversation
    partners), ``wrong_conv`` (s0 + interference) and ``mixture``.
    """
    samples = list(samples)
    if not samples:
        raise EmptyList("no samples to score")
    wrong = 0
    for s in samples:
        right_i = snr(s["output"], s["target_conv"]) - snr(s["mixture"], s["target_conv"])
        wrong_i = snr(s["output"], s["wrong_conv"]) - snr(s["mixture"], s["wrong_conv"])
        wrong += wrong_i > right_i
    return wrong / len(samples)


def paired_t_test(a, b) -> dict[str, float]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch("paired samples must be equal-length 1-D sequences")
    if a.size < 2:
        raise DegenerateSample("need at least two pairs")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0 or not np.isfinite(sd):
        raise DegenerateSample("differences have zero variance")
    t = float(d.mean() / (sd / math.sqrt(d.size)))
    p = float(2.0 * stats.t.sf(abs(t), df=d.size - 1))
    return {"t_stat": t, "p_value": p, "df": d.size - 1}


def summarize(values) -> dict[str, float]:
    """Mean/std over finite values; infinite entries are counted, not averaged."""
    v = np.asarray(list(values), dtype=np.float64)
    finite = v[np.isfinite(v)]
    return {
        "mean": float(finite.mean()) if finite.size else math.nan,
        "std": float(finite.std(ddof=1)) if finite.size > 1 else math.nan,
        "n": int(v.size),
        "n_infinite": int(v.size - finite.size),
    }
