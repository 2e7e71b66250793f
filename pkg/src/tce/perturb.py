"""Timing perturbations that disturb turn-taking while keeping each utterance's audio."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .audio_io import SAMPLE_RATE, Waveform
from .seeding import rng_for
from .transcript import ConversationTranscript, UtteranceSegment

log = logging.getLogger(__name__)

MAX_REDRAWS = 20


@dataclass
class Perturbed:
    transcript: ConversationTranscript
    tracks: dict[str, Waveform]


def _collides(a: float, b: float, placed: list[tuple[float, float]]) -> bool:
    return any(a < e and s < b for s, e in placed)


def _nearest_free(want: float, dur: float, total: float, placed) -> float | None:
    """Start closest to ``want`` where ``[start, start + dur]`` fits between placed intervals."""
    edges = sorted(placed)
    gaps, cur = [], 0.0
    for s, e in edges:
        gaps.append((cur, s))
        cur = max(cur, e)
    gaps.append((cur, total))
    best = None
    for lo, hi in gaps:
        if hi - lo + 1e-12 < dur:
            continue
        x = min(max(want, lo), hi - dur)
        if best is None or abs(x - want) < abs(best - want):
            best = x
    return best


def _move_audio(moves, tracks, speakers):
    """Rebuild listed speakers' tracks from (speaker, old_start, old_end, new_start) moves."""
    out = dict(tracks)
    for spk in speakers:
        if spk not in tracks:
            continue
        src = tracks[spk].samples
        dst = np.zeros_like(src)
        for who, a, b, new_a in moves:
            if who != spk:
                continue
            i0, i1 = int(round(a * SAMPLE_RATE)), int(round(b * SAMPLE_RATE))
            j0 = int(round(new_a * SAMPLE_RATE))
            chunk = src[i0:i1][: max(0, dst.size - j0)]
            dst[j0:j0 + chunk.size] = chunk
        out[spk] = Waveform(dst, tracks[spk].sample_rate)
    return out


def random_shift(
    t: ConversationTranscript,
    tracks: dict[str, Waveform] | None,
    tau_s: float,
    speakers=None,
    seed: int = 0,
) -> Perturbed:
    """Shift each utterance of ``speakers`` by an independent draw from U[-tau, tau].

    Shifts are clamped to the conversation. A shift that would make a
    speaker overlap itself is redrawn up to 20 times and then moved to the
    nearest free position. Draws depend only on (seed, speaker), so applying
    the same call to mixture components and to ground truth gives matching
    results.
    """
    if tau_s < 0:
        raise ValueError("tau must be >= 0")
    speakers = sorted(t.speakers if speakers is None else set(speakers) & t.speakers)
    if tau_s == 0:
        return Perturbed(t, dict(tracks) if tracks is not None else {})
    new_utts = [u for u in t.utterances if u.speaker_id not in speakers]
    moves = []
    for spk in speakers:
        rng = rng_for(seed, "shift", spk)
        placed: list[tuple[float, float]] = []
        for u in t.by_speaker(spk):
            dur = u.end_s - u.start_s
            hi = max(0.0, t.duration_s - dur)
            for _ in range(MAX_REDRAWS):
                a = min(max(u.start_s + rng.uniform(-tau_s, tau_s), 0.0), hi)
                if not _collides(a, a + dur, placed):
                    break
            else:
                free = _nearest_free(a, dur, t.duration_s, placed)
                if free is None:
                    log.warning("%s: no free slot for utterance at %.3f; kept in place", spk, u.start_s)
                    free = u.start_s
                a = free
            placed.append((a, a + dur))
            moves.append((spk, u.start_s, u.end_s, a))
            new_utts.append(UtteranceSegment(spk, a, a + dur, u.audio_source))
    t2 = ConversationTranscript(t.conversation_id, t.duration_s, new_utts)
    tr = _move_audio(moves, tracks, speakers) if tracks is not None else {}
    return Perturbed(t2, tr)


def shift_all_left(
    t: ConversationTranscript, tracks: dict[str, Waveform] | None, speakers=None
) -> Perturbed:
    """Remove every gap between a speaker's utterances, packing them from time 0."""
    speakers = sorted(t.speakers if speakers is None else set(speakers) & t.speakers)
    new_utts = [u for u in t.utterances if u.speaker_id not in speakers]
    moves = []
    for spk in speakers:
        cursor = 0.0
        for u in t.by_speaker(spk):
            dur = u.end_s - u.start_s
            moves.append((spk, u.start_s, u.end_s, cursor))
            new_utts.append(UtteranceSegment(spk, cursor, cursor + dur, u.audio_source))
            cursor += dur
    t2 = ConversationTranscript(t.conversation_id, t.duration_s, new_utts)
    tr = _move_audio(moves, tracks, speakers) if tracks is not None else {}
    return Perturbed(t2, tr)
