"""Timing-preserving speaker replacement and statistics-driven synthetic conversations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import SAMPLE_RATE, Waveform
from .corpus import UtterancePool, draw_samples
from .errors import MissingTrack, PoolExhausted
from .seeding import derive_seed, rng_for
from .transcript import ConversationTranscript, UtteranceSegment


@dataclass
class Histogram:
    """Discrete distribution over bin centres (seconds)."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != self.values.shape or p.size == 0 or np.any(p < 0) or p.sum() <= 0:
            raise ValueError("histogram needs matching non-negative values/probs")
        self.probs = p / p.sum()

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.values[rng.choice(self.values.size, p=self.probs)])

    @classmethod
    def point(cls, value: float) -> "Histogram":
        return cls(np.array([value]), np.array([1.0]))

    @classmethod
    def from_density(cls, lo: float, hi: float, width: float, density) -> "Histogram":
        centres = np.round(np.arange(lo + width / 2, hi, width), 6)
        return cls(centres, density(centres))

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Histogram":
        return cls(np.array(d["values"]), np.array(d["probs"]))


GAP_BOUNDS = (-3.0, 3.0)
TURN_BOUNDS = (0.2, 20.0)


@dataclass
class TurnTakingStats:
    gap_distribution: Histogram
    turn_len_distribution: Histogram
    backchannel_rate: float = 0.0  # events per minute
    backchannel_len_distribution: Histogram = field(default_factory=lambda: Histogram.point(0.4))

    def __post_init__(self):
        g, t = self.gap_distribution.values, self.turn_len_distribution.values
        if g.min() < GAP_BOUNDS[0] or g.max() > GAP_BOUNDS[1]:
            raise ValueError(f"gap support must lie in {GAP_BOUNDS}")
        if t.min() < TURN_BOUNDS[0] or t.max() > TURN_BOUNDS[1]:
            raise ValueError(f"turn-length support must lie in {TURN_BOUNDS}")
        if self.backchannel_rate < 0:
            raise ValueError("backchannel_rate must be >= 0")

    def to_dict(self) -> dict:
        return {
            "gap_distribution": self.gap_distribution.to_dict(),
            "turn_len_distribution": self.turn_len_distribution.to_dict(),
            "backchannel_rate": self.backchannel_rate,
            "backchannel_len_distribution": self.backchannel_len_distribution.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TurnTakingStats":
        return cls(
            Histogram.from_dict(d["gap_distribution"]),
            Histogram.from_dict(d["turn_len_distribution"]),
            float(d.get("backchannel_rate", 0.0)),
            Histogram.from_dict(d["backchannel_len_distribution"])
            if "backchannel_len_distribution" in d else Histogram.point(0.4),
        )

    @classmethod
    def load(cls, path) -> "TurnTakingStats":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def default_stats() -> TurnTakingStats:
    """Stand-in turn-taking statistics; shape only, not measured data.

    Gaps: mode at +0.2 s with roughly a fifth of transitions overlapping.
    Turns: log-normal with a 2 s median. Backchannels: 2 per minute.
    """
    def gap_density(x):
        return np.exp(-0.5 * ((x - 0.2) / 0.35) ** 2) + 0.08 * np.exp(-np.abs(x - 0.2) / 0.9)

    def turn_density(x):
        return np.exp(-0.5 * (np.log(x / 2.0) / 0.6) ** 2) / x

    def bc_density(x):
        return np.exp(-0.5 * ((x - 0.4) / 0.15) ** 2)

    return TurnTakingStats(
        Histogram.from_density(-3.0, 3.0, 0.05, gap_density),
        Histogram.from_density(0.2, 20.0, 0.05, turn_density),
        2.0,
        Histogram.from_density(0.2, 1.0, 0.05, bc_density),
    )


@dataclass
class AugmentPlan:
    p: float
    replacement_pool: UtterancePool
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")


@dataclass
class AugmentResult:
    transcript: ConversationTranscript
    tracks: dict[str, Waveform]
    replaced: dict[str, str]  # original speaker slot -> pool speaker


def _utterance_span(u: UtteranceSegment) -> tuple[int, int]:
    return int(round(u.start_s * SAMPLE_RATE)), int(round(u.end_s * SAMPLE_RATE))


def _fill_track(
    utts: list[UtteranceSegment], n: int, pool: UtterancePool, speaker: str, seed: int
) -> Waveform:
    track = np.zeros(n, dtype=np.float32)
    for k, u in enumerate(utts):
        a, b = _utterance_span(u)
        b = min(b, n)
        if b <= a:
            continue
        _, audio = draw_samples(pool, b - a, seed=derive_seed(seed, k), speaker=speaker)
        track[a:b] = audio
    return Waveform(track)


def augment_conversation(
    t: ConversationTranscript, tracks: dict[str, Waveform], plan: AugmentPlan
) -> AugmentResult:
    """Replace whole speakers with pool voices at identical utterance times.

    Each speaker is replaced independently with probability ``plan.p``. The
    transcript comes back unchanged (speaker slots keep their ids); the
    ``replaced`` map says which pool speaker now voices each replaced slot.
    """
    speakers = sorted(t.speakers)
    missing = [s for s in speakers if s not in tracks]
    if missing:
        raise MissingTrack(f"no track for speakers {missing}")
    out_tracks = dict(tracks)
    replaced: dict[str, str] = {}
    taken = set(speakers)
    for spk in speakers:
        if not rng_for(plan.seed, "replace", spk).random() < plan.p:
            continue
        eligible = [s for s in plan.replacement_pool.speakers if s not in taken]
        if not eligible:
            raise PoolExhausted("not enough distinct pool speakers for replacement")
        new = eligible[int(rng_for(plan.seed, "speaker", spk).integers(len(eligible)))]
        taken.add(new)
        replaced[spk] = new
        out_tracks[spk] = _fill_track(
            t.by_speaker(spk), len(tracks[spk]), plan.replacement_pool, new,
            derive_seed(plan.seed, "audio", spk),
        )
    return AugmentResult(t, out_tracks, replaced)


def cross_lingual_replace(
    t: ConversationTranscript, tracks: dict[str, Waveform], pool: UtterancePool, seed: int = 0
) -> AugmentResult:
    """Replace every speaker with a voice from ``pool`` (usually another language)."""
    return augment_conversation(t, tracks, AugmentPlan(1.0, pool, seed))


def synth_timeline(
    stats: TurnTakingStats,
    speakers: list[str],
    duration_s: float,
    rng: np.random.Generator,
    min_len_s: float = 0.1,
) -> list[UtteranceSegment]:
    """Turn sequence plus backchannels; times rounded to the microsecond."""
    utts: list[UtteranceSegment] = []
    last_end = {s: 0.0 for s in speakers}
    holder = speakers[0]
    start = 0.0
    turns: list[UtteranceSegment] = []
    while start < duration_s - min_len_s:
        length = stats.turn_len_distribution.sample(rng)
        end = round(min(start + length, duration_s), 6)
        if end - start < min_len_s:
            break
        seg = UtteranceSegment(holder, round(start, 6), end)
        turns.append(seg)
        last_end[holder] = end
        gap = stats.gap_distribution.sample(rng)
        others = [s for s in speakers if s != holder]
        nxt = others[0] if len(others) == 1 else others[int(rng.integers(len(others)))]
        # an overlap can pull the next turn back, but never before the
        # current turn's start or into that speaker's own previous turn
        start = max(end + gap, seg.start_s, last_end[nxt])
        holder = nxt
    utts.extend(turns)

    n_bc = rng.poisson(stats.backchannel_rate * duration_s / 60.0) if len(speakers) > 1 else 0
    for _ in range(n_bc):
        at = rng.uniform(0.0, duration_s)
        length = stats.backchannel_len_distribution.sample(rng)
        holding = [u.speaker_id for u in turns if u.start_s <= at < u.end_s]
        cands = [s for s in speakers if s not in holding]
        if not holding or not cands:
            continue
        who = cands[int(rng.integers(len(cands)))]
        a, b = round(at, 6), round(min(at + length, duration_s), 6)
        if b - a < min_len_s:
            continue
        if any(u.speaker_id == who and u.start_s < b and a < u.end_s for u in utts):
            continue
        utts.append(UtteranceSegment(who, a, b))
    return utts


def synth_conversation(
    stats: TurnTakingStats,
    pool: UtterancePool,
    n_speakers: int = 2,
    duration_s: float = 60.0,
    seed: int = 0,
    conversation_id: str | None = None,
) -> AugmentResult:
    """Synthetic conversation voiced by distinct pool speakers.

    Returns an :class:`AugmentResult` whose ``replaced`` map is empty and
    whose speaker ids are the pool speaker ids.
    """
    rng = rng_for(seed, "timeline")
    eligible = pool.speakers
    if len(eligible) < n_speakers:
        raise PoolExhausted(f"pool has {len(eligible)} speakers, need {n_speakers}")
    idx = rng_for(seed, "speakers").choice(len(eligible), size=n_speakers, replace=False)
    speakers = [eligible[i] for i in idx]
    utts = synth_timeline(stats, speakers, duration_s, rng)
    t = ConversationTranscript(conversation_id or f"synth-{seed}", duration_s, utts)
    n = int(round(duration_s * SAMPLE_RATE))
    tracks = {
        spk: _fill_track(t.by_speaker(spk), n, pool, spk, derive_seed(seed, "audio", spk))
        for spk in speakers
    }
    return AugmentResult(t, tracks, {})
