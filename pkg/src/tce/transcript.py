"""Who-spoke-when transcripts, overlap statistics and segment selection."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BadWindow, InvariantViolation, ParseError

_EPS = 1e-9


@dataclass(frozen=True)
class AudioSource:
    path: str
    offset_s: float = 0.0


@dataclass(frozen=True)
class UtteranceSegment:
    speaker_id: str
    start_s: float
    end_s: float
    audio_source: AudioSource | None = None

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class ConversationTranscript:
    conversation_id: str
    duration_s: float
    utterances: list[UtteranceSegment] = field(default_factory=list)

    def __post_init__(self):
        self.utterances = sorted(self.utterances, key=lambda u: (u.start_s, u.end_s, u.speaker_id))
        self.validate()

    @property
    def speakers(self) -> set[str]:
        return {u.speaker_id for u in self.utterances}

    def by_speaker(self, speaker: str) -> list[UtteranceSegment]:
        return [u for u in self.utterances if u.speaker_id == speaker]

    def validate(self) -> None:
        for u in self.utterances:
            if not (u.end_s > u.start_s):
                raise InvariantViolation(
                    f"{self.conversation_id}: utterance end {u.end_s} <= start {u.start_s}"
                )
            if u.start_s < -_EPS or u.end_s > self.duration_s + _EPS:
                raise InvariantViolation(
                    f"{self.conversation_id}: utterance [{u.start_s}, {u.end_s}] outside "
                    f"[0, {self.duration_s}]"
                )
        for spk in self.speakers:
            utts = self.by_speaker(spk)
            for a, b in zip(utts, utts[1:]):
                if b.start_s < a.end_s - _EPS:
                    raise InvariantViolation(
                        f"{self.conversation_id}: speaker {spk} overlaps itself at {b.start_s}"
                    )

    def window(self, start_s: float, length_s: float, conversation_id: str | None = None):
        """Cut ``[start_s, start_s + length_s)`` into a new transcript starting at 0.

        Utterances straddling the edges are clipped; audio offsets are moved
        so they still point at the right place in the source file.
        """
        end = start_s + length_s
        out = []
        for u in self.utterances:
            a, b = max(u.start_s, start_s), min(u.end_s, end)
            if b - a <= _EPS:
                continue
            src = u.audio_source
            if src is not None:
                src = AudioSource(src.path, src.offset_s + (a - u.start_s))
            out.append(UtteranceSegment(u.speaker_id, a - start_s, b - start_s, src))
        return ConversationTranscript(
            conversation_id or f"{self.conversation_id}@{start_s:g}", length_s, out
        )

    def to_dict(self, base_dir: Path | None = None) -> dict:
        """Plain-dict form; absolute audio paths are made relative to ``base_dir`` when given."""
        utts = []
        for u in self.utterances:
            d = {"speaker": u.speaker_id, "start_s": u.start_s, "end_s": u.end_s}
            if u.audio_source is not None:
                path = u.audio_source.path
                if base_dir is not None and Path(path).is_absolute():
                    path = os.path.relpath(Path(path).resolve(), Path(base_dir).resolve())
                d["audio"] = {"path": path, "offset_s": u.audio_source.offset_s}
            utts.append(d)
        return {
            "conversation_id": self.conversation_id,
            "duration_s": self.duration_s,
            "utterances": utts,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ConversationTranscript":
        try:
            utts = []
            for u in d["utterances"]:
                src = None
                if u.get("audio"):
                    path = u["audio"]["path"]
                    if base_dir is not None and not Path(path).is_absolute():
                        path = str(base_dir / path)
                    src = AudioSource(path, float(u["audio"].get("offset_s", 0.0)))
                utts.append(
                    UtteranceSegment(str(u["speaker"]), float(u["start_s"]), float(u["end_s"]), src)
                )
            return cls(str(d["conversation_id"]), float(d["duration_s"]), utts)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed transcript: {exc!r}") from exc


def parse_rttm(text: str, duration_s: float | None = None) -> ConversationTranscript:
    """Parse RTTM ``SPEAKER`` lines (onset + duration) into a transcript.

    ``duration_s`` defaults to the latest utterance end.
    """
    utts = []
    conv = None
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        if fields[0] != "SPEAKER":
            continue
        if len(fields) < 8:
            raise ParseError(f"line {lineno}: expected >= 8 fields, got {len(fields)}")
        try:
            onset, dur = float(fields[3]), float(fields[4])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: bad onset/duration") from exc
        conv = conv or fields[1]
        utts.append(UtteranceSegment(fields[7], onset, onset + dur))
    if duration_s is None:
        duration_s = max((u.end_s for u in utts), default=0.0)
    return ConversationTranscript(conv or "rttm", duration_s, utts)


def load_transcript(path, format: str | None = None) -> ConversationTranscript:
    path = Path(path)
    fmt = format or ("rttm" if path.suffix.lower() == ".rttm" else "json")
    text = path.read_text()
    if fmt == "rttm":
        return parse_rttm(text)
    if fmt != "json":
        raise ParseError(f"unknown transcript format {fmt!r}")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return ConversationTranscript.from_dict(d, base_dir=path.parent)


def save_transcript(t: ConversationTranscript, path) -> None:
    path = Path(path)
    path.write_text(json.dumps(t.to_dict(base_dir=path.parent), indent=2, sort_keys=True) + "\n")


# -- interval arithmetic ----------------------------------------------------

def _coverage(intervals_by_speaker: dict[str, list[tuple[float, float]]]):
    """Sweep over boundaries; yield (seg_len, n_active_speakers) pieces."""
    events = []
    for ivs in intervals_by_speaker.values():
        for a, b in ivs:
            if b > a:
                events.append((a, 1))
                events.append((b, -1))
    events.sort()
    active = 0
    prev = None
    for x, delta in events:
        if prev is not None and x > prev and active > 0:
            yield x - prev, active
        active += delta
        prev = x


def _intervals(t: ConversationTranscript, lo: float = -np.inf, hi: float = np.inf):
    out: dict[str, list[tuple[float, float]]] = {}
    for u in t.utterances:
        a, b = max(u.start_s, lo), min(u.end_s, hi)
        if b > a:
            out.setdefault(u.speaker_id, []).append((a, b))
    return out


def overlap_ratio(t: ConversationTranscript) -> float:
    union = overlap = 0.0
    for seg, n in _coverage(_intervals(t)):
        union += seg
        if n >= 2:
            overlap += seg
    return overlap / union if union > 0 else 0.0


@dataclass
class SpeechActivity:
    total_speech_fraction: float
    active_speakers: set[str]
    per_speaker_duration: dict[str, float]


def speech_activity(t: ConversationTranscript, window: tuple[float, float]) -> SpeechActivity:
    a, b = window
    if not (0 <= a < b <= t.duration_s + _EPS):
        raise BadWindow(f"window {window} not inside [0, {t.duration_s}]")
    ivs = _intervals(t, a, b)
    union = sum(seg for seg, _ in _coverage(ivs))
    per = {spk: sum(e - s for s, e in v) for spk, v in ivs.items()}
    return SpeechActivity(union / (b - a), {s for s, d in per.items() if d > 0}, per)


def window_qualifies(t, start_s, seg_len_s=60.0, min_speech_frac=0.6, min_active=2) -> bool:
    act = speech_activity(t, (start_s, start_s + seg_len_s))
    return act.total_speech_fraction >= min_speech_frac and len(act.active_speakers) >= min_active


def select_segments(
    t: ConversationTranscript,
    seg_len_s: float = 60.0,
    min_speech_frac: float = 0.6,
    min_active: int = 2,
    seed: int = 0,
    count: int | None = None,
) -> list[float]:
    """Qualifying window starts on a 1 s grid, in seeded random order.

    Sampling is without replacement; ``count`` truncates the permutation.
    """
    if t.duration_s + _EPS < seg_len_s:
        return []
    n_cand = int(np.floor(t.duration_s - seg_len_s + _EPS)) + 1
    ok = [
        float(s) for s in range(n_cand)
        if window_qualifies(t, float(s), seg_len_s, min_speech_frac, min_active)
    ]
    order = np.random.default_rng(seed).permutation(len(ok))
    picked = [ok[i] for i in order]
    return picked if count is None else picked[:count]


def relabel(t: ConversationTranscript, mapping: dict[str, str]) -> ConversationTranscript:
    utts = [replace(u, speaker_id=mapping.get(u.speaker_id, u.speaker_id)) for u in t.utterances]
    return ConversationTranscript(t.conversation_id, t.duration_s, utts)
