"""Clean utterance pools, conversation audio and speaker embeddings."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import SAMPLE_RATE, Waveform, read_wav_cached, write_wav
from .errors import BadLength, MissingTrack, PoolExhausted, WrongDimension, ZeroVector
from .transcript import ConversationTranscript

EMBED_DIM = 256
CROSSFADE_S = 0.010


@dataclass
class Utterance:
    """One clean utterance, either on disk or held in memory."""

    duration_s: float
    path: str | None = None
    audio: np.ndarray | None = None

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("utterance duration must be positive")
        if self.path is None and self.audio is None:
            raise ValueError("utterance needs a path or in-memory audio")

    def load(self) -> np.ndarray:
        if self.audio is not None:
            return self.audio
        return read_wav_cached(self.path).samples


@dataclass
class UtterancePool:
    entries: dict[str, list[Utterance]]
    language_tag: str = "und"

    @property
    def speakers(self) -> list[str]:
        return sorted(self.entries)

    @classmethod
    def from_manifest(cls, path) -> "UtterancePool":
        path = Path(path)
        d = json.loads(path.read_text())
        entries = {}
        for spk, utts in d["speakers"].items():
            items = []
            for u in utts:
                p = Path(u["path"])
                if not p.is_absolute():
                    p = path.parent / p
                items.append(Utterance(float(u["duration_s"]), str(p)))
            entries[spk] = items
        return cls(entries, d.get("language", "und"))

    def to_manifest(self, path) -> None:
        path = Path(path)
        speakers = {}
        for spk in self.speakers:
            speakers[spk] = [
                {"path": _relpath(u.path, path.parent), "duration_s": u.duration_s}
                for u in self.entries[spk]
            ]
        d = {"language": self.language_tag, "speakers": speakers}
        path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def _relpath(p: str | None, base: Path) -> str | None:
    if p is None:
        return None
    try:
        return str(Path(p).resolve().relative_to(base.resolve()))
    except ValueError:
        return str(p)


def fit_length(audio: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Crop (random offset) or loop with a linear crossfade to exactly ``n`` samples."""
    audio = np.asarray(audio, dtype=np.float32)
    if audio.size >= n:
        off = int(rng.integers(0, audio.size - n + 1))
        return audio[off:off + n].copy()
    xf = min(int(round(CROSSFADE_S * SAMPLE_RATE)), audio.size // 2)
    out = audio.copy()
    if xf > 0:
        ramp = np.linspace(0.0, 1.0, xf + 2, dtype=np.float32)[1:-1]
    while out.size < n:
        if xf > 0:
            head = audio[:xf] * ramp + out[-xf:] * ramp[::-1]
            out = np.concatenate([out[:-xf], head, audio[xf:]])
        else:
            out = np.concatenate([out, audio])
    return out[:n]


def draw_samples(
    pool: UtterancePool,
    n_samples: int,
    exclude_speakers=(),
    seed: int = 0,
    speaker: str | None = None,
) -> tuple[str, np.ndarray]:
    """Sample-count variant of :func:`draw_utterance`."""
    if n_samples <= 0:
        raise BadLength(f"requested {n_samples} samples")
    rng = np.random.default_rng(seed)
    if speaker is None:
        excl = set(exclude_speakers)
        eligible = [s for s in pool.speakers if s not in excl and pool.entries[s]]
        if not eligible:
            raise PoolExhausted("no pool speaker left outside the exclusion set")
        speaker = eligible[int(rng.integers(len(eligible)))]
    elif speaker not in pool.entries or not pool.entries[speaker]:
        raise PoolExhausted(f"speaker {speaker!r} has no utterances in the pool")
    utts = pool.entries[speaker]
    utt = utts[int(rng.integers(len(utts)))]
    return speaker, fit_length(utt.load(), n_samples, rng)


def draw_utterance(
    pool: UtterancePool,
    target_len_s: float,
    exclude_speakers=(),
    seed: int = 0,
    speaker: str | None = None,
) -> tuple[str, Waveform]:
    """Draw ``round(target_len_s * 16000)`` samples from a random eligible speaker."""
    if not target_len_s > 0:
        raise BadLength(f"target length {target_len_s} s")
    n = int(round(target_len_s * SAMPLE_RATE))
    spk, audio = draw_samples(pool, n, exclude_speakers, seed, speaker)
    return spk, Waveform(audio)


# -- embeddings --------------------------------------------------------------

@dataclass
class SpeakerEmbedding:
    vector: np.ndarray
    speaker_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float32).reshape(-1)
        if v.size != EMBED_DIM:
            raise WrongDimension(f"expected {EMBED_DIM} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding has non-finite values")
        self.vector = v

    def save(self, path) -> None:
        Path(path).write_bytes(self.vector.astype("<f4").tobytes())


def _normalised(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0 or not np.isfinite(norm):
        raise ZeroVector("embedding has zero norm")
    return (v / norm).astype(np.float32)


def load_embedding(path, speaker_id: str = "") -> SpeakerEmbedding:
    raw = Path(path).read_bytes()
    if len(raw) != 4 * EMBED_DIM:
        raise WrongDimension(f"{path}: {len(raw)} bytes, expected {4 * EMBED_DIM}")
    v = np.frombuffer(raw, dtype="<f4")
    return SpeakerEmbedding(_normalised(v), speaker_id or Path(path).stem)


def pseudo_embedding(speaker_id: str, seed: int = 0) -> SpeakerEmbedding:
    """Deterministic unit vector keyed by (speaker_id, seed).

    Stand-in for a pretrained d-vector model so everything runs offline.
    """
    digest = hashlib.sha256(f"{seed}\x1f{speaker_id}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return SpeakerEmbedding(_normalised(rng.standard_normal(EMBED_DIM)), speaker_id)


# -- conversation audio ------------------------------------------------------

@dataclass
class Conversation:
    """A transcript plus its clean per-speaker tracks.

    ``tracks`` may be omitted when every utterance carries an audio source;
    windows are then rendered lazily from disk.
    """

    transcript: ConversationTranscript
    tracks: dict[str, Waveform] | None = field(default=None)

    def window_tracks(self, start_s: float, length_s: float) -> dict[str, Waveform]:
        n = int(round(length_s * SAMPLE_RATE))
        i0 = int(round(start_s * SAMPLE_RATE))
        spks = sorted(self.transcript.speakers)
        if self.tracks is not None:
            out = {}
            for spk in spks:
                if spk not in self.tracks:
                    raise MissingTrack(f"no track for speaker {spk!r}")
                seg = np.zeros(n, dtype=np.float32)
                src = self.tracks[spk].samples[i0:i0 + n]
                seg[:src.size] = src
                out[spk] = Waveform(seg)
            return out
        return render_tracks(self.transcript.window(start_s, length_s))


def render_tracks(t: ConversationTranscript) -> dict[str, Waveform]:
    """Build full-length per-speaker tracks from utterance audio sources."""
    n = int(round(t.duration_s * SAMPLE_RATE))
    out = {spk: np.zeros(n, dtype=np.float32) for spk in sorted(t.speakers)}
    for u in t.utterances:
        if u.audio_source is None:
            raise MissingTrack(f"utterance of {u.speaker_id} at {u.start_s} has no audio")
        src = read_wav_cached(u.audio_source.path).samples
        a = int(round(u.start_s * SAMPLE_RATE))
        b = min(int(round(u.end_s * SAMPLE_RATE)), n)
        o = int(round(u.audio_source.offset_s * SAMPLE_RATE))
        chunk = src[o:o + (b - a)]
        out[u.speaker_id][a:a + chunk.size] = chunk
    return {spk: Waveform(v) for spk, v in out.items()}


def save_conversation(conv: Conversation, out_dir) -> Path:
    """Write tracks as WAVs and a transcript JSON whose utterances point at them."""
    from .transcript import AudioSource, UtteranceSegment, save_transcript

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tracks = conv.tracks if conv.tracks is not None else render_tracks(conv.transcript)
    names = {}
    for i, spk in enumerate(sorted(tracks)):
        name = f"track_{i:02d}.wav"
        write_wav(tracks[spk], out_dir / name)
        names[spk] = name
    utts = [
        UtteranceSegment(u.speaker_id, u.start_s, u.end_s, AudioSource(names[u.speaker_id], u.start_s))
        for u in conv.transcript.utterances
    ]
    t = ConversationTranscript(conv.transcript.conversation_id, conv.transcript.duration_s, utts)
    path = out_dir / "transcript.json"
    save_transcript(t, path)
    return path


# -- synthetic voices --------------------------------------------------------

def tone_voice(f0: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Harmonic source with vibrato and syllable-rate envelope; a cheap speech proxy."""
    t = np.arange(n) / SAMPLE_RATE
    vib = 1.0 + 0.03 * np.sin(2 * np.pi * rng.uniform(3, 6) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 * vib) / SAMPLE_RATE
    sig = np.zeros(n)
    for k in range(1, 9):
        if k * f0 * 1.05 > SAMPLE_RATE / 2:
            break
        sig += rng.uniform(0.3, 1.0) / k * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    env = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(3, 5) * t + rng.uniform(0, 2 * np.pi))
    sig *= env
    sig += 0.01 * rng.standard_normal(n)
    peak = np.abs(sig).max()
    return (0.3 * sig / peak if peak > 0 else sig).astype(np.float32)


def make_tone_pool(
    n_speakers: int,
    utts_per_speaker: int = 3,
    utt_len_s: tuple[float, float] = (2.0, 6.0),
    seed: int = 0,
    prefix: str = "spk",
    language: str = "synthetic",
    out_dir=None,
) -> UtterancePool:
    """Pool of synthetic voices, each speaker with its own pitch.

    With ``out_dir`` the utterances are written as WAVs and referenced by path.
    """
    rng = np.random.default_rng(seed)
    entries = {}
    for i in range(n_speakers):
        spk = f"{prefix}{i:04d}"
        f0 = rng.uniform(90, 260)
        items = []
        for j in range(utts_per_speaker):
            n = int(round(rng.uniform(*utt_len_s) * SAMPLE_RATE))
            audio = tone_voice(f0, n, rng)
            if out_dir is not None:
                p = Path(out_dir) / spk / f"{j:03d}.wav"
                p.parent.mkdir(parents=True, exist_ok=True)
                write_wav(Waveform(audio), p)
                items.append(Utterance(n / SAMPLE_RATE, str(p)))
            else:
                items.append(Utterance(n / SAMPLE_RATE, audio=audio))
        entries[spk] = items
    return UtterancePool(entries, language)
