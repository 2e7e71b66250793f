"""Mixture assembly: target conversation + interfering conversation + noise."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import SAMPLE_RATE, Waveform, read_wav, write_wav
from .augment import AugmentPlan, augment_conversation
from .corpus import (
    Conversation,
    SpeakerEmbedding,
    draw_samples,
    load_embedding,
    pseudo_embedding,
    render_tracks,
)
from .errors import (
    InsufficientEnrollment,
    LengthMismatch,
    NoActiveSpeaker,
    NoDisjointConversation,
    SilentGroup,
    SpeakerLeak,
    TCEError,
)
from .seeding import derive_seed, rng_for
from .transcript import ConversationTranscript, save_transcript, select_segments, speech_activity

log = logging.getLogger(__name__)

CLIP_HEADROOM = 0.99


@dataclass
class MixtureSample:
    mixture: Waveform
    reference: Waveform
    others: dict[str, Waveform]
    interference: dict[str, Waveform]
    noise: Waveform
    target: Waveform
    embedding: SpeakerEmbedding | None = None
    metadata: dict = field(default_factory=dict)

    def components(self) -> list[Waveform]:
        return [self.reference, *self.others.values(), *self.interference.values(), self.noise]

    def check(self, atol: float = 1e-6) -> None:
        """Assert the decomposition invariants; raises ``AssertionError``."""
        n = len(self.mixture)
        for c in self.components() + [self.target]:
            assert len(c) == n and c.sample_rate == self.mixture.sample_rate
        total = np.sum([c.samples.astype(np.float64) for c in self.components()], axis=0)
        assert np.max(np.abs(self.mixture.samples - total)) < atol
        y = self.reference.samples.astype(np.float64) + sum(
            (o.samples.astype(np.float64) for o in self.others.values()), np.zeros(n)
        )
        assert np.max(np.abs(self.target.samples - y)) < atol
        assert np.any(self.reference.samples != 0), "reference speaker is silent"


def active_power(x: np.ndarray) -> float:
    """Mean square over the samples where the signal is non-zero."""
    x = np.asarray(x, dtype=np.float64)
    mask = x != 0
    return float(np.mean(x[mask] ** 2)) if mask.any() else 0.0


def group_snr_db(a: np.ndarray, b: np.ndarray) -> float:
    return 10.0 * np.log10(active_power(a) / active_power(b))


def _group_sum(tracks: dict[str, Waveform], n: int) -> np.ndarray:
    out = np.zeros(n)
    for w in tracks.values():
        out += w.samples
    return out


def _fit_noise(noise: Waveform, n: int, rng: np.random.Generator) -> np.ndarray:
    x = noise.samples
    if x.size >= n:
        off = int(rng.integers(0, x.size - n + 1))
        return x[off:off + n].astype(np.float64)
    return np.tile(x, -(-n // x.size))[:n].astype(np.float64)


def mix(
    target_tracks: dict[str, Waveform],
    reference: str,
    interference_tracks: dict[str, Waveform],
    noise: Waveform | None = None,
    target_interference_snr_db: float = 0.0,
    target_noise_snr_db: float | None = None,
    seed: int = 0,
    embedding: SpeakerEmbedding | None = None,
    metadata: dict | None = None,
) -> MixtureSample:
    """Scale interference (then noise) to the requested SNRs and sum.

    Powers are measured over each group's non-zero support so silence does
    not bias the level. If the mixture would clip, every component is
    scaled by the same factor, which leaves all SNRs unchanged.
    """
    if reference not in target_tracks:
        raise NoActiveSpeaker(f"reference {reference!r} is not among the target tracks")
    lengths = {len(w) for w in [*target_tracks.values(), *interference_tracks.values()]}
    if len(lengths) != 1:
        raise LengthMismatch(f"tracks have differing lengths {sorted(lengths)}")
    n = lengths.pop()
    rng = np.random.default_rng(seed)

    target = _group_sum(target_tracks, n)
    inter = _group_sum(interference_tracks, n)
    p_t, p_i = active_power(target), active_power(inter)
    if p_t == 0:
        raise SilentGroup("target conversation is silent")
    if p_i == 0:
        raise SilentGroup("interference is silent")
    g_inter = float(np.sqrt(p_t / (p_i * 10.0 ** (target_interference_snr_db / 10.0))))

    g_noise = 0.0
    noise_sig = np.zeros(n)
    if noise is not None and target_noise_snr_db is not None:
        if noise.samples.size == 0 or not np.any(noise.samples):
            raise SilentGroup("noise is silent")
        noise_sig = _fit_noise(noise, n, rng)
        speech = target + g_inter * inter
        g_noise = float(np.sqrt(
            active_power(speech) / (active_power(noise_sig) * 10.0 ** (target_noise_snr_db / 10.0))
        ))
        if not np.isfinite(g_noise) or active_power(noise_sig) == 0:
            raise SilentGroup("noise window is silent")

    comps = {k: w.samples.astype(np.float64) for k, w in target_tracks.items()}
    inters = {k: g_inter * w.samples.astype(np.float64) for k, w in interference_tracks.items()}
    noise_sig = g_noise * noise_sig
    x = sum(comps.values()) + sum(inters.values()) + noise_sig
    peak = float(np.max(np.abs(x)))
    g_global = CLIP_HEADROOM / peak if peak > 1.0 else 1.0

    def f32(a):
        return Waveform((g_global * a).astype(np.float32))

    ref = f32(comps[reference])
    others = {k: f32(v) for k, v in sorted(comps.items()) if k != reference}
    inter_w = {k: f32(v) for k, v in sorted(inters.items())}
    noise_w = f32(noise_sig)
    parts = [ref, *others.values(), *inter_w.values(), noise_w]
    mixture = Waveform(np.sum([p.samples.astype(np.float64) for p in parts], axis=0).astype(np.float32))
    tgt = Waveform(
        (ref.samples.astype(np.float64)
         + sum((o.samples.astype(np.float64) for o in others.values()), np.zeros(n))).astype(np.float32)
    )
    meta = dict(metadata or {})
    meta.update(
        reference_speaker_id=reference,
        gains={"interference": g_inter, "noise": g_noise, "global": g_global},
        target_interference_snr_db=target_interference_snr_db,
        target_noise_snr_db=target_noise_snr_db if noise is not None else None,
    )
    return MixtureSample(mixture, ref, others, inter_w, noise_w, tgt, embedding, meta)


def choose_reference(t: ConversationTranscript, window: tuple[float, float], seed: int = 0) -> str:
    active = sorted(speech_activity(t, window).active_speakers)
    if not active:
        raise NoActiveSpeaker(f"no speaker active in window {window}")
    return active[int(np.random.default_rng(seed).integers(len(active)))]


def enrollment_sources(
    t: ConversationTranscript,
    reference: str,
    exclude_window: tuple[float, float],
    min_len_s: float = 5.0,
    seed: int = 0,
) -> list[tuple[float, float]]:
    """Intervals of the reference's speech outside ``exclude_window`` used for enrollment.

    Utterances are visited in seeded random order; the last one is cut so the
    total is exactly ``min_len_s``.
    """
    lo, hi = exclude_window
    pieces = []
    for u in t.by_speaker(reference):
        if u.start_s < lo:
            pieces.append((u.start_s, min(u.end_s, lo)))
        if u.end_s > hi:
            pieces.append((max(u.start_s, hi), u.end_s))
    pieces = [(a, b) for a, b in pieces if b - a > 1e-9]
    if sum(b - a for a, b in pieces) + 1e-9 < min_len_s:
        raise InsufficientEnrollment(
            f"{reference}: less than {min_len_s} s of speech outside {exclude_window}"
        )
    order = np.random.default_rng(seed).permutation(len(pieces))
    out, need = [], min_len_s
    for i in order:
        a, b = pieces[i]
        take = min(b - a, need)
        out.append((a, a + take))
        need -= take
        if need <= 1e-9:
            break
    return out


def select_enrollment(
    t: ConversationTranscript,
    reference: str,
    exclude_window: tuple[float, float],
    min_len_s: float = 5.0,
    seed: int = 0,
    track: Waveform | None = None,
) -> Waveform:
    """Clean enrollment audio for ``reference`` from outside the mixture window."""
    sources = enrollment_sources(t, reference, exclude_window, min_len_s, seed)
    if track is None:
        track = render_tracks(t)[reference]
    chunks = []
    for a, b in sources:
        i0, i1 = int(round(a * SAMPLE_RATE)), int(round(b * SAMPLE_RATE))
        chunks.append(track.samples[i0:i1])
    audio = np.concatenate(chunks)
    n = int(round(min_len_s * SAMPLE_RATE))
    if audio.size < n:
        audio = np.concatenate([audio, np.zeros(n - audio.size, dtype=np.float32)])
    return Waveform(audio[:n])


@dataclass
class InterferenceChoice:
    index: int
    transcript: ConversationTranscript
    start_s: float


def sample_interference(
    catalog: list[ConversationTranscript],
    target: ConversationTranscript,
    seed: int = 0,
    seg_len_s: float = 60.0,
    min_speech_frac: float = 0.6,
    min_active: int = 2,
) -> InterferenceChoice:
    """Seeded window from a catalog conversation sharing no speaker with ``target``."""
    rng = np.random.default_rng(seed)
    cands = [
        i for i, c in enumerate(catalog)
        if c.conversation_id != target.conversation_id and not (c.speakers & target.speakers)
    ]
    for i in rng.permutation(cands) if cands else []:
        starts = select_segments(
            catalog[i], seg_len_s, min_speech_frac, min_active, int(rng.integers(2**31)), count=1
        )
        if starts:
            return InterferenceChoice(int(i), catalog[i], starts[0])
    raise NoDisjointConversation(
        f"no speaker-disjoint conversation with a valid window for {target.conversation_id}"
    )


# -- dataset building ------------------------------------------------------

@dataclass
class DatasetSpec:
    catalog: list[Conversation]
    counts: dict[str, int]
    splits: dict[str, list[str]] | None = None  # split -> conversation ids
    seg_len_s: float = 60.0
    min_speech_frac: float = 0.6
    min_active: int = 2
    enrollment_s: float = 5.0
    snr_db: tuple[float, float] = (-3.0, 3.0)
    noise: list[Waveform] | None = None
    noise_snr_db: tuple[float, float] = (0.0, 10.0)
    plan: AugmentPlan | None = None
    embeddings_dir: str | None = None
    embedding_seed: int = 0
    seed: int = 0
    max_attempts: int = 50

    def split_catalog(self, split: str) -> list[Conversation]:
        if self.splits is None:
            return list(self.catalog)
        ids = set(self.splits.get(split, []))
        return [c for c in self.catalog if c.transcript.conversation_id in ids]


def check_speaker_disjointness(spec: DatasetSpec) -> None:
    if spec.splits is None:
        return
    test = set().union(*[c.transcript.speakers for c in spec.split_catalog("test")])
    train = set()
    for split in spec.splits:
        if split != "test":
            train |= set().union(*[c.transcript.speakers for c in spec.split_catalog(split)])
    leak = test & train
    if leak:
        raise SpeakerLeak(f"speakers shared between test and train/val: {sorted(leak)}")


def _embedding_for(spec: DatasetSpec, speaker: str) -> SpeakerEmbedding:
    if spec.embeddings_dir:
        p = Path(spec.embeddings_dir) / f"{speaker}.bin"
        if p.exists():
            return load_embedding(p, speaker)
    return pseudo_embedding(speaker, spec.embedding_seed)


def make_sample(spec: DatasetSpec, split: str, index: int) -> MixtureSample:
    """Build one mixture; retries draws that hit a recoverable dead end."""
    catalog = spec.split_catalog(split)
    transcripts = [c.transcript for c in catalog]
    last_err: Exception | None = None
    for attempt in range(spec.max_attempts):
        seed = derive_seed(spec.seed, split, index, attempt)
        rng = np.random.default_rng(seed)
        try:
            ci = int(rng.integers(len(catalog)))
            conv = catalog[ci]
            t = conv.transcript
            starts = select_segments(
                t, spec.seg_len_s, spec.min_speech_frac, spec.min_active,
                derive_seed(seed, "window"), count=1,
            )
            if not starts:
                raise NoActiveSpeaker(f"{t.conversation_id}: no qualifying window")
            w0 = starts[0]
            window = (w0, w0 + spec.seg_len_s)
            ref = choose_reference(t, window, derive_seed(seed, "reference"))
            enr_track = conv.tracks[ref] if conv.tracks is not None else None
            enrollment = select_enrollment(
                t, ref, window, spec.enrollment_s, derive_seed(seed, "enroll"), enr_track
            )
            choice = sample_interference(
                transcripts, t, derive_seed(seed, "interference"),
                spec.seg_len_s, spec.min_speech_frac, spec.min_active,
            )
            break
        except (InsufficientEnrollment, NoDisjointConversation, NoActiveSpeaker) as exc:
            last_err = exc
    else:
        raise TCEError(f"{split}[{index}]: gave up after {spec.max_attempts} attempts: {last_err}")

    t_win = t.window(window[0], spec.seg_len_s)
    i_conv = catalog[choice.index]
    i_win = choice.transcript.window(choice.start_s, spec.seg_len_s)
    tgt_tracks = conv.window_tracks(window[0], spec.seg_len_s)
    tgt_tracks = {k: v for k, v in tgt_tracks.items() if k in t_win.speakers}
    int_tracks = i_conv.window_tracks(choice.start_s, spec.seg_len_s)
    int_tracks = {k: v for k, v in int_tracks.items() if k in i_win.speakers}

    replaced: dict[str, str] = {}
    if spec.plan is not None and spec.plan.p > 0:
        plan_t = AugmentPlan(spec.plan.p, spec.plan.replacement_pool, derive_seed(seed, "aug-t"))
        res = augment_conversation(t_win, tgt_tracks, plan_t)
        tgt_tracks, replaced = res.tracks, dict(res.replaced)
        plan_i = AugmentPlan(spec.plan.p, spec.plan.replacement_pool, derive_seed(seed, "aug-i"))
        res_i = augment_conversation(i_win, int_tracks, plan_i)
        int_tracks = res_i.tracks
        replaced.update({f"inter:{k}": v for k, v in res_i.replaced.items()})
    voice = replaced.get(ref, ref)
    if voice != ref:
        _, audio = draw_samples(
            spec.plan.replacement_pool, len(enrollment), seed=derive_seed(seed, "enroll-aug"),
            speaker=voice,
        )
        enrollment = Waveform(audio)

    mrng = np.random.default_rng(derive_seed(seed, "mix"))
    snr = float(np.round(mrng.uniform(*spec.snr_db), 6))
    noise = None
    noise_snr = None
    if spec.noise:
        noise = spec.noise[int(mrng.integers(len(spec.noise)))]
        noise_snr = float(np.round(mrng.uniform(*spec.noise_snr_db), 6))
    meta = {
        "id": f"{split}-{index:05d}",
        "split": split,
        "seed": seed,
        "conversation_id": t.conversation_id,
        "window_start_s": window[0],
        "interference_id": choice.transcript.conversation_id,
        "interference_window_start_s": choice.start_s,
        "embedding_speaker_id": voice,
        "replaced": replaced,
        "enrollment_sources": enrollment_sources(
            t, ref, window, spec.enrollment_s, derive_seed(seed, "enroll")
        ),
    }
    sample = mix(
        tgt_tracks, ref, int_tracks, noise, snr, noise_snr, derive_seed(seed, "noise"),
        _embedding_for(spec, voice), meta,
    )
    sample.metadata["transcripts"] = {"target": t_win, "interference": i_win}
    sample.metadata["enrollment"] = enrollment
    return sample


def write_sample(sample: MixtureSample, out_dir: Path) -> dict:
    """Write WAVs, embedding and transcripts; return the manifest record."""
    meta = dict(sample.metadata)
    sid = meta["id"]
    d = out_dir / sid
    d.mkdir(parents=True, exist_ok=True)
    rel = lambda name: f"{sid}/{name}"  # noqa: E731

    def put(name, w):
        write_wav(w, d / name)
        return rel(name)

    others = sorted(sample.others)
    inters = sorted(sample.interference)
    paths = {
        "mixture": put("mixture.wav", sample.mixture),
        "target": put("target.wav", sample.target),
        "reference": put("s0.wav", sample.reference),
        "conv": [put(f"conv_{i + 1}.wav", sample.others[k]) for i, k in enumerate(others)],
        "inter": [put(f"inter_{i + 1}.wav", sample.interference[k]) for i, k in enumerate(inters)],
        "noise": put("noise.wav", sample.noise),
        "enrollment": put("enrollment.wav", meta.pop("enrollment")),
    }
    sample.embedding.save(d / "embedding.bin")
    paths["embedding"] = rel("embedding.bin")
    trs = meta.pop("transcripts")
    save_transcript(trs["target"], d / "target_transcript.json")
    save_transcript(trs["interference"], d / "interference_transcript.json")
    paths["target_transcript"] = rel("target_transcript.json")
    paths["interference_transcript"] = rel("interference_transcript.json")
    s = sample
    realized = group_snr_db(s.target.samples, _group_sum(s.interference, len(s.mixture)))
    meta.update(
        target_speakers=[meta["reference_speaker_id"], *others],
        conv_speakers=others,
        interference_speakers=inters,
        realized_target_interference_snr_db=realized,
        paths=paths,
    )
    return meta


_WORKER_SPEC: DatasetSpec | None = None


def _init_worker(spec: DatasetSpec) -> None:
    global _WORKER_SPEC
    _WORKER_SPEC = spec


def _build_one(args) -> dict:
    split, index, out_dir = args
    return write_sample(make_sample(_WORKER_SPEC, split, index), Path(out_dir))


def build_dataset(spec: DatasetSpec, out_dir, jobs: int = 1) -> dict:
    """Generate every split and write ``manifest.json``; returns the manifest."""
    check_speaker_disjointness(spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (split, i, str(out_dir)) for split in sorted(spec.counts) for i in range(spec.counts[split])
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(spec,)) as ex:
            records = list(ex.map(_build_one, tasks))
    else:
        _init_worker(spec)
        records = [_build_one(task) for task in tasks]
    records.sort(key=lambda r: r["id"])
    manifest = {"version": 1, "sample_rate": SAMPLE_RATE, "samples": records}
    save_manifest(manifest, out_dir / "manifest.json")
    log.info("wrote %d samples to %s", len(records), out_dir)
    return manifest


# -- manifests -------------------------------------------------------------

def save_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def load_sample(record: dict, base_dir) -> MixtureSample:
    """Re-read a manifest record's WAVs into a :class:`MixtureSample`."""
    base = Path(base_dir)
    p = record["paths"]
    rd = lambda key: read_wav(base / key)  # noqa: E731
    emb = load_embedding(base / p["embedding"], record.get("embedding_speaker_id", ""))
    return MixtureSample(
        mixture=rd(p["mixture"]),
        reference=rd(p["reference"]),
        others={spk: rd(q) for spk, q in zip(record["conv_speakers"], p["conv"])},
        interference={spk: rd(q) for spk, q in zip(record["interference_speakers"], p["inter"])},
        noise=rd(p["noise"]),
        target=rd(p["target"]),
        embedding=emb,
        metadata=record,
    )
