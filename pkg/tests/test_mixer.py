import numpy as np
import pytest

from conftest import make_transcript, tracks_for
from tce.audio_io import Waveform
from tce.augment import AugmentPlan, Histogram, TurnTakingStats, synth_conversation
from tce.corpus import Conversation
from tce.errors import (
    InsufficientEnrollment,
    NoActiveSpeaker,
    NoDisjointConversation,
    SilentGroup,
    SpeakerLeak,
)
from tce.mixer import (
    DatasetSpec,
    active_power,
    build_dataset,
    choose_reference,
    enrollment_sources,
    group_snr_db,
    load_manifest,
    load_sample,
    mix,
    sample_interference,
    select_enrollment,
)
from tce.transcript import speech_activity


def const_tracks(values, n=1600):
    return {k: Waveform(np.full(n, v, dtype=np.float32)) for k, v in values.items()}


class TestMix:
    def test_zero_db_unit_gain(self):
        s = mix(const_tracks({"a": 0.2}), "a", const_tracks({"x": 0.2}), target_interference_snr_db=0.0)
        assert s.metadata["gains"]["interference"] == pytest.approx(1.0)

    def test_six_db_half_amplitude(self):
        s = mix(const_tracks({"a": 0.2}), "a", const_tracks({"x": 0.2}), target_interference_snr_db=6.02)
        assert s.metadata["gains"]["interference"] == pytest.approx(10 ** (-6.02 / 20))
        assert s.metadata["gains"]["interference"] == pytest.approx(0.5, abs=1e-3)

    def test_silent_noise(self):
        noise = Waveform(np.zeros(10))
        with pytest.raises(SilentGroup):
            mix(const_tracks({"a": 0.2}), "a", const_tracks({"x": 0.2}), noise, 0.0, 5.0)
        with pytest.raises(SilentGroup):
            mix(const_tracks({"a": 0.2}), "a", const_tracks({"x": 0.0}))

    def test_sum_identity_snr_and_clipping(self):
        rng = np.random.default_rng(0)
        t = make_transcript([("A", 0, 1.2), ("B", 1.0, 2.0), ("C", 0.2, 1.9)], 2.0)
        tracks = tracks_for(t, 1)
        tgt = {k: v for k, v in tracks.items() if k in "AB"}
        noise = Waveform(rng.standard_normal(5000))
        s = mix(tgt, "A", {"C": tracks["C"]}, noise, -2.5, 3.0, seed=3)
        s.check()
        realized = group_snr_db(s.target.samples, s.interference["C"].samples)
        assert realized == pytest.approx(-2.5, abs=0.01)
        speech = s.target.samples.astype(float) + s.interference["C"].samples
        assert group_snr_db(speech, s.noise.samples) == pytest.approx(3.0, abs=0.01)
        loud = mix({k: Waveform(v.samples * 10) for k, v in tgt.items()}, "A", {"C": tracks["C"]}, None, 0.0)
        assert np.max(np.abs(loud.mixture.samples)) <= 1.0
        assert loud.metadata["gains"]["global"] < 1
        assert group_snr_db(loud.target.samples, loud.interference["C"].samples) == pytest.approx(0.0, abs=0.01)

    def test_active_power_ignores_silence(self):
        x = np.zeros(100)
        x[:10] = 2.0
        assert active_power(x) == 4.0


class TestReference:
    def test_single_and_empty(self):
        t = make_transcript([("A", 0, 5), ("B", 20, 25)], 30)
        assert choose_reference(t, (0, 10), 0) == "A"
        with pytest.raises(NoActiveSpeaker):
            choose_reference(t, (10, 15), 0)

    def test_uniform(self):
        t = make_transcript([("A", 0, 5), ("B", 3, 8), ("C", 1, 2)], 10)
        picks = [choose_reference(t, (0, 10), s) for s in range(10_000)]
        for spk in "ABC":
            assert abs(picks.count(spk) / 10_000 - 1 / 3) <= 0.02


class TestEnrollment:
    def test_inside_only(self):
        t = make_transcript([("A", 10, 30), ("B", 0, 40)], 60)
        with pytest.raises(InsufficientEnrollment):
            select_enrollment(t, "A", (0, 40), 5.0, 0, tracks_for(t)["A"])

    def test_disjoint_and_length(self):
        t = make_transcript([("A", 0, 10), ("A", 12, 20), ("A", 40, 50), ("B", 20, 40)], 60)
        track = tracks_for(t)["A"]
        w = select_enrollment(t, "A", (15, 45), 5.0, 1, track)
        assert len(w) == 80000
        srcs = enrollment_sources(t, "A", (15, 45), 5.0, 1)
        assert sum(b - a for a, b in srcs) == pytest.approx(5.0)
        for a, b in srcs:
            assert b <= 15 + 1e-9 or a >= 45 - 1e-9
        again = select_enrollment(t, "A", (15, 45), 5.0, 1, track)
        assert np.array_equal(w.samples, again.samples)


class TestInterference:
    def test_no_disjoint(self):
        t = make_transcript([("A", 0, 60), ("B", 0, 60)], 60, cid="t")
        with pytest.raises(NoDisjointConversation):
            sample_interference([t], t, 0)
        shared = make_transcript([("A", 0, 60), ("C", 0, 60)], 60, cid="u")
        with pytest.raises(NoDisjointConversation):
            sample_interference([t, shared], t, 0)

    def test_picks_other(self):
        t = make_transcript([("A", 0, 60), ("B", 0, 60)], 60, cid="t")
        o = make_transcript([("C", 0, 40), ("D", 30, 90)], 90, cid="o")
        for seed in range(20):
            ch = sample_interference([t, o], t, seed)
            assert ch.transcript is o
            act = speech_activity(o, (ch.start_s, ch.start_s + 60))
            assert act.total_speech_fraction >= 0.6 and len(act.active_speakers) >= 2


def _catalog(pool, n=4, duration=30.0, seed=0):
    stats = TurnTakingStats(Histogram.from_density(-0.3, 0.6, 0.05, lambda x: np.ones_like(x)),
                            Histogram.from_density(1.0, 3.0, 0.05, lambda x: np.ones_like(x)), 0.0)
    convs = []
    for i in range(n):
        res = synth_conversation(stats, pool, 2, duration, seed=seed + i, conversation_id=f"c{i}")
        convs.append(Conversation(res.transcript, res.tracks))
    return convs


class TestDataset:
    def test_empty(self, pool, tmp_path):
        m = build_dataset(DatasetSpec(_catalog(pool), {"test": 0}, seg_len_s=8), tmp_path)
        assert m["samples"] == []

    def test_samples_reload_and_check(self, pool, tmp_path):
        plan = AugmentPlan(0.5, pool, 0)
        spec = DatasetSpec(_catalog(pool), {"test": 3}, seg_len_s=8, enrollment_s=3, plan=plan, seed=4)
        m = build_dataset(spec, tmp_path)
        assert [r["id"] for r in m["samples"]] == ["test-00000", "test-00001", "test-00002"]
        for rec in load_manifest(tmp_path / "manifest.json")["samples"]:
            s = load_sample(rec, tmp_path)
            s.check()
            assert not set(rec["interference_speakers"]) & set(rec["target_speakers"])
            assert rec["realized_target_interference_snr_db"] == pytest.approx(
                rec["target_interference_snr_db"], abs=0.01)
            w0, w1 = rec["window_start_s"], rec["window_start_s"] + 8
            for a, b in rec["enrollment_sources"]:
                assert b <= w0 + 1e-9 or a >= w1 - 1e-9

    def test_speaker_leak(self, pool, tmp_path):
        cat = _catalog(pool)
        ids = [c.transcript.conversation_id for c in cat]
        spec = DatasetSpec(cat, {"test": 1}, splits={"train": ids[:2], "test": ids[1:]}, seg_len_s=8)
        with pytest.raises(SpeakerLeak):
            build_dataset(spec, tmp_path)
