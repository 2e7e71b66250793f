import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tce.corpus import (
    Utterance,
    UtterancePool,
    draw_utterance,
    fit_length,
    load_embedding,
    pseudo_embedding,
)
from tce.errors import BadLength, PoolExhausted, WrongDimension, ZeroVector


@pytest.fixture
def one_speaker_pool():
    audio = np.random.default_rng(0).uniform(-0.5, 0.5, 5 * 16000).astype(np.float32)
    return UtterancePool({"solo": [Utterance(5.0, audio=audio)]})


def test_crop(one_speaker_pool):
    spk, w = draw_utterance(one_speaker_pool, 2.0, seed=1)
    assert spk == "solo" and len(w) == 32000
    src = one_speaker_pool.entries["solo"][0].audio
    # crop is a contiguous slice of the source
    off = int(np.flatnonzero(src == w.samples[0])[0])
    assert np.array_equal(src[off:off + 32000], w.samples)


def test_loop_with_crossfade(one_speaker_pool):
    _, w = draw_utterance(one_speaker_pool, 12.5, seed=0)
    assert len(w) == 200000
    src = one_speaker_pool.entries["solo"][0].audio
    assert np.array_equal(w.samples[:1000], src[:1000])


def test_fit_length_crossfade_is_linear():
    a = np.ones(1000, dtype=np.float32)
    out = fit_length(a, 1900, np.random.default_rng(0))
    assert out.size == 1900
    # equal-gain linear crossfade of two ones stays at one
    np.testing.assert_allclose(out, 1.0, atol=1e-6)


def test_errors(one_speaker_pool):
    with pytest.raises(PoolExhausted):
        draw_utterance(one_speaker_pool, 1.0, exclude_speakers={"solo"})
    with pytest.raises(BadLength):
        draw_utterance(one_speaker_pool, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 8.0), st.integers(0, 2**31 - 1), st.sets(st.integers(0, 11), max_size=11))
def test_length_and_exclusion(pool, target, seed, excl):
    exclude = {pool.speakers[i] for i in excl}
    spk, w = draw_utterance(pool, target, exclude, seed)
    assert len(w) == int(round(target * 16000))
    assert spk not in exclude


class TestEmbeddings:
    def test_load_normalises(self, tmp_path):
        (tmp_path / "e.bin").write_bytes(np.ones(256, "<f4").tobytes())
        e = load_embedding(tmp_path / "e.bin")
        np.testing.assert_allclose(e.vector, 1 / 16)

    def test_load_errors(self, tmp_path):
        (tmp_path / "short.bin").write_bytes(np.ones(255, "<f4").tobytes())
        with pytest.raises(WrongDimension):
            load_embedding(tmp_path / "short.bin")
        (tmp_path / "zero.bin").write_bytes(np.zeros(256, "<f4").tobytes())
        with pytest.raises(ZeroVector):
            load_embedding(tmp_path / "zero.bin")

    def test_pseudo(self):
        a, b = pseudo_embedding("alice", 3), pseudo_embedding("alice", 3)
        assert np.array_equal(a.vector, b.vector)
        assert abs(np.linalg.norm(a.vector.astype(np.float64)) - 1) < 1e-6
        assert not np.array_equal(a.vector, pseudo_embedding("alice", 4).vector)

    def test_pseudo_distinct_ids(self):
        vecs = np.stack([pseudo_embedding(f"id{i}").vector for i in range(20001)])
        cos = np.einsum("ij,ij->i", vecs[:-1:2], vecs[1::2])
        assert cos.size == 10000
        assert np.mean(cos < 0.5) >= 0.99
