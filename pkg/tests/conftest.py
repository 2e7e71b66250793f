import numpy as np
import pytest

from tce.audio_io import Waveform
from tce.corpus import make_tone_pool
from tce.transcript import ConversationTranscript, UtteranceSegment


@pytest.fixture(scope="session")
def pool():
    return make_tone_pool(12, utts_per_speaker=2, utt_len_s=(1.0, 3.0), seed=7)


def make_transcript(spans, duration=None, cid="c"):
    """spans: iterable of (speaker, start, end)."""
    utts = [UtteranceSegment(s, float(a), float(b)) for s, a, b in spans]
    if duration is None:
        duration = max((u.end_s for u in utts), default=1.0)
    return ConversationTranscript(cid, float(duration), utts)


def tracks_for(t, seed=0, sr=16000):
    """Noise-burst tracks: non-zero exactly inside each speaker's utterances."""
    rng = np.random.default_rng(seed)
    n = int(round(t.duration_s * sr))
    out = {}
    for spk in sorted(t.speakers):
        x = np.zeros(n, dtype=np.float32)
        for u in t.by_speaker(spk):
            a, b = int(round(u.start_s * sr)), int(round(u.end_s * sr))
            x[a:b] = rng.uniform(-0.3, 0.3, b - a) + 0.05
        out[spk] = Waveform(x)
    return out
