import numpy as np
import pytest

from phraseseg import corpus, synthcorpus


@pytest.fixture(scope="session")
def tiny_corpus():
    """Small parsed corpus for fast functional tests."""
    text = synthcorpus.make_esac(n_songs=80, seed=7, include_bad=False)
    result = corpus.parse_esac(text)
    assert not result.rejects
    return result.songs


def random_song(rng: np.random.Generator, song_id: str = "R0001") -> corpus.Song:
    """Arbitrary valid song: random pitches/durations with coalesced rests."""
    meters = [(4, 4), (3, 4), (2, 4), (6, 8), (3, 8), (5, 4)]
    num, den = meters[rng.integers(len(meters))]
    n_events = int(rng.integers(3, 40))
    events = []
    onset = 0
    prev_rest = False
    for _ in range(n_events):
        dur = int(rng.integers(1, 9))
        if not prev_rest and rng.random() < 0.18:
            pitch = corpus.REST
            prev_rest = True
        else:
            pitch = int(rng.integers(40, 90))
            prev_rest = False
        events.append(corpus.NoteEvent(onset, dur, pitch))
        onset += dur
    if all(e.pitch == corpus.REST for e in events):
        events[0] = corpus.NoteEvent(events[0].onset, events[0].duration, 60)
    n = len(events)
    k = int(rng.integers(0, max(1, n // 3)))
    boundaries = frozenset(int(i) for i in rng.choice(np.arange(1, n), size=min(k, n - 1), replace=False))
    return corpus.Song(
        id=song_id,
        time_signature=corpus.TimeSignature(num, den),
        alpha=16,
        notes=tuple(events),
        gold_boundaries=boundaries,
        tonic=int(rng.integers(0, 12)),
    )
