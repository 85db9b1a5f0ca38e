import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phraseseg import corpus

from conftest import random_song

EXAMPLE = """CUT[Example]
KEY[T0001 08 G 3/4]
MEL[1_2_3_
    3_2_1_ //]
"""


def test_parse_example_record():
    result = corpus.parse_esac(EXAMPLE)
    assert not result.rejects
    song = result.songs[0]
    assert song.id == "T0001"
    assert [e.pitch for e in song.notes] == [67, 69, 71, 71, 69, 67]
    assert all(e.duration == 4 for e in song.notes)  # quarters on the 16th grid
    assert sorted(song.gold_boundaries) == [3]
    assert song.tonic == 7
    assert song.frames_per_bar == 12


def test_single_line_has_no_boundaries():
    text = "KEY[T0002 08 C 4/4]\nMEL[1_2_3_1_ //]\n"
    result = corpus.parse_esac(text)
    assert result.songs[0].gold_boundaries == frozenset()


def test_phrase_count_matches_lines():
    text = "KEY[T0003 08 C 4/4]\nMEL[1_2_\n3_4_\n5_3_\n1___ //]\n"
    song = corpus.parse_esac(text).songs[0]
    assert len(song.gold_boundaries) + 1 == 4


def test_token_pieces():
    # octave shifts, accidentals, dots, juxtaposed tokens, rests
    text = "KEY[T0004 08 C 4/4]\nMEL[-5_+1 1_. 0_ 2b2# //]\n"
    song = corpus.parse_esac(text).songs[0]
    pitches = [e.pitch for e in song.notes]
    durs = [e.duration for e in song.notes]
    assert pitches == [55, 72, 60, corpus.REST, 61, 63]
    assert durs == [4, 2, 6, 4, 2, 2]


def test_rests_coalesce():
    text = "KEY[T0005 08 C 4/4]\nMEL[1_ 0 0 0 2_ //]\n"
    song = corpus.parse_esac(text).songs[0]
    assert [e.pitch for e in song.notes] == [60, corpus.REST, 62]
    assert song.notes[1].duration == 6


@pytest.mark.parametrize(
    "key,reason",
    [
        ("KEY[B01 08 C FREI]", "non-numeric meter"),
        ("KEY[B02 08 C 5/3]", "bad meter"),
        ("KEY[B03 08 X 4/4]", "unknown tonic"),
        ("KEY[B04 xx C 4/4]", "bad unit"),
        ("KEY[B05 08 C 4/4 3/4]", "KEY field needs exactly"),
    ],
)
def test_record_rejects(key, reason):
    text = f"{key}\nMEL[1_2_ //]\n"
    result = corpus.parse_esac(text)
    assert not result.songs
    assert len(result.rejects) == 1
    assert reason in result.rejects[0].reason


def test_bad_record_does_not_stop_batch():
    text = EXAMPLE + "\nKEY[BAD 08 C FREI]\nMEL[1_ //]\n\nKEY[T0009 08 C 2/4]\nMEL[1_2_ //]\n"
    result = corpus.parse_esac(text)
    assert [s.id for s in result.songs] == ["T0001", "T0009"]
    assert len(result.rejects) == 1


def test_duplicate_ids_rejected():
    text = EXAMPLE + "\n" + EXAMPLE
    result = corpus.parse_esac(text)
    assert len(result.songs) == 1
    assert result.rejects[0].reason == "duplicate record id"


def test_unknown_melody_token_rejects_record():
    text = "KEY[T0010 08 C 4/4]\nMEL[1_ 9_ //]\n"
    result = corpus.parse_esac(text)
    assert not result.songs
    assert "unknown melody token" in result.rejects[0].reason


def test_meter_group():
    assert corpus.meter_group(corpus.TimeSignature(4, 4)) == "4/4"
    assert corpus.meter_group(corpus.TimeSignature(5, 4)) == "other"
    assert corpus.meter_group(corpus.TimeSignature(3, 8)) == "3/8"
    assert corpus.meter_group(corpus.TimeSignature(2, 2)) == "other"


def test_meter_distribution_sums_to_one(tiny_corpus):
    dist = corpus.meter_distribution(tiny_corpus)
    assert abs(sum(dist.values()) - 1.0) < 1e-9


def test_json_round_trip(tiny_corpus):
    for song in tiny_corpus:
        assert corpus.song_from_json(corpus.song_to_json(song)) == song


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_json_round_trip_random(seed):
    song = random_song(np.random.default_rng(seed))
    assert corpus.song_from_json(corpus.song_to_json(song)) == song


def test_save_load_corpus(tmp_path, tiny_corpus):
    path = tmp_path / "corpus.jsonl"
    corpus.save_corpus(tiny_corpus, path)
    assert corpus.load_corpus(path) == list(tiny_corpus)


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------


def test_split_deterministic(tiny_corpus):
    a = corpus.split_corpus(tiny_corpus, seed=1)
    b = corpus.split_corpus(tiny_corpus, seed=1)
    assert a == b


def test_split_partitions(tiny_corpus):
    split = corpus.split_corpus(tiny_corpus, seed=3)
    all_ids = {s.id for s in tiny_corpus}
    parts = [set(split.train), set(split.validation), set(split.test)]
    assert parts[0] | parts[1] | parts[2] == all_ids
    assert not (parts[0] & parts[1]) and not (parts[0] & parts[2]) and not (parts[1] & parts[2])


def test_split_validation_fraction_exact():
    songs = [
        corpus.Song(
            id=f"S{i:04d}",
            time_signature=corpus.TimeSignature(4, 4),
            alpha=16,
            notes=(corpus.NoteEvent(0, 4, 60), corpus.NoteEvent(4, 4, 62)),
            gold_boundaries=frozenset(),
        )
        for i in range(1112)
    ]
    # 10% test leaves a 1000-song pool; 10% of that pool is exactly 100
    split = corpus.split_corpus(songs, seed=5, validation_fraction=0.10, test_fraction=112 / 1112)
    assert len(split.test) == 112
    assert len(split.validation) == 100


def test_split_seed_changes_membership(tiny_corpus):
    a = corpus.split_corpus(tiny_corpus, seed=1)
    b = corpus.split_corpus(tiny_corpus, seed=2)
    assert set(a.validation) != set(b.validation)


def test_split_too_small():
    songs = [random_song(np.random.default_rng(0))]
    with pytest.raises(corpus.CorpusError):
        corpus.split_corpus(songs, seed=0)


# --------------------------------------------------------------------------
# transposition and key normalization
# --------------------------------------------------------------------------


def test_transpose_identity(tiny_corpus):
    song = tiny_corpus[0]
    assert corpus.transpose(song, 0) == song


def test_transpose_shifts_pitches_not_boundaries(tiny_corpus):
    song = tiny_corpus[0]
    up = corpus.transpose(song, 5)
    for a, b in zip(song.notes, up.notes):
        if a.pitch == corpus.REST:
            assert b.pitch == corpus.REST
        else:
            assert b.pitch == a.pitch + 5
        assert (a.onset, a.duration) == (b.onset, b.duration)
    assert up.gold_boundaries == song.gold_boundaries


def test_transpose_round_trip(tiny_corpus):
    for song in tiny_corpus[:20]:
        assert corpus.transpose(corpus.transpose(song, 4), -4) == song


def test_transpose_out_of_range():
    song = random_song(np.random.default_rng(1))
    with pytest.raises(corpus.CorpusError):
        corpus.transpose(song, 120)


@pytest.mark.parametrize("tonic,shift", [(0, 0), (7, 5), (6, -6), (5, -5), (2, -2), (9, 3)])
def test_key_shift_rule(tonic, shift):
    assert corpus.key_shift(tonic) == shift


def test_normalize_key_lands_on_c():
    text = "KEY[T0020 08 G 4/4]\nMEL[1_2_ //]\n"
    song = corpus.parse_esac(text).songs[0]
    normed = corpus.normalize_key(song)
    assert normed.tonic == 0
    assert normed.notes[0].pitch == 67 + 5


def test_normalize_key_requires_tonic():
    song = random_song(np.random.default_rng(2))
    song = corpus.Song(
        id=song.id,
        time_signature=song.time_signature,
        alpha=song.alpha,
        notes=song.notes,
        gold_boundaries=song.gold_boundaries,
        tonic=None,
    )
    with pytest.raises(corpus.CorpusError):
        corpus.normalize_key(song)
