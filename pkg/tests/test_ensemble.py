import itertools

import numpy as np
import pytest

from phraseseg import ensemble, nn, trainer
from phraseseg.segmenter import BoundaryPrediction, SegmenterConfig

from conftest import random_song


def pred(indices, scores=None, forced=(), song_id="S"):
    scores = scores or {i: 1.0 for i in indices}
    return BoundaryPrediction(
        song_id=song_id, note_indices=tuple(sorted(indices)), scores=scores,
        forced=frozenset(forced),
    )


def test_vote_counts_and_tie_break_by_index():
    preds = [pred({3, 7}), pred({3, 9}), pred({3})]
    out = ensemble.vote(preds, budget=2)
    # 3 has three votes; 7 and 9 tie at one vote with equal scores -> smaller index
    assert out.note_indices == (3, 7)


def test_vote_single_member_identity_up_to_budget():
    member = pred({2, 5, 9}, scores={2: 3.0, 5: 2.0, 9: 1.0})
    assert ensemble.vote([member], budget=5).note_indices == (2, 5, 9)
    assert ensemble.vote([member], budget=2).note_indices == (2, 5)


def test_vote_all_agree():
    members = [pred({4, 8}) for _ in range(3)]
    out = ensemble.vote(members, budget=10)
    assert out.note_indices == (4, 8)


def test_vote_score_tie_break():
    preds = [pred({3}, scores={3: 0.1}), pred({5}, scores={5: 5.0})]
    out = ensemble.vote(preds, budget=1)
    assert out.note_indices == (5,)  # same votes, higher mean score


def test_vote_forced_survive_budget_cut():
    preds = [pred({3, 7}, forced={7}), pred({3})]
    out = ensemble.vote(preds, budget=1)
    assert 7 in out.note_indices  # kept beyond the budget because it is forced
    assert out.note_indices == (3, 7)
    assert out.forced == frozenset({7})


def test_vote_empty_errors():
    with pytest.raises(ensemble.EnsembleError):
        ensemble.vote([], budget=3)


def test_vote_permutation_invariant():
    members = [
        pred({1, 4}, scores={1: 0.5, 4: 0.25}),
        pred({4, 9}, scores={4: 1.0, 9: 0.8}),
        pred({2}, scores={2: 0.9}),
    ]
    outs = {ensemble.vote(list(p), budget=3).note_indices for p in itertools.permutations(members)}
    assert len(outs) == 1


def test_vote_monotone_in_votes():
    members = [pred({1, 2}), pred({2, 3}), pred({2, 9})]
    out = ensemble.vote(members, budget=2)
    assert 2 in out.note_indices  # three votes never lose to one


def test_vote_mean_score_uses_zero_for_non_voters():
    a = pred({1}, scores={1: 0.9})
    b = pred({2}, scores={2: 0.5})
    c = pred({2}, scores={2: 0.5})
    out = ensemble.vote([a, b, c], budget=5)
    assert out.scores[1] == pytest.approx(0.9 / 3)
    assert out.scores[2] == pytest.approx(1.0 / 3)


# --------------------------------------------------------------------------
# corpus-level ensembles
# --------------------------------------------------------------------------


def tiny_checkpoint(seed=0):
    params = nn.init_params(embed_dim=8, hidden_dim=16, seed=seed)
    cfg = trainer.TrainConfig(epochs=1, seed=seed)
    return trainer.ModelCheckpoint(params=params, config=cfg, validation_nll=1.0)


def usable_songs(rng, n):
    out = []
    while len(out) < n:
        song = random_song(rng, f"E{len(out)}")
        if song.total_frames > song.frames_per_bar + 8:
            out.append(song)
    return out


def test_segment_corpus_deterministic(tiny_corpus):
    spec = ensemble.EnsembleSpec(
        members={"other": [(tiny_checkpoint(1), SegmenterConfig()), (tiny_checkpoint(2), SegmenterConfig())]}
    )
    songs = tiny_corpus[:12]
    a = ensemble.segment_corpus(spec, songs)
    b = ensemble.segment_corpus(spec, songs)
    assert a == b
    assert [p.song_id for p in a] == [s.id for s in songs]


def test_segment_corpus_group_fallback(tiny_corpus):
    # only an "other" ensemble: every group falls back to it
    spec = ensemble.EnsembleSpec(members={"other": [(tiny_checkpoint(3), SegmenterConfig())]})
    preds = ensemble.segment_corpus(spec, tiny_corpus[:8])
    assert len(preds) == 8


def test_segment_corpus_missing_group_errors(tiny_corpus):
    spec = ensemble.EnsembleSpec(members={"9/8": [(tiny_checkpoint(4), SegmenterConfig())]})
    with pytest.raises(ensemble.EnsembleError):
        ensemble.segment_corpus(spec, tiny_corpus[:8])


def test_segment_corpus_no_members():
    spec = ensemble.EnsembleSpec(members={})
    with pytest.raises(ensemble.EnsembleError):
        ensemble.segment_corpus(spec, [])


def test_budget_cap_on_non_forced(tiny_corpus):
    from phraseseg.frames import tokenize

    spec = ensemble.EnsembleSpec(
        members={"other": [(tiny_checkpoint(5), SegmenterConfig()), (tiny_checkpoint(6), SegmenterConfig())]}
    )
    songs = tiny_corpus[:20]
    preds = ensemble.segment_corpus(spec, songs)
    for song, p in zip(songs, preds):
        budget = tokenize(song).n_bars // 2
        assert len([i for i in p.note_indices if i not in p.forced]) <= budget


# --------------------------------------------------------------------------
# manifest round trip
# --------------------------------------------------------------------------


def test_manifest_round_trip(tmp_path):
    ckpt = tiny_checkpoint(7)
    trainer.save_checkpoint(ckpt, tmp_path / "a.ckpt")
    trainer.save_checkpoint(tiny_checkpoint(8), tmp_path / "b.ckpt")
    members = {
        "4/4": [("a.ckpt", SegmenterConfig(a=0.5)), ("b.ckpt", SegmenterConfig())],
        "other": [("b.ckpt", SegmenterConfig(constraints=frozenset({"pause"})))],
    }
    path = tmp_path / "manifest.json"
    ensemble.save_manifest(path, members, meta={"note": "test"})
    spec = ensemble.load_manifest(path)
    assert spec.k == 2
    assert spec.members["4/4"][0][1].a == 0.5
    assert spec.members["other"][0][1].constraints == frozenset({"pause"})
    forced = ensemble.load_manifest(path, constraints=frozenset({"bar"}))
    assert forced.members["4/4"][0][1].constraints == frozenset({"bar"})


def test_manifest_missing_checkpoint(tmp_path):
    ensemble.save_manifest(tmp_path / "m.json", {"4/4": [("gone.ckpt", SegmenterConfig())]})
    with pytest.raises(ensemble.EnsembleError) as exc:
        ensemble.load_manifest(tmp_path / "m.json")
    assert "gone.ckpt" in str(exc.value)
