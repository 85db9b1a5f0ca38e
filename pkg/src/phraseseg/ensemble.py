"""Per-meter-group model ensembles with union voting.

Each meter group owns k (checkpoint, segmenter-config) members. A song is
segmented by every member of its group; the candidate boundaries are pooled,
ranked by vote count (ties: mean member score, then smaller note index) and
cut at the floor(bars/2) budget. Pause-forced boundaries survive the cut.
Groups without members fall back to the "other" ensemble.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Song
from .frames import tokenize
from .segmenter import (
    BoundaryPrediction,
    SegmenterConfig,
    curve_from_raw,
    segment_from_curve,
)
from .trainer import ModelCheckpoint, load_checkpoint, sequence_nlls


class EnsembleError(ValueError):
    pass


@dataclass
class EnsembleSpec:
    members: dict[str, list[tuple[ModelCheckpoint, SegmenterConfig]]] = field(default_factory=dict)

    def group_members(self, group: str):
        if group in self.members and self.members[group]:
            return self.members[group]
        if "other" in self.members and self.members["other"]:
            return self.members["other"]
        raise EnsembleError(f"no ensemble members for meter group {group!r} and no 'other' fallback")

    @property
    def k(self) -> int:
        return max((len(m) for m in self.members.values()), default=0)


def vote(predictions, budget: int) -> BoundaryPrediction:
    """Union vote: rank pooled candidates by (votes desc, mean score desc,
    index asc), emit the top `budget`, then re-add any pause-forced
    boundaries the cut removed."""
    if not predictions:
        raise EnsembleError("vote needs at least one prediction")
    k = len(predictions)
    votes: dict[int, int] = {}
    score_sum: dict[int, float] = {}
    forced: set[int] = set()
    for pred in predictions:
        for idx in pred.note_indices:
            votes[idx] = votes.get(idx, 0) + 1
            score_sum[idx] = score_sum.get(idx, 0.0) + float(pred.scores.get(idx, 0.0))
        forced |= set(pred.forced)

    ranked = sorted(votes, key=lambda i: (-votes[i], -score_sum[i], i))
    chosen = set(ranked[: max(budget, 0)])
    chosen |= forced & set(votes)

    return BoundaryPrediction(
        song_id=predictions[0].song_id,
        note_indices=tuple(sorted(chosen)),
        scores={i: score_sum[i] / k for i in sorted(chosen)},
        source="model",
        forced=frozenset(forced & chosen),
    )


def segment_corpus(spec: EnsembleSpec, songs, batch_size: int = 64) -> list[BoundaryPrediction]:
    """Ensemble segmentation of a corpus; member loss curves are computed in
    batches per meter group for speed."""
    if not any(spec.members.values()):
        raise EnsembleError("ensemble has no members at all")

    by_group: dict[str, list[int]] = {}
    for i, song in enumerate(songs):
        by_group.setdefault(song.meter_group, []).append(i)

    out: list[BoundaryPrediction | None] = [None] * len(songs)
    for group, idxs in sorted(by_group.items()):
        members = spec.group_members(group)
        seqs = [tokenize(songs[i]) for i in idxs]
        tokens = [s.tokens.astype(np.int16) for s in seqs]
        member_preds = []
        for ckpt, cfg in members:
            nlls = sequence_nlls(ckpt.params, tokens, batch_size=batch_size)
            preds = []
            for seq, per_step in zip(seqs, nlls):
                raw = np.zeros(len(seq))
                raw[1:] = per_step
                curve = curve_from_raw(raw, cfg, seq)
                preds.append(segment_from_curve(curve, seq, cfg))
            member_preds.append(preds)
        for j, i in enumerate(idxs):
            budget = seqs[j].n_bars // 2
            out[i] = vote([mp[j] for mp in member_preds], budget)
    return out  # type: ignore[return-value]


# --------------------------------------------------------------------------
# Manifest file: checkpoint paths + per-member segmenter overrides per group
# --------------------------------------------------------------------------


def _cfg_to_dict(cfg: SegmenterConfig) -> dict:
    return {
        "a": cfg.a,
        "b": cfg.b,
        "skip_prefix": cfg.skip_prefix,
        "pause_delta": cfg.pause_delta,
        "constraints": sorted(cfg.constraints),
        "binary_search_iters": cfg.binary_search_iters,
    }


def _cfg_from_dict(obj: dict) -> SegmenterConfig:
    return SegmenterConfig(
        a=obj.get("a", 1.0),
        b=obj.get("b", 1.0),
        skip_prefix=obj.get("skip_prefix"),
        pause_delta=obj.get("pause_delta"),
        constraints=frozenset(obj.get("constraints", ("pause", "bar"))),
        binary_search_iters=obj.get("binary_search_iters", 24),
    )


def save_manifest(path, member_paths: dict[str, list[tuple[str, SegmenterConfig]]], meta: dict | None = None):
    obj = {
        "groups": {
            g: [{"checkpoint": p, "segmenter": _cfg_to_dict(cfg)} for p, cfg in members]
            for g, members in member_paths.items()
        }
    }
    if meta:
        obj["meta"] = meta
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def load_manifest(path, constraints: frozenset | None = None) -> EnsembleSpec:
    """Build an EnsembleSpec from a manifest; `constraints` overrides every
    member's constraint set when given (used by the ablation runner)."""
    import os

    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    base = os.path.dirname(os.path.abspath(path))
    spec = EnsembleSpec()
    missing = []
    for group, members in obj["groups"].items():
        loaded = []
        for m in members:
            ckpt_path = m["checkpoint"]
            if not os.path.isabs(ckpt_path):
                ckpt_path = os.path.join(base, ckpt_path)
            if not os.path.exists(ckpt_path):
                missing.append(m["checkpoint"])
                continue
            cfg = _cfg_from_dict(m.get("segmenter", {}))
            if constraints is not None:
                cfg = replace(cfg, constraints=frozenset(constraints))
            loaded.append((load_checkpoint(ckpt_path), cfg))
        spec.members[group] = loaded
    if missing:
        raise EnsembleError(f"manifest references missing checkpoints: {missing}")
    return spec
