"""Boundary-detection scoring: per-song precision/recall/F1 macro-averaged
over songs, R-value computed from the macro-mean precision and recall, and
per-meter / note-count-bucket breakdowns.

Matching is exact on note indices. Index 0 (the song start) and the song end
are excluded from both sides; degenerate empty-vs-empty comparisons score
0/0 as 1 so that trivially boundary-free songs do not poison the averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

SQRT2 = math.sqrt(2.0)
RVALUE_VARIANTS = ("rasanen", "paper-eq")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MatchPolicy:
    exclude_song_start: bool = True
    exclude_song_end: bool = True


@dataclass
class GroupScores:
    precision: float
    recall: float
    f_score: float
    r_value: float | None
    n_songs: int


@dataclass
class EvalReport:
    precision: float
    recall: float
    f_score: float
    r_value: float | None
    n_songs: int
    per_meter: dict[str, GroupScores] = field(default_factory=dict)
    buckets: list[dict] = field(default_factory=list)


def _clean(indices, n_notes: int, policy: MatchPolicy) -> frozenset[int]:
    lo = 1 if policy.exclude_song_start else 0
    hi = n_notes - 1  # the terminal "song end" boundary is not representable
    return frozenset(i for i in indices if lo <= i <= hi)


def prf(pred, gold) -> tuple[float, float, float]:
    """Precision, recall, F1 with the 0/0 := 1 convention on empty sets."""
    pred, gold = set(pred), set(gold)
    hits = len(pred & gold)
    p = hits / len(pred) if pred else 1.0
    r = hits / len(gold) if gold else 1.0
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def over_segmentation(p: float, r: float) -> float:
    if p <= 0:
        raise MetricError("over-segmentation is undefined at zero precision")
    return r / p - 1.0


def r_value(p: float, r: float, variant: str = "rasanen") -> float:
    """Boundary-detection R-value from precision and recall.

    The halved ("rasanen") form is the default; "paper-eq" drops the halving
    (it matches a printed equation in circulation but not the published
    result tables computed from it)."""
    if variant not in RVALUE_VARIANTS:
        raise MetricError(f"unknown r-value variant {variant!r}")
    if not (0 < p <= 1) or not (0 < r <= 1):
        raise MetricError(f"r_value needs precision and recall in (0,1], got {p}, {r}")
    os = over_segmentation(p, r)
    r1 = math.hypot(1.0 - r, os)
    r2 = (-os + r - 1.0) / SQRT2
    if variant == "paper-eq":
        return 1.0 - abs(r1) - abs(r2)
    return 1.0 - (abs(r1) + abs(r2)) / 2.0


def _aggregate(per_song, variant):
    n = len(per_song)
    mp = sum(p for p, _, _ in per_song) / n
    mr = sum(r for _, r, _ in per_song) / n
    mf = sum(f for _, _, f in per_song) / n
    try:
        rv = r_value(mp, mr, variant)
    except MetricError:
        rv = None
    return mp, mr, mf, rv


def evaluate(
    preds,
    songs,
    policy: MatchPolicy = MatchPolicy(),
    rvalue_variant: str = "rasanen",
    bucket_width: int = 10,
) -> EvalReport:
    """Score predictions against gold boundaries, aligned by song id."""
    by_id = {p.song_id: p for p in preds}
    song_ids = {s.id for s in songs}
    if set(by_id) != song_ids:
        missing = sorted(song_ids - set(by_id))[:5]
        extra = sorted(set(by_id) - song_ids)[:5]
        raise MetricError(f"prediction/gold id mismatch; missing={missing} extra={extra}")

    per_song = []
    by_meter: dict[str, list] = {}
    by_bucket: dict[int, list] = {}
    for song in songs:
        n = len(song.notes)
        pred = _clean(by_id[song.id].note_indices, n, policy)
        gold = _clean(song.gold_boundaries, n, policy)
        scores = prf(pred, gold)
        per_song.append(scores)
        by_meter.setdefault(song.meter_group, []).append(scores)
        lo = (len(song.pitched_indices) // bucket_width) * bucket_width
        by_bucket.setdefault(lo, []).append(scores)

    mp, mr, mf, rv = _aggregate(per_song, rvalue_variant)
    per_meter = {}
    for group in sorted(by_meter):
        gp, gr, gf, grv = _aggregate(by_meter[group], rvalue_variant)
        per_meter[group] = GroupScores(gp, gr, gf, grv, len(by_meter[group]))

    buckets = []
    for lo in sorted(by_bucket):
        rows = by_bucket[lo]
        buckets.append(
            {
                "lo": lo,
                "hi": lo + bucket_width,
                "mean_p": sum(p for p, _, _ in rows) / len(rows),
                "mean_r": sum(r for _, r, _ in rows) / len(rows),
                "n": len(rows),
            }
        )

    return EvalReport(
        precision=mp,
        recall=mr,
        f_score=mf,
        r_value=rv,
        n_songs=len(per_song),
        per_meter=per_meter,
        buckets=buckets,
    )


# --------------------------------------------------------------------------
# Presentation
# --------------------------------------------------------------------------


def as_percent(fraction: float | None) -> float | None:
    """100x the fraction, rounded half-up to two decimals."""
    if fraction is None:
        return None
    return float((Decimal(repr(fraction)) * 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def report_to_dict(report: EvalReport) -> dict:
    return {
        "precision": as_percent(report.precision),
        "recall": as_percent(report.recall),
        "f_score": as_percent(report.f_score),
        "r_value": as_percent(report.r_value),
        "n_songs": report.n_songs,
        "per_meter": {
            g: {
                "precision": as_percent(s.precision),
                "recall": as_percent(s.recall),
                "f_score": as_percent(s.f_score),
                "r_value": as_percent(s.r_value),
                "n_songs": s.n_songs,
            }
            for g, s in report.per_meter.items()
        },
        "buckets": [
            {
                "lo": b["lo"],
                "hi": b["hi"],
                "mean_p": as_percent(b["mean_p"]),
                "mean_r": as_percent(b["mean_r"]),
                "n": b["n"],
            }
            for b in report.buckets
        ],
    }


def write_buckets_csv(path, report: EvalReport):
    with open(path, "w", encoding="utf-8") as f:
        f.write("bucket_lo,bucket_hi,mean_p,mean_r,n\n")
        for b in report.buckets:
            f.write(f"{b['lo']},{b['hi']},{b['mean_p']:.6f},{b['mean_r']:.6f},{b['n']}\n")
