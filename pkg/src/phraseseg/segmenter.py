"""Boundary prediction from per-frame prediction errors.

Pipeline per song: raw next-frame NLL curve -> smoothed/normalized curve
(adjacent-frame differencing with the a/b stabilizers, clamped at zero) ->
topographic-prominence peak detection with a binary-searched threshold capped
at floor(bars/2) peaks -> Pause/Bar constraint filtering mapped to note
indices. Rule-only Pause/Bar segmenters double as baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .corpus import REST, Song
from .frames import FrameSequence, tokenize
from .trainer import sequence_nlls

CONSTRAINT_NAMES = ("pause", "bar")


class SegmentError(ValueError):
    pass


@dataclass(frozen=True)
class SegmenterConfig:
    a: float = 1.0
    b: float = 1.0
    skip_prefix: int | None = None  # frames; None means one bar of the song
    pause_delta: int | None = None  # frames; None means one quarter note
    constraints: frozenset = frozenset(CONSTRAINT_NAMES)
    binary_search_iters: int = 24

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise SegmentError("a and b must be non-negative")
        if self.binary_search_iters < 1:
            raise SegmentError("binary_search_iters must be >= 1")
        unknown = set(self.constraints) - set(CONSTRAINT_NAMES)
        if unknown:
            raise SegmentError(f"unknown constraints {sorted(unknown)}")
        object.__setattr__(self, "constraints", frozenset(self.constraints))

    def resolved_skip(self, seq: FrameSequence) -> int:
        return seq.frames_per_bar if self.skip_prefix is None else self.skip_prefix

    def resolved_delta(self, seq: FrameSequence) -> int:
        return seq.alpha // 4 if self.pause_delta is None else self.pause_delta


@dataclass
class LossCurve:
    """raw[j] is the NLL of predicting frame j (raw[0] is never predicted and
    stays 0); normalized is the clamped differenced curve on the same index
    grid, zeroed below skip_prefix_frames."""

    raw: np.ndarray
    normalized: np.ndarray
    skip_prefix_frames: int


@dataclass(frozen=True)
class BoundaryPrediction:
    song_id: str
    note_indices: tuple[int, ...]
    scores: dict[int, float] = field(default_factory=dict)
    source: str = "model"
    forced: frozenset[int] = frozenset()


def normalize_losses(raw: np.ndarray, a: float, b: float, skip_prefix: int) -> np.ndarray:
    """max(0, a*raw[j+1] + raw[j] - raw[j-1] - b*raw[j-2]); positions whose
    window sticks out of the curve stay 0."""
    t = raw.shape[0]
    out = np.zeros(t)
    if t >= 5:
        j = np.arange(3, t - 1)
        out[j] = np.maximum(0.0, a * raw[j + 1] + raw[j] - raw[j - 1] - b * raw[j - 2])
    out[: max(skip_prefix, 0)] = 0.0
    return out


def curve_from_raw(raw_by_frame: np.ndarray, cfg: SegmenterConfig, seq: FrameSequence) -> LossCurve:
    skip = cfg.resolved_skip(seq)
    if len(seq) <= skip + 4:
        raise SegmentError(
            f"song {seq.song_id}: {len(seq)} frames is too short for skip_prefix {skip}"
        )
    return LossCurve(
        raw=raw_by_frame,
        normalized=normalize_losses(raw_by_frame, cfg.a, cfg.b, skip),
        skip_prefix_frames=skip,
    )


def loss_curve(checkpoint, seq: FrameSequence, cfg: SegmenterConfig) -> LossCurve:
    """Eval-mode loss curve of one song under one model."""
    params = checkpoint.params if hasattr(checkpoint, "params") else checkpoint
    per_step = sequence_nlls(params, [seq.tokens.astype(np.int16)])[0]
    raw = np.zeros(len(seq))
    raw[1:] = per_step
    return curve_from_raw(raw, cfg, seq)


# --------------------------------------------------------------------------
# Peak detection with topographic prominence
# --------------------------------------------------------------------------


def local_maxima(curve) -> list[int]:
    """Strict local maxima; a flat-topped run counts once at its left edge."""
    curve = np.asarray(curve)
    n = len(curve)
    peaks = []
    i = 1
    while i < n - 1:
        if curve[i] > curve[i - 1]:
            j = i
            while j + 1 < n and curve[j + 1] == curve[i]:
                j += 1
            if j + 1 < n and curve[j + 1] < curve[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


def prominence(curve, peak: int) -> float:
    """Peak height above the higher of the two bounding saddles: on each side
    take the minimum until the first strictly-higher point (or the curve end),
    then subtract the larger of the two minima."""
    curve = np.asarray(curve, dtype=float)
    if peak not in local_maxima(curve):
        raise SegmentError(f"index {peak} is not a strict local maximum")
    v = curve[peak]

    def base(step):
        m = np.inf
        k = peak + step
        while 0 <= k < len(curve) and curve[k] <= v:
            m = min(m, curve[k])
            k += step
        return m

    return float(v - max(base(-1), base(+1)))


def peak_prominences(curve) -> tuple[list[int], np.ndarray]:
    peaks = local_maxima(curve)
    return peaks, np.array([prominence(curve, p) for p in peaks])


def find_peaks(curve, delta: float) -> list[int]:
    """All strict local maxima with prominence >= delta."""
    if delta < 0:
        raise SegmentError("delta must be non-negative")
    peaks, proms = peak_prominences(curve)
    return [p for p, pr in zip(peaks, proms) if pr >= delta]


def search_prominence(curve, max_peaks: int, iters: int = 24) -> tuple[float, list[int]]:
    """Binary search for the smallest prominence threshold leaving at most
    max_peaks peaks (raising the threshold prunes peaks)."""
    peaks, proms = peak_prominences(curve)
    if len(peaks) <= max_peaks:
        return 0.0, peaks
    if max_peaks < 0:
        raise SegmentError("max_peaks must be >= 0")
    lo = 0.0
    hi = float(np.nextafter(proms.max(), np.inf))
    for _ in range(iters):
        mid = (lo + hi) / 2.0
        if int((proms >= mid).sum()) <= max_peaks:
            hi = mid
        else:
            lo = mid
    return hi, [p for p, pr in zip(peaks, proms) if pr >= hi]


# --------------------------------------------------------------------------
# Constraints and end-to-end segmentation
# --------------------------------------------------------------------------


def _rest_runs(seq: FrameSequence):
    rest = seq.rest_frames
    runs, start = [], None
    for f in range(len(seq)):
        if rest[f] and start is None:
            start = f
        elif not rest[f] and start is not None:
            runs.append((start, f - 1))
            start = None
    if start is not None:
        runs.append((start, len(seq) - 1))
    return runs


def apply_constraints(
    peak_frames,
    seq: FrameSequence,
    cfg: SegmenterConfig,
    normalized: np.ndarray | None = None,
    song_id: str | None = None,
) -> BoundaryPrediction:
    """Filter frame peaks by the active constraints and map them to note
    indices. Pause forces a boundary on the note after every rest and vetoes
    peaks within the delta radius of rest frames; Bar keeps only peaks whose
    frame (and resulting onset) is a bar start."""
    n_events = len(seq.onset_frame_of_note)
    rest = seq.rest_frames
    delta = cfg.resolved_delta(seq)
    scores: dict[int, float] = {}
    forced = set()

    frames = sorted(int(f) for f in peak_frames)
    if "bar" in cfg.constraints:
        frames = [f for f in frames if seq.bar_start_flags[f]]
    if "pause" in cfg.constraints:
        frames = [f for f in frames if not rest[max(0, f - delta) : f + delta + 1].any()]

    for f in frames:
        idx = int(seq.note_of_frame[f])
        if idx < 1:
            continue
        onset = int(seq.onset_frame_of_note[idx])
        if "bar" in cfg.constraints and not seq.bar_start_flags[onset]:
            continue
        score = float(normalized[f]) if normalized is not None else 1.0
        scores[idx] = max(scores.get(idx, -np.inf), score)

    if "pause" in cfg.constraints:
        for start, end in _rest_runs(seq):
            idx = int(seq.note_of_frame[end])
            if 1 <= idx < n_events:
                forced.add(idx)
                base = float(normalized[int(seq.onset_frame_of_note[idx])]) if normalized is not None else 1.0
                scores[idx] = max(scores.get(idx, -np.inf), base)

    return BoundaryPrediction(
        song_id=song_id or seq.song_id,
        note_indices=tuple(sorted(scores)),
        scores=scores,
        source="model",
        forced=frozenset(forced),
    )


def segment_from_curve(curve: LossCurve, seq: FrameSequence, cfg: SegmenterConfig) -> BoundaryPrediction:
    max_peaks = seq.n_bars // 2
    _, peak_frames = search_prominence(curve.normalized, max_peaks, cfg.binary_search_iters)
    return apply_constraints(peak_frames, seq, cfg, normalized=curve.normalized)


def segment(checkpoint, song: Song, cfg: SegmenterConfig, seq: FrameSequence | None = None) -> BoundaryPrediction:
    if seq is None:
        seq = tokenize(song)
    curve = loss_curve(checkpoint, seq, cfg)
    return segment_from_curve(curve, seq, cfg)


# --------------------------------------------------------------------------
# Rule-only baselines
# --------------------------------------------------------------------------


def rule_segment(song: Song, rule: str) -> BoundaryPrediction:
    """pause: first note after each rest; bar: first note of every bar on the
    anacrusis-shifted grid; bar+pause: the union."""
    if rule not in ("pause", "bar", "bar+pause"):
        raise SegmentError(f"unknown rule {rule!r}")
    n = len(song.notes)
    onsets = [ev.onset for ev in song.notes]
    pitched = [i for i, ev in enumerate(song.notes) if ev.pitch != REST]
    boundaries: set[int] = set()
    forced: set[int] = set()

    if rule in ("pause", "bar+pause"):
        for i, ev in enumerate(song.notes):
            if ev.pitch != REST:
                continue
            for j in pitched:
                if j > i:
                    if j >= 1:
                        boundaries.add(j)
                        forced.add(j)
                    break

    if rule in ("bar", "bar+pause"):
        fpb = song.frames_per_bar
        bar = song.first_onset + fpb
        while bar < song.total_frames:
            for j in pitched:
                if onsets[j] >= bar:
                    boundaries.add(j)
                    break
            bar += fpb

    boundaries.discard(0)
    boundaries = {b for b in boundaries if 1 <= b <= n - 1}
    source = {"pause": "pause-rule", "bar": "bar-rule", "bar+pause": "bar+pause-rule"}[rule]
    return BoundaryPrediction(
        song_id=song.id,
        note_indices=tuple(sorted(boundaries)),
        scores={b: 1.0 for b in boundaries},
        source=source,
        forced=frozenset(forced & boundaries),
    )


# --------------------------------------------------------------------------
# Exports
# --------------------------------------------------------------------------


def write_loss_curve_csv(path, seq: FrameSequence, curve: LossCurve, peak_frames=()):
    peaks = set(int(f) for f in peak_frames)
    with open(path, "w", encoding="utf-8") as f:
        f.write("frame,raw_nll,normalized,bar_flag,is_peak\n")
        for j in range(len(seq)):
            f.write(
                f"{j},{curve.raw[j]:.6f},{curve.normalized[j]:.6f},"
                f"{int(seq.bar_start_flags[j])},{int(j in peaks)}\n"
            )


def prediction_to_json(pred: BoundaryPrediction) -> str:
    import json

    return json.dumps(
        {
            "id": pred.song_id,
            "boundaries": list(pred.note_indices),
            "scores": {str(k): round(float(v), 6) for k, v in sorted(pred.scores.items())},
            "source": pred.source,
            "forced": sorted(pred.forced),
        },
        separators=(",", ":"),
    )


def prediction_from_json(line: str) -> BoundaryPrediction:
    import json

    obj = json.loads(line)
    return BoundaryPrediction(
        song_id=obj["id"],
        note_indices=tuple(obj["boundaries"]),
        scores={int(k): v for k, v in obj.get("scores", {}).items()},
        source=obj.get("source", "model"),
        forced=frozenset(obj.get("forced", ())),
    )
