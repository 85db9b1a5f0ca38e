"""Four-channel frame representation of songs at the alpha sampling grid.

Each frame carries four integer channels in 0..128 where 128 means
"unassigned" and 0..127 is a midi pitch. Channel layout:

    0: note burst at a bar start      1: note burst mid-bar
    2: note continuation at bar start 3: note continuation mid-bar

At most one channel per frame is assigned; rest frames are all-128. Bar-start
flags are anchored at the first sounding onset, so songs with an anacrusis
have their strong beats realigned onto the pickup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import REST, Song

UNASSIGNED = 128
N_CHANNELS = 4


class TokenizeError(ValueError):
    pass


@dataclass(frozen=True)
class FrameSequence:
    song_id: str
    tokens: np.ndarray  # [T, 4] uint8, values 0..128
    note_of_frame: np.ndarray  # [T] int32, event index or -1
    onset_frame_of_note: np.ndarray  # [n_events] int32
    bar_start_flags: np.ndarray  # [T] bool
    alpha: int
    frames_per_bar: int
    first_onset: int

    def __len__(self):
        return self.tokens.shape[0]

    @property
    def n_bars(self) -> int:
        span = len(self) - self.first_onset
        return -(-span // self.frames_per_bar)

    @property
    def rest_frames(self) -> np.ndarray:
        return (self.tokens == UNASSIGNED).all(axis=1)


def anacrusis_shift(song: Song) -> int:
    """Offset of the corrected bar grid: the first onset becomes a bar start."""
    return song.first_onset % song.frames_per_bar


def tokenize(song: Song, alpha: int | None = None) -> FrameSequence:
    if alpha is None:
        alpha = song.alpha
    if alpha % song.alpha:
        raise TokenizeError(
            f"song {song.id}: alpha {alpha} is not a multiple of the song grid {song.alpha}"
        )
    factor = alpha // song.alpha
    fpb = song.frames_per_bar * factor
    total = song.total_frames * factor
    first_onset = song.first_onset * factor

    tokens = np.full((total, N_CHANNELS), UNASSIGNED, dtype=np.uint8)
    note_of_frame = np.full(total, -1, dtype=np.int32)
    onset_frame_of_note = np.empty(len(song.notes), dtype=np.int32)

    frames = np.arange(total)
    bar_start = (frames - first_onset) % fpb == 0

    for idx, ev in enumerate(song.notes):
        onset = ev.onset * factor
        dur = ev.duration * factor
        onset_frame_of_note[idx] = onset
        if ev.pitch == REST:
            continue
        tokens[onset, 0 if bar_start[onset] else 1] = ev.pitch
        for f in range(onset + 1, onset + dur):
            tokens[f, 2 if bar_start[f] else 3] = ev.pitch
        note_of_frame[onset : onset + dur] = idx

    # rest frames point at the next sounding onset, if any
    nxt = -1
    for f in range(total - 1, -1, -1):
        if note_of_frame[f] == -1:
            note_of_frame[f] = nxt
        else:
            ev = song.notes[note_of_frame[f]]
            if ev.onset * factor == f:
                nxt = note_of_frame[f]

    return FrameSequence(
        song_id=song.id,
        tokens=tokens,
        note_of_frame=note_of_frame,
        onset_frame_of_note=onset_frame_of_note,
        bar_start_flags=bar_start,
        alpha=alpha,
        frames_per_bar=fpb,
        first_onset=first_onset,
    )


def frame_to_note(seq: FrameSequence, frame: int) -> int | None:
    """Event index of the note sounding at `frame`, or the next onset for a
    rest frame; None past the final note."""
    if not 0 <= frame < len(seq):
        raise IndexError(f"frame {frame} outside 0..{len(seq) - 1}")
    idx = int(seq.note_of_frame[frame])
    return None if idx < 0 else idx


def realign(seq: FrameSequence) -> list[tuple[int, int, int]]:
    """Recover the (onset, duration, pitch) list of sounding notes from the
    channel grid. Rest spans are not returned; adjacent rests are not
    distinguishable in frame space."""
    notes = []
    cur = None  # [onset, dur, pitch]
    for f in range(len(seq)):
        burst = [c for c in (0, 1) if seq.tokens[f, c] != UNASSIGNED]
        cont = [c for c in (2, 3) if seq.tokens[f, c] != UNASSIGNED]
        if burst and cont:
            raise TokenizeError(f"frame {f}: burst and continuation both assigned")
        if burst:
            if cur:
                notes.append(tuple(cur))
            cur = [f, 1, int(seq.tokens[f, burst[0]])]
        elif cont:
            pitch = int(seq.tokens[f, cont[0]])
            if cur is None or cur[2] != pitch:
                raise TokenizeError(f"frame {f}: continuation without matching burst")
            cur[1] += 1
        else:
            if cur:
                notes.append(tuple(cur))
                cur = None
    if cur:
        notes.append(tuple(cur))
    return notes


def frame_grid_rows(seq: FrameSequence):
    """Rows (frame, ch1..ch4, bar_flag, note_idx) for the debug CSV dump."""
    for f in range(len(seq)):
        yield (
            f,
            int(seq.tokens[f, 0]),
            int(seq.tokens[f, 1]),
            int(seq.tokens[f, 2]),
            int(seq.tokens[f, 3]),
            int(seq.bar_start_flags[f]),
            int(seq.note_of_frame[f]),
        )
