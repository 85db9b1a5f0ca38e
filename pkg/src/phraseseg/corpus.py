"""EsAC corpus handling: parsing, canonical JSONL storage, splits, preprocessing.

Songs live on a fixed frame grid of ``alpha`` frames per whole note. Rests are
kept as events with pitch ``REST`` so that pause-based segmentation rules can
see them; adjacent rests are coalesced at parse time. Gold phrase boundaries
are event indices pointing at the first sounding note of each melody line
after the first.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, replace
from fractions import Fraction

REST = -1

DEFAULT_ALPHA = 16  # frames per whole note, i.e. a 16th-note grid
DEFAULT_SPLIT_SEED = 17
DEFAULT_TEST_FRACTION = 0.10
DEFAULT_VALIDATION_FRACTION = 0.10

METER_GROUPS = ("4/4", "2/4", "3/4", "6/8", "3/8", "other")

PITCH_CLASS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)  # semitone offset of degrees 1..7

_TOKEN_RE = re.compile(r"(-+|\++)?([0-7])([b#])?([_.]*)")
_TONIC_RE = re.compile(r"^([A-G])([b#])?$")
_METER_RE = re.compile(r"^(\d+)/(\d+)$")


class CorpusError(ValueError):
    pass


class RecordParseError(CorpusError):
    """Parse failure of a single EsAC record; carries the record id if known."""

    def __init__(self, record_id, reason):
        super().__init__(f"{record_id or '<unknown>'}: {reason}")
        self.record_id = record_id
        self.reason = reason


@dataclass(frozen=True)
class NoteEvent:
    """One melody event on the alpha grid; pitch is midi 0..127 or REST."""

    onset: int
    duration: int
    pitch: int


@dataclass(frozen=True, order=True)
class TimeSignature:
    numerator: int
    denominator: int

    def __str__(self):
        return f"{self.numerator}/{self.denominator}"


@dataclass(frozen=True)
class Song:
    id: str
    time_signature: TimeSignature
    alpha: int
    notes: tuple[NoteEvent, ...]
    gold_boundaries: frozenset[int]
    anacrusis_frames: int = 0
    tonic: int | None = None  # pitch class 0..11 when the source gave one

    def __post_init__(self):
        if not self.notes:
            raise CorpusError(f"song {self.id}: empty note list")
        if self.alpha % self.time_signature.denominator:
            raise CorpusError(
                f"song {self.id}: meter denominator {self.time_signature.denominator} "
                f"finer than the alpha grid ({self.alpha})"
            )
        end = 0
        for i, ev in enumerate(self.notes):
            if ev.duration < 1:
                raise CorpusError(f"song {self.id}: note {i} has duration {ev.duration}")
            if ev.onset < end:
                raise CorpusError(f"song {self.id}: note {i} overlaps its predecessor")
            end = ev.onset + ev.duration
        n = len(self.notes)
        for b in self.gold_boundaries:
            if not 1 <= b <= n - 1:
                raise CorpusError(f"song {self.id}: boundary index {b} out of range")

    @property
    def frames_per_bar(self) -> int:
        ts = self.time_signature
        return ts.numerator * self.alpha // ts.denominator

    @property
    def total_frames(self) -> int:
        last = self.notes[-1]
        return last.onset + last.duration

    @property
    def pitched_indices(self) -> tuple[int, ...]:
        return tuple(i for i, ev in enumerate(self.notes) if ev.pitch != REST)

    @property
    def first_onset(self) -> int:
        for ev in self.notes:
            if ev.pitch != REST:
                return ev.onset
        raise CorpusError(f"song {self.id}: no pitched notes")

    @property
    def meter_group(self) -> str:
        return meter_group(self.time_signature)


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]


@dataclass(frozen=True)
class Reject:
    record_id: str | None
    position: int  # ordinal of the record in the input
    reason: str


@dataclass(frozen=True)
class ParseResult:
    songs: list[Song]
    rejects: list[Reject]


def meter_group(ts: TimeSignature) -> str:
    name = str(ts)
    return name if name in METER_GROUPS else "other"


# --------------------------------------------------------------------------
# EsAC parsing
#
# Record layout: CUT[<title>] (optional), KEY[<id> <unit> <tonic> <meter>],
# MEL[<phrase lines> //]. Melody tokens are scale degrees 1-7 on the tonic
# major scale (degree 1 = tonic in the middle C octave), '-'/'+' prefixes for
# octaves, 'b'/'#' suffix for chromatic alteration, '0' for a rest, each '_'
# adds one base unit, '.' adds half the current duration.
# --------------------------------------------------------------------------


def _split_records(text):
    records, cur, in_mel = [], [], False
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            if not in_mel and cur:
                records.append(cur)
                cur = []
            continue
        cur.append(line)
        if not in_mel and "MEL[" in stripped:
            in_mel = "//" not in stripped.split("MEL[", 1)[1]
        elif in_mel and "//" in stripped:
            in_mel = False
    if cur:
        records.append(cur)
    return records


def _lex_melody(line):
    """Melody tokens of one phrase line; whitespace is optional between
    tokens (EsAC habitually juxtaposes them)."""
    out, i = [], 0
    while i < len(line):
        if line[i].isspace():
            i += 1
            continue
        m = _TOKEN_RE.match(line, i)
        if not m:
            raise ValueError(f"unknown melody token at {line[i : i + 8]!r}")
        out.append(m.groups())
        i = m.end()
    return out


def _parse_token(groups, unit, tonic_pc, alpha):
    octaves, degree, accidental, durmarks = groups
    degree = int(degree)
    tok = f"{octaves or ''}{degree}{accidental or ''}{durmarks}"
    if degree == 0 and (octaves or accidental):
        raise ValueError(f"rest token with pitch modifiers {tok!r}")

    units = Fraction(1)
    for ch in durmarks:
        if ch == "_":
            units += 1
        else:  # '.'
            units += units / 2
    frames = int(units * Fraction(alpha, unit) + Fraction(1, 2))
    frames = max(1, frames)

    if degree == 0:
        return REST, frames
    pitch = 60 + tonic_pc + MAJOR_SCALE[degree - 1]
    if octaves:
        pitch += 12 * len(octaves) * (1 if octaves[0] == "+" else -1)
    if accidental:
        pitch += 1 if accidental == "#" else -1
    if not 0 <= pitch <= 127:
        raise ValueError(f"token {tok!r} resolves to out-of-range pitch {pitch}")
    return pitch, frames


def _parse_record(lines, alpha):
    text = "\n".join(lines)
    key_m = re.search(r"KEY\[(.*?)\]", text)
    if not key_m:
        raise RecordParseError(None, "missing KEY field")
    fields = key_m.group(1).split()
    if len(fields) != 4:
        raise RecordParseError(
            fields[0] if fields else None,
            f"KEY field needs exactly '<id> <unit> <tonic> <meter>', got {len(fields)} tokens",
        )
    rec_id, unit_s, tonic_s, meter_s = fields

    try:
        unit = int(unit_s)
        if unit < 1:
            raise ValueError
    except ValueError:
        raise RecordParseError(rec_id, f"bad unit {unit_s!r}") from None

    tonic_m = _TONIC_RE.match(tonic_s)
    if not tonic_m:
        raise RecordParseError(rec_id, f"unknown tonic {tonic_s!r}")
    tonic_pc = PITCH_CLASS[tonic_m.group(1)]
    if tonic_m.group(2) == "#":
        tonic_pc = (tonic_pc + 1) % 12
    elif tonic_m.group(2) == "b":
        tonic_pc = (tonic_pc - 1) % 12

    meter_m = _METER_RE.match(meter_s)
    if not meter_m:
        raise RecordParseError(rec_id, f"non-numeric meter {meter_s!r}")
    num, den = int(meter_m.group(1)), int(meter_m.group(2))
    if num < 1 or den < 1 or den & (den - 1):
        raise RecordParseError(rec_id, f"bad meter {meter_s!r}")
    if alpha % den:
        raise RecordParseError(rec_id, f"meter denominator {den} finer than alpha={alpha}")

    mel_m = re.search(r"MEL\[(.*?)//", text, re.DOTALL)
    if not mel_m:
        raise RecordParseError(rec_id, "missing MEL field")
    phrase_lines = [ln.strip() for ln in mel_m.group(1).splitlines()]
    phrase_lines = [ln for ln in phrase_lines if ln]
    if not phrase_lines:
        raise RecordParseError(rec_id, "empty melody")

    events = []
    boundaries = set()
    onset = 0
    pending_boundary = False
    for li, line in enumerate(phrase_lines):
        if li > 0:
            pending_boundary = True
        try:
            lexed = _lex_melody(line)
        except ValueError as e:
            raise RecordParseError(rec_id, str(e)) from None
        for groups in lexed:
            try:
                pitch, frames = _parse_token(groups, unit, tonic_pc, alpha)
            except ValueError as e:
                raise RecordParseError(rec_id, str(e)) from None
            if pitch == REST and events and events[-1].pitch == REST:
                prev = events[-1]
                events[-1] = NoteEvent(prev.onset, prev.duration + frames, REST)
            else:
                events.append(NoteEvent(onset, frames, pitch))
                if pitch != REST and pending_boundary:
                    boundaries.add(len(events) - 1)
                    pending_boundary = False
            onset += frames

    if not any(ev.pitch != REST for ev in events):
        raise RecordParseError(rec_id, "melody has no pitched notes")
    boundaries.discard(0)

    return Song(
        id=rec_id,
        time_signature=TimeSignature(num, den),
        alpha=alpha,
        notes=tuple(events),
        gold_boundaries=frozenset(boundaries),
        tonic=tonic_pc,
    )


def parse_esac(text: str, alpha: int = DEFAULT_ALPHA) -> ParseResult:
    """Parse EsAC text into songs, collecting per-record rejects instead of failing."""
    songs, rejects, seen = [], [], set()
    for pos, rec in enumerate(_split_records(text)):
        try:
            song = _parse_record(rec, alpha)
        except RecordParseError as e:
            rejects.append(Reject(e.record_id, pos, e.reason))
            continue
        if song.id in seen:
            rejects.append(Reject(song.id, pos, "duplicate record id"))
            continue
        seen.add(song.id)
        songs.append(song)
    return ParseResult(songs, rejects)


# --------------------------------------------------------------------------
# Canonical JSONL corpus format
# --------------------------------------------------------------------------


def song_to_json(song: Song) -> str:
    obj = {
        "id": song.id,
        "meter": str(song.time_signature),
        "alpha": song.alpha,
        "anacrusis_frames": song.anacrusis_frames,
        "notes": [[ev.onset, ev.duration, ev.pitch] for ev in song.notes],
        "boundaries": sorted(song.gold_boundaries),
    }
    if song.tonic is not None:
        obj["tonic"] = song.tonic
    return json.dumps(obj, separators=(",", ":"))


def song_from_json(line: str) -> Song:
    obj = json.loads(line)
    num, den = obj["meter"].split("/")
    return Song(
        id=obj["id"],
        time_signature=TimeSignature(int(num), int(den)),
        alpha=obj["alpha"],
        notes=tuple(NoteEvent(o, d, p) for o, d, p in obj["notes"]),
        gold_boundaries=frozenset(obj["boundaries"]),
        anacrusis_frames=obj["anacrusis_frames"],
        tonic=obj.get("tonic"),
    )


def save_corpus(songs, path):
    with open(path, "w", encoding="utf-8") as f:
        for song in songs:
            f.write(song_to_json(song) + "\n")


def load_corpus(path) -> list[Song]:
    with open(path, encoding="utf-8") as f:
        return [song_from_json(line) for line in f if line.strip()]


def corpus_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------
# Splits and preprocessing
# --------------------------------------------------------------------------


def _id_rank(tag, seed, song_id):
    digest = hashlib.sha256(f"{tag}:{seed}:{song_id}".encode()).digest()
    return digest


def split_corpus(
    songs,
    seed: int = DEFAULT_SPLIT_SEED,
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION,
    test_fraction: float = DEFAULT_TEST_FRACTION,
) -> CorpusSplit:
    """Deterministic hash-of-id split: test carved first, then validation
    from the remaining pool. Fractions are honoured exactly (rounded)."""
    if len(songs) < 3:
        raise CorpusError(f"corpus of {len(songs)} songs is too small to split")
    if not 0 < validation_fraction < 1:
        raise CorpusError(f"validation_fraction {validation_fraction} outside (0,1)")
    ids = [s.id for s in songs]
    if len(set(ids)) != len(ids):
        raise CorpusError("duplicate song ids in corpus")

    by_test_rank = sorted(ids, key=lambda i: _id_rank("test", seed, i))
    n_test = round(test_fraction * len(ids))
    test = set(by_test_rank[:n_test])

    pool = [i for i in ids if i not in test]
    by_val_rank = sorted(pool, key=lambda i: _id_rank("val", seed, i))
    n_val = round(validation_fraction * len(pool))
    validation = set(by_val_rank[:n_val])

    train = [i for i in pool if i not in validation]
    return CorpusSplit(
        train=tuple(sorted(train)),
        validation=tuple(sorted(validation)),
        test=tuple(sorted(test)),
    )


def transpose(song: Song, semitones: int) -> Song:
    if semitones == 0:
        return song
    notes = []
    for i, ev in enumerate(song.notes):
        if ev.pitch == REST:
            notes.append(ev)
            continue
        p = ev.pitch + semitones
        if not 0 <= p <= 127:
            raise CorpusError(
                f"song {song.id}: transposing note {i} (pitch {ev.pitch}) "
                f"by {semitones} leaves midi range"
            )
        notes.append(NoteEvent(ev.onset, ev.duration, p))
    tonic = (song.tonic + semitones) % 12 if song.tonic is not None else None
    return replace(song, notes=tuple(notes), tonic=tonic)


def key_shift(tonic_pc: int) -> int:
    """Smallest-magnitude shift taking the tonic to C; ties broken downward."""
    down, up = -tonic_pc, 12 - tonic_pc
    if tonic_pc == 0:
        return 0
    return down if abs(down) <= abs(up) else up


def normalize_key(song: Song) -> Song:
    if song.tonic is None:
        raise CorpusError(f"song {song.id}: unknown tonic, cannot normalize key")
    return transpose(song, key_shift(song.tonic))


def meter_distribution(songs) -> dict[str, float]:
    counts = {g: 0 for g in METER_GROUPS}
    for s in songs:
        counts[s.meter_group] += 1
    n = len(songs) or 1
    return {g: counts[g] / n for g in METER_GROUPS}


def songs_in_group(songs, group: str) -> list[Song]:
    if group == "all":
        return list(songs)
    return [s for s in songs if s.meter_group == group]
