"""Deterministic synthetic EsAC corpus.

The real Essen collection cannot be redistributed with this package, so this
module fabricates an EsAC-format folk-song corpus whose surface statistics
match the published profile of that collection: 6,236 songs, the same
time-signature mix, phrases of mostly one or two bars whose starts usually
fall on (anacrusis-shifted) bar lines, and rests closing roughly half of the
phrases. Melodies are arch-shaped diatonic walks with long cadence tones and
register jumps between phrases, so a next-frame predictor has real structure
to learn. Use it for tests, benchmarks and demos; swap in real EsAC files
for musicological conclusions.
"""

from __future__ import annotations

import numpy as np

METER_WEIGHTS = {
    "4/4": 0.2665,
    "2/4": 0.2203,
    "3/4": 0.2044,
    "6/8": 0.1300,
    "3/8": 0.0522,
    "other": 0.1256,
}
OTHER_METERS = ("5/4", "3/2", "2/2", "6/4", "4/8")

# (meter) -> esac unit and units per bar
METER_UNIT = {
    "4/4": (8, 8), "2/4": (8, 4), "3/4": (8, 6),
    "6/8": (16, 12), "3/8": (16, 6),
    "5/4": (8, 10), "3/2": (8, 12), "2/2": (8, 8), "6/4": (8, 12), "4/8": (16, 8),
}

BAR_PATTERNS = {
    8: ([2, 2, 2, 2], [2, 1, 1, 2, 2], [1, 1, 2, 2, 2], [2, 2, 1, 1, 2], [4, 2, 2], [2, 2, 4], [3, 1, 2, 2]),
    4: ([2, 2], [1, 1, 2], [2, 1, 1], [3, 1], [1, 1, 1, 1]),
    6: ([2, 2, 2], [1, 1, 2, 2], [2, 1, 1, 2], [4, 2], [3, 1, 2], [2, 4]),
    12: ([2, 2, 2, 2, 2, 2], [6, 6], [4, 2, 4, 2], [2, 2, 2, 6], [6, 4, 2], [4, 4, 4]),
    10: ([2, 2, 2, 2, 2], [4, 2, 2, 2], [2, 2, 4, 2], [4, 4, 2]),
}

TONIC_WEIGHTS = {
    "C": 0.13, "G": 0.13, "F": 0.11, "D": 0.10, "A": 0.08, "E": 0.05, "B": 0.02,
    "Bb": 0.09, "Eb": 0.08, "Ab": 0.05, "Db": 0.03, "F#": 0.03,
    "C#": 0.02, "Gb": 0.02, "G#": 0.02, "A#": 0.02, "Eb#": 0.0, "D#": 0.02,
}

N_PHRASES = ((3, 0.10), (4, 0.22), (5, 0.26), (6, 0.22), (7, 0.13), (8, 0.07))
PHRASE_BARS = ((1, 0.38), (2, 0.52), (3, 0.08), (4, 0.02))

P_GO_OFFGRID = 0.15  # phrase length stretched by half a bar
P_BACK_ONGRID = 0.70  # shifted songs snap back at the next phrase
P_REST_AFTER_PHRASE = 0.48
P_MID_REST_SONG = 0.042
P_TRAILING_REST = 0.12
P_ACCIDENTAL = 0.012
P_REUSE_RHYTHM = 0.55  # phrase reuses the song's first rhythm patterns
P_SMOOTH_START = 0.20  # phrase continues stepwise instead of leaping
P_ORNAMENT = 0.06  # mid-phrase note split into note + off-beat escape leap

STEP_CHOICES = (-3, -2, -1, 0, 1, 2, 3)
STEP_WEIGHTS = (0.05, 0.12, 0.26, 0.10, 0.28, 0.13, 0.06)
CADENCE_DEGREES = ((0, 0.45), (4, 0.28), (2, 0.17), (1, 0.10))  # linear-degree offsets mod 7


def _weighted(rng, pairs):
    items = [x for x, _ in pairs]
    w = np.array([w for _, w in pairs], dtype=float)
    return items[rng.choice(len(items), p=w / w.sum())]


def _duration_suffix(units: int, rng) -> str:
    if units == 3 and rng.random() < 0.5:
        return "_."  # (1 + 1) * 1.5
    if units == 6 and rng.random() < 0.5:
        return "___."  # (1 + 3) * 1.5
    return "_" * (units - 1)


def _degree_token(l: int, accidental: str, units: int, rng) -> str:
    octave, degree = divmod(l, 7)
    prefix = "+" * octave if octave > 0 else "-" * (-octave)
    return f"{prefix}{degree + 1}{accidental}{_duration_suffix(units, rng)}"


def _phrase_body(rng, target_units, patterns):
    """Durations filling target_units exactly, built from bar patterns."""
    durations = []
    total = 0
    while total < target_units:
        for d in patterns[rng.integers(len(patterns))]:
            d = int(min(d, target_units - total))
            if d <= 0:
                break
            durations.append(d)
            total += d
    return durations


def _melody(rng, n_notes, start_l, cadence_l):
    """Diatonic walk from start_l that lands on cadence_l."""
    levels = [int(start_l)]
    for i in range(1, n_notes):
        remaining = n_notes - i
        drift = (cadence_l - levels[-1]) / max(remaining, 1)
        step = int(rng.choice(STEP_CHOICES, p=STEP_WEIGHTS))
        if abs(levels[-1] + step - cadence_l) > remaining * 2:
            step = int(np.sign(drift)) * min(2, abs(int(round(drift))) or 1)
        nxt = int(np.clip(levels[-1] + step, -4, 11))
        levels.append(nxt)
    levels[-1] = int(cadence_l)
    return levels


def _make_song(rng, song_id, meter, title):
    unit, upb = METER_UNIT[meter]
    patterns = BAR_PATTERNS[upb]
    if rng.random() < P_REUSE_RHYTHM:
        patterns = tuple(patterns[i] for i in rng.choice(len(patterns), size=2, replace=False))

    n_phrases = _weighted(rng, N_PHRASES)
    tonal_center = int(rng.integers(0, 3)) * 2  # tonic, third or fifth register
    off_grid = False
    lines = []
    last_cadence = tonal_center
    mid_rest_phrase = (
        int(rng.integers(1, n_phrases)) if n_phrases > 1 and rng.random() < P_MID_REST_SONG else -1
    )

    for pi in range(n_phrases):
        bars = _weighted(rng, PHRASE_BARS)
        if off_grid:
            shift_back = rng.random() < P_BACK_ONGRID
        else:
            shift_back = False
        go_off = (not off_grid) and rng.random() < P_GO_OFFGRID
        units = bars * upb
        if go_off:
            units += upb // 2
            off_grid = True
        elif off_grid and shift_back:
            units += upb - upb // 2 if rng.random() < 0.5 else -(upb // 2)
            off_grid = False

        cadence_units = max(upb // 2, 2)
        rest_units = 0
        if pi < n_phrases - 1 and rng.random() < P_REST_AFTER_PHRASE:
            rest_units = int(rng.integers(1, max(2, cadence_units // 2) + 1))
        body = _phrase_body(rng, units - cadence_units, patterns)

        if pi == 0:
            start_l = tonal_center
        elif rng.random() < P_SMOOTH_START:
            start_l = int(np.clip(last_cadence + int(rng.integers(-1, 2)), -4, 11))
        else:
            jump = int(rng.choice((-4, -3, -2, 2, 3, 4, 5), p=(0.1, 0.15, 0.1, 0.15, 0.2, 0.2, 0.1)))
            start_l = int(np.clip(last_cadence + jump, -4, 11))
        cad_off = _weighted(rng, CADENCE_DEGREES)
        cadence_l = int(np.clip(tonal_center + cad_off - (7 if tonal_center + cad_off > 9 else 0), -4, 11))
        levels = _melody(rng, len(body) + 1, start_l, cadence_l)
        last_cadence = cadence_l

        events = []  # (is_rest, level, accidental, units); totals stay exact
        for i, d in enumerate(body):
            acc = ""
            if rng.random() < P_ACCIDENTAL:
                acc = "#" if rng.random() < 0.5 else "b"
            if d >= 2 and i > 0 and rng.random() < P_ORNAMENT:
                leap = int(np.clip(levels[i] + rng.choice((-5, -4, 4, 5)), -4, 11))
                events.append((False, levels[i], acc, d - 1))
                events.append((False, leap, "", 1))
            else:
                events.append((False, levels[i], acc, d))
        events.append((False, levels[-1], "", cadence_units - rest_units))
        if rest_units:
            events.append((True, 0, "", rest_units))

        if pi == mid_rest_phrase:
            eligible = [
                j for j in range(1, len(events) - 1)
                if not events[j][0] and events[j][3] >= 2
            ]
            if eligible:
                j = eligible[int(rng.integers(len(eligible)))]
                is_rest, lvl, acc, d = events[j]
                events[j] = (is_rest, lvl, acc, d - 1)
                events.insert(j + 1, (True, 0, "", 1))

        if pi == n_phrases - 1 and rng.random() < P_TRAILING_REST:
            events.append((True, 0, "", int(rng.integers(2, 4))))

        tokens = [
            "0" + "_" * (units_ - 1) if is_rest else _degree_token(lvl, acc, units_, rng)
            for is_rest, lvl, acc, units_ in events
        ]
        lines.append(" ".join(tokens))

    tonic = _weighted(rng, sorted(TONIC_WEIGHTS.items()))
    body = "\n    ".join(lines)
    return f"CUT[{title}]\nKEY[{song_id} {unit:02d} {tonic} {meter}]\nMEL[{body} //]\n"


BAD_RECORDS = (
    "CUT[Free meter reject]\nKEY[BAD001 08 C FREI]\nMEL[1_2_3_ //]\n",
    "CUT[Unknown token reject]\nKEY[BAD002 08 G 4/4]\nMEL[1_2_9_ //]\n",
    "CUT[Missing key reject]\nMEL[1_2_3_ //]\n",
)


def meter_counts(n_songs: int) -> dict[str, int]:
    """Deterministic per-group counts matching the target fractions."""
    counts = {g: int(round(w * n_songs)) for g, w in METER_WEIGHTS.items()}
    drift = n_songs - sum(counts.values())
    counts["4/4"] += drift
    return counts


def make_esac(n_songs: int = 6236, seed: int = 1995, include_bad: bool = True) -> str:
    """Full synthetic corpus as EsAC text; optionally appends a few malformed
    records so ingest reject reporting has something to show."""
    rng = np.random.default_rng(seed)
    meters = []
    for group, count in meter_counts(n_songs).items():
        if group == "other":
            meters.extend(OTHER_METERS[i % len(OTHER_METERS)] for i in range(count))
        else:
            meters.extend([group] * count)
    rng.shuffle(meters)

    records = []
    for i, meter in enumerate(meters, start=1):
        records.append(_make_song(rng, f"S{i:05d}", meter, f"Tune {i:05d}"))
    if include_bad:
        records.extend(BAD_RECORDS)
    return "\n".join(records)
