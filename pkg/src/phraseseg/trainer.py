"""Training harness: next-frame models per meter group, grid search over
learning rate / batch size / BPTT window, early stopping on validation NLL,
and a binary checkpoint format (JSON header + little-endian float32 blobs).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import nn
from .corpus import Song, normalize_key, songs_in_group
from .frames import UNASSIGNED, tokenize

CHECKPOINT_VERSION = 1


class TrainError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_seq_len: int = 256
    preprocessing: str = "transpose-augment"  # or "key-normalize"
    epochs: int = 50
    patience: int = 5
    seed: int = 0
    alpha: int = 16
    meter_group: str = "all"
    embed_dim: int = 32
    hidden_dim: int = 128
    dropout: float = 0.2
    transpose_range: int = 5
    fixed_transpose: int | None = None  # set to use one constant shift instead

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainError("learning_rate must be positive")
        if self.max_seq_len < 2:
            raise TrainError("max_seq_len must be at least 2")
        if self.preprocessing not in ("transpose-augment", "key-normalize"):
            raise TrainError(f"unknown preprocessing {self.preprocessing!r}")


@dataclass
class ModelCheckpoint:
    params: nn.ModelParams
    config: TrainConfig
    validation_nll: float
    format_version: int = CHECKPOINT_VERSION


# --------------------------------------------------------------------------
# Tokenized corpus prep
# --------------------------------------------------------------------------


def _prepare(songs, config: TrainConfig):
    """Token arrays (int16 so transposition shifts stay in range), lengths,
    and per-song safe transposition bounds."""
    if config.preprocessing == "key-normalize":
        songs = [normalize_key(s) for s in songs]
    tokens, bounds = [], []
    for song in songs:
        seq = tokenize(song, config.alpha)
        if len(seq) < 2:
            continue
        tokens.append(seq.tokens.astype(np.int16))
        pitched = seq.tokens[seq.tokens != UNASSIGNED]
        lo = -int(pitched.min()) if pitched.size else 0
        hi = 127 - int(pitched.max()) if pitched.size else 0
        bounds.append((max(lo, -config.transpose_range), min(hi, config.transpose_range)))
    return tokens, bounds


def _shift_tokens(tok: np.ndarray, shift: int) -> np.ndarray:
    if shift == 0:
        return tok
    return np.where(tok == UNASSIGNED, tok, tok + shift)


def _pad_batch(token_list) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([t.shape[0] for t in token_list])
    out = np.full((len(token_list), lengths.max(), nn.N_CHANNELS), UNASSIGNED, dtype=np.int16)
    for i, t in enumerate(token_list):
        out[i, : t.shape[0]] = t
    return out, lengths


def sequence_nlls(params, token_list, batch_size: int = 64, window: int = 512):
    """Eval-mode per-frame NLL for each sequence; entry j of a result is the
    loss of predicting frame j+1 (length T-1)."""
    out = [None] * len(token_list)
    order = sorted(range(len(token_list)), key=lambda i: token_list[i].shape[0])
    for lo in range(0, len(order), batch_size):
        chunk = order[lo : lo + batch_size]
        toks, lengths = _pad_batch([token_list[i] for i in chunk])
        losses = np.zeros((toks.shape[1] - 1, len(chunk)))
        h = c = None
        for w in range(0, toks.shape[1] - 1, window):
            piece = toks[:, w : w + window + 1]
            if piece.shape[1] < 2:
                break
            cache = nn.forward_batch(params, piece, np.clip(lengths - w, 0, piece.shape[1]), h0=h, c0=c)
            losses[w : w + cache.logits.shape[0]] = nn.nll_batch(cache)
            h, c = cache.h_last, cache.c_last
        for j, i in enumerate(chunk):
            out[i] = losses[: token_list[i].shape[0] - 1, j].copy()
    return out


def mean_nll(params, token_list, batch_size: int = 64) -> float:
    losses = sequence_nlls(params, token_list, batch_size=batch_size)
    total = sum(float(l.sum()) for l in losses)
    frames = sum(l.shape[0] for l in losses)
    if frames == 0:
        raise TrainError("no frames to evaluate")
    return total / frames


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


def train(train_songs, val_songs, config: TrainConfig, log_path=None) -> ModelCheckpoint:
    """Minimize next-frame NLL with mini-batch ADAM over truncated windows,
    keeping the epoch snapshot with the best validation NLL."""
    if not train_songs:
        raise TrainError("empty training set")
    if config.meter_group != "all":
        bad = [s.id for s in train_songs if s.meter_group != config.meter_group]
        if bad:
            raise TrainError(f"songs outside group {config.meter_group}: {bad[:3]}")

    tokens, bounds = _prepare(train_songs, config)
    val_tokens, _ = _prepare(val_songs, config) if val_songs else ([], [])
    if not tokens:
        raise TrainError("no trainable sequences after tokenization")

    ss = np.random.SeedSequence(config.seed)
    init_seed, shuffle_ss, drop_ss, aug_ss = ss.spawn(4)
    params = nn.init_params(
        config.embed_dim, config.hidden_dim, config.dropout, seed=init_seed
    )
    adam = nn.adam_init(params, config.learning_rate)
    rng_shuffle = np.random.default_rng(shuffle_ss)
    rng_drop = np.random.default_rng(drop_ss)
    rng_aug = np.random.default_rng(aug_ss)

    best_nll = np.inf
    best_params = params.copy()
    bad_epochs = 0
    log_rows = []

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng_shuffle.permutation(len(tokens))
        if config.preprocessing == "transpose-augment":
            if config.fixed_transpose is None:
                raw = rng_aug.integers(
                    -config.transpose_range, config.transpose_range + 1, size=len(tokens)
                )
                shifts = [
                    int(np.clip(raw[i], bounds[i][0], bounds[i][1])) for i in range(len(tokens))
                ]
            else:
                shifts = [
                    int(np.clip(config.fixed_transpose, bounds[i][0], bounds[i][1]))
                    for i in range(len(tokens))
                ]
        else:
            shifts = [0] * len(tokens)

        epoch_loss, epoch_frames = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            toks, lengths = _pad_batch([_shift_tokens(tokens[i], shifts[i]) for i in idx])
            h = c = None
            for w in range(0, toks.shape[1] - 1, config.max_seq_len):
                piece = toks[:, w : w + config.max_seq_len + 1]
                if piece.shape[1] < 2:
                    break
                piece_len = np.clip(lengths - w, 0, piece.shape[1])
                cache = nn.forward_batch(
                    params, piece, piece_len, train_mode=True, rng=rng_drop, h0=h, c0=c
                )
                n_pred = float(cache.mask.sum())
                if n_pred == 0:
                    break
                losses = nn.nll_batch(cache)
                if not np.isfinite(losses.sum()):
                    raise nn.NumericalError(f"non-finite loss at epoch {epoch}")
                grads = nn.backward_batch(params, cache, grad_scale=1.0 / n_pred)
                nn.adam_step(params, grads, adam)
                h, c = cache.h_last, cache.c_last
                epoch_loss += float(losses.sum())
                epoch_frames += int(n_pred)

        val_nll = mean_nll(params, val_tokens) if val_tokens else epoch_loss / max(epoch_frames, 1)
        log_rows.append((epoch, epoch_loss / max(epoch_frames, 1), val_nll, time.perf_counter() - t0))

        if val_nll < best_nll:
            best_nll = val_nll
            best_params = params.copy()
            bad_epochs = 0
        else:
            bad_epochs += 1
        if bad_epochs >= config.patience:
            break

    if log_path:
        with open(log_path, "w", encoding="utf-8") as f:
            f.write("epoch,train_nll,val_nll,seconds\n")
            for row in log_rows:
                f.write(f"{row[0]},{row[1]:.6f},{row[2]:.6f},{row[3]:.3f}\n")

    return ModelCheckpoint(params=best_params, config=config, validation_nll=float(best_nll))


# --------------------------------------------------------------------------
# Grid search
# --------------------------------------------------------------------------


def _train_cell(args):
    train_songs, val_songs, config = args
    try:
        ckpt = train(train_songs, val_songs, config)
        return config, ckpt.validation_nll, ckpt
    except nn.NumericalError:
        return config, float("inf"), None


def grid_search(train_songs, val_songs, grid, jobs: int = 1):
    """Train every config, keep the best (lowest validation NLL) checkpoint
    per (meter_group, preprocessing); ties break on (lr, batch, seq_len)."""
    if not grid:
        raise TrainError("empty grid")
    tasks = []
    for config in grid:
        tr = songs_in_group(train_songs, config.meter_group)
        va = songs_in_group(val_songs, config.meter_group)
        tasks.append((tr, va, config))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_cell, tasks))
    else:
        results = [_train_cell(t) for t in tasks]

    best = {}
    for config, val_nll, ckpt in results:
        key = (config.meter_group, config.preprocessing)
        rank = (val_nll, config.learning_rate, config.batch_size, config.max_seq_len)
        if ckpt is not None and (key not in best or rank < best[key][0]):
            best[key] = (rank, ckpt)
    if not best:
        raise TrainError("every grid cell diverged")
    return {key: ckpt for key, (rank, ckpt) in best.items()}


def default_grid(base: TrainConfig, lrs=(1e-2, 1e-3, 3e-4), batches=(16, 64), seq_lens=(64, 256)):
    return [
        replace(base, learning_rate=lr, batch_size=bs, max_seq_len=sl)
        for lr in lrs
        for bs in batches
        for sl in seq_lens
    ]


# --------------------------------------------------------------------------
# Checkpoint serialization
# --------------------------------------------------------------------------


def save_checkpoint(ckpt: ModelCheckpoint, path):
    tensors = ckpt.params.tensors()
    for name, t in tensors.items():
        if t.dtype != np.float32:
            raise TrainError(f"checkpoint tensors must be float32, {name} is {t.dtype}")
    layout, offset = [], 0
    for name, t in tensors.items():
        nbytes = t.size * 4
        layout.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = {
        "format_version": ckpt.format_version,
        "config": asdict(ckpt.config),
        "dims": {
            "embed_dim": ckpt.params.embed_dim,
            "hidden_dim": ckpt.params.hidden_dim,
            "vocab": nn.VOCAB,
        },
        "dropout_rate": ckpt.params.dropout_rate,
        "validation_nll": ckpt.validation_nll,
        "tensors": layout,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        f.write(b"\n")
        for t in tensors.values():
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        blob = f.read()
    if header["format_version"] != CHECKPOINT_VERSION:
        raise TrainError(f"unsupported checkpoint version {header['format_version']}")
    tensors = {}
    for spec in header["tensors"]:
        n = spec["nbytes"] // 4
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=spec["offset"])
        tensors[spec["name"]] = arr.reshape(spec["shape"]).copy()
    params = nn.ModelParams(**tensors, dropout_rate=header["dropout_rate"])
    config = TrainConfig(**header["config"])
    return ModelCheckpoint(
        params=params,
        config=config,
        validation_nll=header["validation_nll"],
        format_version=header["format_version"],
    )
