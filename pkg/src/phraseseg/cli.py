"""phraseseg command line: corpus ingest through training, segmentation,
baselines, evaluation, ablation and plot-data export.

Every output artifact records the merged run configuration plus a sha256 of
its input corpus so results can be traced back to their inputs. A config
file is flat `key = value` lines with JSON literals; command-line flags win
over file values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import evaluation, figures, synthcorpus
from .corpus import (
    DEFAULT_ALPHA,
    corpus_sha256,
    load_corpus,
    meter_distribution,
    parse_esac,
    save_corpus,
    songs_in_group,
    split_corpus,
)
from .ensemble import EnsembleSpec, load_manifest, save_manifest, segment_corpus
from .frames import frame_grid_rows, tokenize
from .segmenter import (
    SegmenterConfig,
    loss_curve,
    prediction_from_json,
    prediction_to_json,
    rule_segment,
    search_prominence,
    write_loss_curve_csv,
)
from .trainer import (
    ModelCheckpoint,
    TrainConfig,
    default_grid,
    grid_search,
    load_checkpoint,
    save_checkpoint,
    train,
)

METER_GROUP_ORDER = ("4/4", "2/4", "3/4", "6/8", "3/8", "other")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 17
    alpha: int = DEFAULT_ALPHA
    jobs: int = 0  # 0 = use all cores
    test_fraction: float = 0.10
    validation_fraction: float = 0.10
    lr_grid: tuple = (1e-2, 1e-3, 3e-4)
    batch_grid: tuple = (16, 64)
    seqlen_grid: tuple = (64, 256)
    epochs: int = 50
    patience: int = 5
    embed_dim: int = 32
    hidden_dim: int = 128
    dropout: float = 0.2
    k: int = 5
    a: float = 1.0
    b: float = 1.0
    skip_prefix: int = -1  # -1: one bar
    pause_delta: int = -1  # -1: one quarter note
    constraints: str = "pause,bar"
    binary_search_iters: int = 24
    rvalue_variant: str = "rasanen"
    bucket_width: int = 10

    def segmenter_config(self, constraints: str | None = None) -> SegmenterConfig:
        spec = self.constraints if constraints is None else constraints
        names = frozenset(c for c in spec.split(",") if c and c != "none")
        return SegmenterConfig(
            a=self.a,
            b=self.b,
            skip_prefix=None if self.skip_prefix < 0 else self.skip_prefix,
            pause_delta=None if self.pause_delta < 0 else self.pause_delta,
            constraints=names,
            binary_search_iters=self.binary_search_iters,
        )

    def train_config(self, **overrides) -> TrainConfig:
        base = dict(
            alpha=self.alpha,
            epochs=self.epochs,
            patience=self.patience,
            seed=self.seed,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            dropout=self.dropout,
        )
        base.update(overrides)
        return TrainConfig(**base)


class CliError(RuntimeError):
    pass


def parse_config_file(path) -> dict:
    values = {}
    known = {f.name for f in fields(RunConfig)}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = json.loads(raw)
            except json.JSONDecodeError:
                values[key] = raw
    return values


def build_run_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    for key in ("lr_grid", "batch_grid", "seqlen_grid"):
        if key in values:
            values[key] = tuple(values[key])
    return RunConfig(**values)


def artifact_meta(rc: RunConfig, corpus_path) -> dict:
    return {
        "run_config": asdict(rc),
        "corpus_sha256": corpus_sha256(corpus_path),
    }


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def load_split(path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def subset_songs(songs, split_obj, subset: str):
    if subset == "all":
        return list(songs)
    ids = set(split_obj[subset])
    return [s for s in songs if s.id in ids]


def effective_jobs(rc: RunConfig) -> int:
    return rc.jobs if rc.jobs > 0 else (os.cpu_count() or 1)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_make_corpus(args, rc: RunConfig):
    text = synthcorpus.make_esac(
        n_songs=args.songs, seed=args.gen_seed, include_bad=not args.clean
    )
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(text)
    print(f"wrote {args.out} ({args.songs} synthetic songs)")
    return 0


def cmd_ingest(args, rc: RunConfig):
    with open(args.esac, encoding="utf-8") as f:
        text = f.read()
    result = parse_esac(text, alpha=rc.alpha)
    if not result.songs:
        raise CliError(f"no parseable songs in {args.esac}")
    save_corpus(result.songs, args.out)
    dist = meter_distribution(result.songs)
    meta = {
        "run_config": asdict(rc),
        "input_sha256": corpus_sha256(args.esac),
        "n_songs": len(result.songs),
        "n_rejects": len(result.rejects),
        "rejects": [
            {"record_id": r.record_id, "position": r.position, "reason": r.reason}
            for r in result.rejects
        ],
        "meter_distribution": {g: round(100 * v, 4) for g, v in dist.items()},
    }
    write_json(args.out + ".meta.json", meta)
    print(f"ingested {len(result.songs)} songs ({len(result.rejects)} rejects)")
    print(f"{'meter':>8s}  {'share':>7s}")
    for g in METER_GROUP_ORDER:
        print(f"{g:>8s}  {100 * dist[g]:6.2f}%")
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        figures.save_meter_figure(os.path.join(args.figures, "meter_distribution.png"), dist)
    return 0


def cmd_split(args, rc: RunConfig):
    songs = load_corpus(args.corpus)
    split = split_corpus(
        songs,
        seed=rc.seed,
        validation_fraction=rc.validation_fraction,
        test_fraction=rc.test_fraction,
    )
    obj = {
        "train": list(split.train),
        "validation": list(split.validation),
        "test": list(split.test),
        "meta": artifact_meta(rc, args.corpus),
    }
    write_json(args.out, obj)
    print(
        f"split {len(songs)} songs: train={len(split.train)} "
        f"validation={len(split.validation)} test={len(split.test)}"
    )
    return 0


def cmd_train(args, rc: RunConfig):
    songs = load_corpus(args.corpus)
    split_obj = load_split(args.split)
    tr = songs_in_group(subset_songs(songs, split_obj, "train"), args.meter_group)
    va = songs_in_group(subset_songs(songs, split_obj, "validation"), args.meter_group)
    cfg = rc.train_config(
        meter_group=args.meter_group,
        preprocessing=args.preprocessing,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_seq_len=args.seq_len,
    )
    ckpt = train(tr, va, cfg, log_path=args.log)
    save_checkpoint(ckpt, args.out)
    print(f"trained {args.meter_group}: validation NLL {ckpt.validation_nll:.4f} -> {args.out}")
    return 0


def _grid_for(rc: RunConfig, groups, preprocessings):
    grid = []
    for group in groups:
        for prep in preprocessings:
            base = rc.train_config(meter_group=group, preprocessing=prep)
            grid.extend(default_grid(base, rc.lr_grid, rc.batch_grid, rc.seqlen_grid))
    return grid


def cmd_grid(args, rc: RunConfig):
    songs = load_corpus(args.corpus)
    split_obj = load_split(args.split)
    tr = subset_songs(songs, split_obj, "train")
    va = subset_songs(songs, split_obj, "validation")
    groups = args.meters.split(",") if args.meters else ["all"]
    preps = args.preprocessings.split(",")
    os.makedirs(args.outdir, exist_ok=True)

    best = grid_search(tr, va, _grid_for(rc, groups, preps), jobs=effective_jobs(rc))
    summary = {"cells": [], "meta": artifact_meta(rc, args.corpus)}
    for (group, prep), ckpt in sorted(best.items()):
        name = f"{group.replace('/', '-')}_{prep}.ckpt"
        save_checkpoint(ckpt, os.path.join(args.outdir, name))
        summary["cells"].append(
            {
                "meter_group": group,
                "preprocessing": prep,
                "checkpoint": name,
                "validation_nll": ckpt.validation_nll,
                "learning_rate": ckpt.config.learning_rate,
                "batch_size": ckpt.config.batch_size,
                "max_seq_len": ckpt.config.max_seq_len,
            }
        )
        print(
            f"{group} {prep}: best lr={ckpt.config.learning_rate} "
            f"batch={ckpt.config.batch_size} seq={ckpt.config.max_seq_len} "
            f"val={ckpt.validation_nll:.4f}"
        )
    write_json(os.path.join(args.outdir, "grid_summary.json"), summary)
    return 0


def _load_models(path, rc: RunConfig, constraints: str | None) -> EnsembleSpec:
    cfg = rc.segmenter_config(constraints)
    if path.endswith(".ckpt"):
        return EnsembleSpec(members={"other": [(load_checkpoint(path), cfg)]})
    return load_manifest(path, constraints=cfg.constraints)


def cmd_segment(args, rc: RunConfig):
    songs = load_corpus(args.corpus)
    if args.split:
        songs = subset_songs(songs, load_split(args.split), args.subset)
    spec = _load_models(args.models, rc, args.constraints)
    preds = segment_corpus(spec, songs)
    with open(args.out, "w", encoding="utf-8") as f:
        for p in preds:
            f.write(prediction_to_json(p) + "\n")
    write_json(args.out + ".meta.json", artifact_meta(rc, args.corpus))
    print(f"segmented {len(preds)} songs -> {args.out}")
    return 0


def cmd_baseline(args, rc: RunConfig):
    songs = load_corpus(args.corpus)
    if args.split:
        songs = subset_songs(songs, load_split(args.split), args.subset)
    preds = [rule_segment(s, args.rule) for s in songs]
    with open(args.out, "w", encoding="utf-8") as f:
        for p in preds:
            f.write(prediction_to_json(p) + "\n")
    write_json(args.out + ".meta.json", artifact_meta(rc, args.corpus))
    print(f"{args.rule} baseline on {len(preds)} songs -> {args.out}")
    return 0


def _evaluate_files(corpus_path, preds_path, rc: RunConfig, split_path=None, subset="all"):
    songs = load_corpus(corpus_path)
    if split_path:
        songs = subset_songs(songs, load_split(split_path), subset)
    with open(preds_path, encoding="utf-8") as f:
        preds = [prediction_from_json(line) for line in f if line.strip()]
    return songs, evaluation.evaluate(
        preds,
        songs,
        rvalue_variant=rc.rvalue_variant,
        bucket_width=rc.bucket_width,
    )


def cmd_eval(args, rc: RunConfig):
    songs, report = _evaluate_files(args.corpus, args.preds, rc, args.split, args.subset)
    obj = {"results": evaluation.report_to_dict(report), "meta": artifact_meta(rc, args.corpus)}
    write_json(args.out, obj)
    buckets_csv = args.buckets_csv or os.path.splitext(args.out)[0] + "_buckets.csv"
    evaluation.write_buckets_csv(buckets_csv, report)
    r = obj["results"]
    print(
        f"P={r['precision']} R={r['recall']} F={r['f_score']} "
        f"R-value={r['r_value']} on {r['n_songs']} songs"
    )
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        figures.save_bucket_figure(os.path.join(args.figures, "buckets.png"), report)
        figures.save_per_meter_figure(os.path.join(args.figures, "per_meter.png"), report)
    return 0


def cmd_curve(args, rc: RunConfig):
    songs = load_corpus(args.corpus)
    match = [s for s in songs if s.id == args.song_id]
    if not match:
        raise CliError(f"song id {args.song_id!r} not in corpus")
    song = match[0]
    ckpt = load_checkpoint(args.checkpoint)
    seq = tokenize(song, rc.alpha)
    cfg = rc.segmenter_config(args.constraints)
    curve = loss_curve(ckpt, seq, cfg)
    _, peaks = search_prominence(curve.normalized, seq.n_bars // 2, cfg.binary_search_iters)
    write_loss_curve_csv(args.out, seq, curve, peaks)
    print(f"loss curve for {song.id} -> {args.out}")
    if args.frames_csv:
        with open(args.frames_csv, "w", encoding="utf-8") as f:
            f.write("frame,ch1,ch2,ch3,ch4,bar_flag,note_idx\n")
            for row in frame_grid_rows(seq):
                f.write(",".join(str(x) for x in row) + "\n")
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        figures.save_loss_curve_figure(
            os.path.join(args.figures, f"curve_{song.id}.png"),
            seq,
            curve,
            peaks,
            sorted(song.gold_boundaries),
        )
    return 0


def _eval_predictions(preds, songs, rc: RunConfig):
    return evaluation.evaluate(
        preds, songs, rvalue_variant=rc.rvalue_variant, bucket_width=rc.bucket_width
    )


def cmd_ablate(args, rc: RunConfig):
    songs = load_corpus(args.corpus)
    split_obj = load_split(args.split)
    test = subset_songs(songs, split_obj, "test")

    rows = {}
    for rule in ("pause", "bar", "bar+pause"):
        preds = [rule_segment(s, rule) for s in test]
        rows[f"rule:{rule}"] = _eval_predictions(preds, test, rc)

    single_path = os.path.join(args.models, "single.ckpt")
    conditions = [
        ("single-temp", single_path, "pause,bar"),
        ("single-temp-no-pause", single_path, "bar"),
        ("single-temp-no-bars", single_path, "pause"),
        ("single-temp-no-bars-pause", single_path, "none"),
        ("multi-temp", os.path.join(args.models, "manifest_multi.json"), "pause,bar"),
        ("ensemble-multi-temp", os.path.join(args.models, "manifest_ensemble.json"), "pause,bar"),
    ]
    missing = [path for _, path, _ in conditions if not os.path.exists(path)]
    if missing:
        raise CliError(f"missing model artifacts: {sorted(set(missing))}")
    for label, path, constraints in conditions:
        spec = _load_models(path, rc, constraints)
        rows[label] = _eval_predictions(segment_corpus(spec, test), test, rc)

    obj = {
        "conditions": {k: evaluation.report_to_dict(v) for k, v in rows.items()},
        "meta": artifact_meta(rc, args.corpus),
    }
    write_json(args.out, obj)
    print(f"{'condition':>28s} {'P':>7s} {'R':>7s} {'F':>7s} {'Rv':>7s}")
    for label, rep in rows.items():
        d = evaluation.report_to_dict(rep)
        print(
            f"{label:>28s} {d['precision']:7.2f} {d['recall']:7.2f} "
            f"{d['f_score']:7.2f} {d['r_value'] if d['r_value'] is not None else float('nan'):7.2f}"
        )
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        figures.save_per_meter_figure(
            os.path.join(args.figures, "ablate_ensemble_per_meter.png"),
            rows["ensemble-multi-temp"],
        )
    return 0


def cmd_pipeline(args, rc: RunConfig):
    songs = load_corpus(args.corpus)
    os.makedirs(args.outdir, exist_ok=True)
    ckpt_dir = os.path.join(args.outdir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)

    split = split_corpus(
        songs,
        seed=rc.seed,
        validation_fraction=rc.validation_fraction,
        test_fraction=rc.test_fraction,
    )
    split_obj = {
        "train": list(split.train),
        "validation": list(split.validation),
        "test": list(split.test),
        "meta": artifact_meta(rc, args.corpus),
    }
    write_json(os.path.join(args.outdir, "split.json"), split_obj)
    tr = subset_songs(songs, split_obj, "train")
    va = subset_songs(songs, split_obj, "validation")
    te = subset_songs(songs, split_obj, "test")

    groups = args.meters.split(",") if args.meters else list(METER_GROUP_ORDER)
    if args.meters:
        te = [s for s in te if s.meter_group in groups]

    preps = ("transpose-augment", "key-normalize")
    best = grid_search(tr, va, _grid_for(rc, groups, [preps[0]]), jobs=effective_jobs(rc))

    members = {}
    for group in groups:
        base = best[(group, preps[0])].config
        members[group] = []
        for i in range(rc.k):
            cfg = replace(
                base,
                seed=rc.seed + 100 + i,
                preprocessing=preps[i % len(preps)],
            )
            ckpt = train(songs_in_group(tr, group), songs_in_group(va, group), cfg)
            name = f"{group.replace('/', '-')}_{i}.ckpt"
            save_checkpoint(ckpt, os.path.join(ckpt_dir, name))
            members[group].append((os.path.join("checkpoints", name), rc.segmenter_config()))
            print(f"member {group}[{i}] val={ckpt.validation_nll:.4f}", flush=True)

    manifest_path = os.path.join(args.outdir, "manifest_ensemble.json")
    save_manifest(manifest_path, members, meta=artifact_meta(rc, args.corpus))
    save_manifest(
        os.path.join(args.outdir, "manifest_multi.json"),
        {g: m[:1] for g, m in members.items()},
        meta=artifact_meta(rc, args.corpus),
    )

    spec = load_manifest(manifest_path)
    preds = segment_corpus(spec, te)
    preds_path = os.path.join(args.outdir, "predictions.jsonl")
    with open(preds_path, "w", encoding="utf-8") as f:
        for p in preds:
            f.write(prediction_to_json(p) + "\n")

    report = _eval_predictions(preds, te, rc)
    obj = {"results": evaluation.report_to_dict(report), "meta": artifact_meta(rc, args.corpus)}
    write_json(os.path.join(args.outdir, "report.json"), obj)
    evaluation.write_buckets_csv(os.path.join(args.outdir, "buckets.csv"), report)

    if args.curve:
        match = [s for s in te if s.id == args.curve] or [s for s in songs if s.id == args.curve]
        if not match:
            raise CliError(f"--curve id {args.curve!r} not in corpus")
        song = match[0]
        seq = tokenize(song, rc.alpha)
        scfg = rc.segmenter_config()
        member = spec.group_members(song.meter_group)[0]
        curve = loss_curve(member[0], seq, scfg)
        _, peaks = search_prominence(curve.normalized, seq.n_bars // 2, scfg.binary_search_iters)
        write_loss_curve_csv(os.path.join(args.outdir, f"curve_{song.id}.csv"), seq, curve, peaks)

    if args.figures:
        fig_dir = os.path.join(args.outdir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        figures.save_bucket_figure(os.path.join(fig_dir, "buckets.png"), report)
        figures.save_per_meter_figure(os.path.join(fig_dir, "per_meter.png"), report)

    r = obj["results"]
    print(
        f"pipeline done: P={r['precision']} R={r['recall']} F={r['f_score']} "
        f"R-value={r['r_value']} on {r['n_songs']} test songs"
    )
    return 0


# --------------------------------------------------------------------------
# Argument wiring
# --------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--rvalue-variant", dest="rvalue_variant", choices=("rasanen", "paper-eq"), default=None)
    p.add_argument("--alpha", type=int, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="phraseseg", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-corpus", help="write a synthetic EsAC corpus")
    p.add_argument("out")
    p.add_argument("--songs", type=int, default=6236)
    p.add_argument("--gen-seed", type=int, default=1995)
    p.add_argument("--clean", action="store_true", help="omit the malformed demo records")
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("ingest", help="parse EsAC text into the canonical corpus")
    p.add_argument("esac")
    p.add_argument("out")
    p.add_argument("--figures", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="deterministic train/validation/test split")
    p.add_argument("corpus")
    p.add_argument("out")
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float, default=None)
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("corpus")
    p.add_argument("split")
    p.add_argument("out")
    p.add_argument("--meter-group", default="all")
    p.add_argument("--preprocessing", default="transpose-augment",
                   choices=("transpose-augment", "key-normalize"))
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seq-len", type=int, default=256)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--log", default=None, help="training log CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="grid search per meter group")
    p.add_argument("corpus")
    p.add_argument("split")
    p.add_argument("outdir")
    p.add_argument("--meters", default=None, help="comma list, default: one global group")
    p.add_argument("--preprocessings", default="transpose-augment")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("segment", help="model segmentation of a corpus")
    p.add_argument("corpus")
    p.add_argument("models", help="ensemble manifest JSON or a single .ckpt")
    p.add_argument("out")
    p.add_argument("--split", default=None)
    p.add_argument("--subset", default="test", choices=("train", "validation", "test", "all"))
    p.add_argument("--constraints", default=None, help="e.g. 'pause,bar', 'bar', 'none'")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("baseline", help="rule-only segmentation")
    p.add_argument("corpus")
    p.add_argument("out")
    p.add_argument("--rule", required=True, choices=("pause", "bar", "bar+pause"))
    p.add_argument("--split", default=None)
    p.add_argument("--subset", default="all", choices=("train", "validation", "test", "all"))
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="score predictions against gold boundaries")
    p.add_argument("corpus")
    p.add_argument("preds")
    p.add_argument("out")
    p.add_argument("--split", default=None)
    p.add_argument("--subset", default="all", choices=("train", "validation", "test", "all"))
    p.add_argument("--buckets-csv", dest="buckets_csv", default=None)
    p.add_argument("--bucket-width", dest="bucket_width", type=int, default=None)
    p.add_argument("--figures", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the standard ablation table")
    p.add_argument("corpus")
    p.add_argument("split")
    p.add_argument("models", help="directory with single.ckpt and manifests")
    p.add_argument("out")
    p.add_argument("--figures", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("curve", help="export one song's loss curve as CSV")
    p.add_argument("corpus")
    p.add_argument("checkpoint")
    p.add_argument("song_id")
    p.add_argument("out")
    p.add_argument("--constraints", default=None)
    p.add_argument("--frames-csv", dest="frames_csv", default=None,
                   help="also dump the frame grid (debug)")
    p.add_argument("--figures", default=None)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("pipeline", help="split, train ensembles, segment and evaluate")
    p.add_argument("corpus")
    p.add_argument("outdir")
    p.add_argument("--meters", default=None, help="restrict to these meter groups")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--curve", default=None, help="song id whose loss curve to export")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    for p in sub.choices.values():
        _add_common(p)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = build_run_config(args)
        return args.func(args, rc)
    except (CliError, OSError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
