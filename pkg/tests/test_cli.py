import json
import os

import numpy as np
import pytest

from phraseseg import cli
from phraseseg.corpus import load_corpus
from phraseseg.segmenter import prediction_from_json
from phraseseg.trainer import load_checkpoint

TINY_CFG = """
# tiny settings for test runs
hidden_dim = 16
embed_dim = 8
epochs = 1
patience = 5
lr_grid = [0.002]
batch_grid = [8]
seqlen_grid = [64]
k = 2
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    assert cli.main(["make-corpus", str(root / "synth.esac"), "--songs", "400", "--gen-seed", "5"]) == 0
    assert cli.main(["ingest", str(root / "synth.esac"), str(root / "corpus.jsonl")]) == 0
    assert cli.main(["split", str(root / "corpus.jsonl"), str(root / "split.json")]) == 0
    return root


def test_ingest_outputs(workdir, capsys):
    songs = load_corpus(workdir / "corpus.jsonl")
    assert len(songs) == 400
    meta = json.loads((workdir / "corpus.jsonl.meta.json").read_text())
    assert meta["n_songs"] == 400
    assert meta["n_rejects"] == 3
    assert {r["reason"] for r in meta["rejects"]} >= {"non-numeric meter 'FREI'"}
    assert abs(sum(meta["meter_distribution"].values()) - 100.0) < 1e-6
    assert "run_config" in meta


def test_ingest_empty_file_fails(tmp_path):
    empty = tmp_path / "empty.esac"
    empty.write_text("")
    out = tmp_path / "corpus.jsonl"
    assert cli.main(["ingest", str(empty), str(out)]) == 1
    assert not out.exists()


def test_split_file(workdir):
    obj = json.loads((workdir / "split.json").read_text())
    total = len(obj["train"]) + len(obj["validation"]) + len(obj["test"])
    assert total == 400
    assert len(obj["test"]) == 40
    assert not set(obj["train"]) & set(obj["test"])
    assert obj["meta"]["corpus_sha256"]


def test_config_file_controls_training(workdir):
    out = workdir / "single.ckpt"
    rc = cli.main(
        [
            "train",
            str(workdir / "corpus.jsonl"),
            str(workdir / "split.json"),
            str(out),
            "--config",
            str(workdir / "tiny.cfg"),
            "--lr",
            "0.002",
            "--batch-size",
            "8",
            "--seq-len",
            "64",
            "--log",
            str(workdir / "train_log.csv"),
        ]
    )
    assert rc == 0
    ckpt = load_checkpoint(out)
    assert ckpt.params.hidden_dim == 16
    assert ckpt.params.embed_dim == 8
    log = (workdir / "train_log.csv").read_text().strip().splitlines()
    assert log[0] == "epoch,train_nll,val_nll,seconds"
    assert len(log) == 2


def test_unknown_config_key_fails(workdir, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_knob = 1\n")
    rc = cli.main(
        ["split", str(workdir / "corpus.jsonl"), str(tmp_path / "s.json"), "--config", str(bad)]
    )
    assert rc == 1


def test_baseline_and_eval(workdir):
    preds = workdir / "pause.jsonl"
    assert cli.main(["baseline", str(workdir / "corpus.jsonl"), str(preds), "--rule", "pause"]) == 0
    report_path = workdir / "pause_report.json"
    rc = cli.main(
        [
            "eval",
            str(workdir / "corpus.jsonl"),
            str(preds),
            str(report_path),
            "--figures",
            str(workdir / "figs"),
        ]
    )
    assert rc == 0
    obj = json.loads(report_path.read_text())
    res = obj["results"]
    assert res["n_songs"] == 400
    assert 90 <= res["precision"] <= 100
    assert obj["meta"]["corpus_sha256"]
    assert (workdir / "pause_report_buckets.csv").exists()
    assert (workdir / "figs" / "buckets.png").exists()
    assert (workdir / "figs" / "per_meter.png").exists()


def test_segment_with_single_checkpoint(workdir):
    preds_path = workdir / "model_preds.jsonl"
    rc = cli.main(
        [
            "segment",
            str(workdir / "corpus.jsonl"),
            str(workdir / "single.ckpt"),
            str(preds_path),
            "--split",
            str(workdir / "split.json"),
            "--subset",
            "test",
        ]
    )
    assert rc == 0
    lines = preds_path.read_text().strip().splitlines()
    assert len(lines) == 40
    pred = prediction_from_json(lines[0])
    assert pred.source == "model"
    assert all(i >= 1 for i in pred.note_indices)


def test_segment_constraints_flag(workdir):
    out = workdir / "unconstrained.jsonl"
    rc = cli.main(
        [
            "segment",
            str(workdir / "corpus.jsonl"),
            str(workdir / "single.ckpt"),
            str(out),
            "--split",
            str(workdir / "split.json"),
            "--constraints",
            "none",
        ]
    )
    assert rc == 0
    preds = [prediction_from_json(l) for l in out.read_text().strip().splitlines()]
    assert all(not p.forced for p in preds)


def test_curve_exports(workdir):
    songs = load_corpus(workdir / "corpus.jsonl")
    sid = songs[0].id
    out = workdir / "curve.csv"
    rc = cli.main(
        [
            "curve",
            str(workdir / "corpus.jsonl"),
            str(workdir / "single.ckpt"),
            sid,
            str(out),
            "--frames-csv",
            str(workdir / "frames.csv"),
            "--figures",
            str(workdir / "figs"),
        ]
    )
    assert rc == 0
    header = out.read_text().splitlines()[0]
    assert header == "frame,raw_nll,normalized,bar_flag,is_peak"
    fheader = (workdir / "frames.csv").read_text().splitlines()[0]
    assert fheader == "frame,ch1,ch2,ch3,ch4,bar_flag,note_idx"
    assert (workdir / "figs" / f"curve_{sid}.png").exists()


def test_curve_unknown_song(workdir):
    rc = cli.main(
        ["curve", str(workdir / "corpus.jsonl"), str(workdir / "single.ckpt"),
         "NOPE", str(workdir / "x.csv")]
    )
    assert rc == 1


@pytest.fixture(scope="module")
def pipeline_dir(workdir):
    out = workdir / "run1"
    songs = load_corpus(workdir / "corpus.jsonl")
    rc = cli.main(
        [
            "pipeline",
            str(workdir / "corpus.jsonl"),
            str(out),
            "--config",
            str(workdir / "tiny.cfg"),
            "--curve",
            songs[0].id,
            "--figures",
        ]
    )
    assert rc == 0
    return out


def test_pipeline_artifacts(pipeline_dir):
    assert (pipeline_dir / "split.json").exists()
    assert (pipeline_dir / "manifest_ensemble.json").exists()
    assert (pipeline_dir / "manifest_multi.json").exists()
    report = json.loads((pipeline_dir / "report.json").read_text())
    assert report["results"]["n_songs"] == 40
    assert report["meta"]["run_config"]["k"] == 2
    preds = (pipeline_dir / "predictions.jsonl").read_text().strip().splitlines()
    assert len(preds) == 40
    assert (pipeline_dir / "buckets.csv").exists()
    assert (pipeline_dir / "figures" / "buckets.png").exists()
    manifest = json.loads((pipeline_dir / "manifest_ensemble.json").read_text())
    assert set(manifest["groups"]) == {"4/4", "2/4", "3/4", "6/8", "3/8", "other"}
    assert all(len(m) == 2 for m in manifest["groups"].values())
    curves = list(pipeline_dir.glob("curve_*.csv"))
    assert len(curves) == 1


def test_ablate(workdir, pipeline_dir):
    import shutil

    shutil.copy(workdir / "single.ckpt", pipeline_dir / "single.ckpt")
    out = workdir / "ablation.json"
    rc = cli.main(
        [
            "ablate",
            str(workdir / "corpus.jsonl"),
            str(workdir / "split.json"),
            str(pipeline_dir),
            str(out),
        ]
    )
    assert rc == 0
    obj = json.loads(out.read_text())
    conditions = set(obj["conditions"])
    assert conditions == {
        "rule:pause",
        "rule:bar",
        "rule:bar+pause",
        "single-temp",
        "single-temp-no-pause",
        "single-temp-no-bars",
        "single-temp-no-bars-pause",
        "multi-temp",
        "ensemble-multi-temp",
    }
    for rep in obj["conditions"].values():
        assert rep["n_songs"] == 40


def test_ablate_missing_models(workdir, tmp_path):
    rc = cli.main(
        [
            "ablate",
            str(workdir / "corpus.jsonl"),
            str(workdir / "split.json"),
            str(tmp_path),
            str(tmp_path / "out.json"),
        ]
    )
    assert rc == 1
