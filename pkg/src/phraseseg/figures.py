"""Figure rendering for report artifacts; every plot lands next to its CSV
counterpart so the delimited data stays the primary interface."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curve_figure(path, seq, curve, peak_frames=(), gold_note_indices=()):
    """Raw and normalized prediction-error curves with bar lines, detected
    peaks and gold boundary onsets."""
    frames = np.arange(len(seq))
    fig, axes = plt.subplots(2, 1, figsize=(10, 5), sharex=True)
    for ax, values, label in (
        (axes[0], curve.raw, "raw NLL"),
        (axes[1], curve.normalized, "normalized"),
    ):
        ax.plot(frames, values, lw=0.9, color="tab:blue")
        ax.set_ylabel(label)
        for f in np.flatnonzero(seq.bar_start_flags):
            ax.axvline(f, color="0.85", lw=0.5, zorder=0)
    for f in peak_frames:
        axes[1].axvline(f, color="tab:red", lw=1.0, ls="--")
    for idx in gold_note_indices:
        onset = seq.onset_frame_of_note[idx]
        axes[1].axvline(onset, color="tab:green", lw=1.0, ls=":", alpha=0.8)
    axes[1].set_xlabel("frame")
    axes[0].set_title(seq.song_id)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_bucket_figure(path, report):
    """Mean precision and recall per note-count bucket."""
    buckets = [b for b in report.buckets if b["n"] > 0]
    if not buckets:
        return
    centers = [(b["lo"] + b["hi"]) / 2 for b in buckets]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(centers, [100 * b["mean_p"] for b in buckets], marker="o", label="precision")
    ax.plot(centers, [100 * b["mean_r"] for b in buckets], marker="s", label="recall")
    ax.set_xlabel("notes per song")
    ax.set_ylabel("percent")
    ax.set_ylim(0, 100)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_meter_figure(path, distribution: dict[str, float]):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    groups = list(distribution)
    ax.bar(groups, [100 * distribution[g] for g in groups], color="tab:blue")
    ax.set_ylabel("share of corpus (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_per_meter_figure(path, report):
    groups = list(report.per_meter)
    if not groups:
        return
    x = np.arange(len(groups))
    fig, ax = plt.subplots(figsize=(7, 4))
    for off, (attr, label) in enumerate(
        (("precision", "P"), ("recall", "R"), ("f_score", "F1"))
    ):
        vals = [100 * getattr(report.per_meter[g], attr) for g in groups]
        ax.bar(x + (off - 1) * 0.27, vals, width=0.27, label=label)
    ax.set_xticks(x, groups)
    ax.set_ylim(0, 100)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
