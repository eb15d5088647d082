"""Matplotlib rendering for reports: score histograms, learning curves,
and relative-cost bars. Everything writes PNG files next to the delimited
outputs; nothing here ever opens a window."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .scoring import ScoreHistogram
from .simlab import LearningCurve


def render_histograms(histograms: dict[str, ScoreHistogram], out_path: str | Path) -> Path:
    """One axes, one stepped line per model, over the shared [-1, 1] range."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for model_id, hist in sorted(histograms.items()):
        centers = [(a + b) / 2 for a, b in zip(hist.bin_edges[:-1], hist.bin_edges[1:])]
        ax.step(centers, hist.counts, where="mid", label=f"{model_id} (mean={hist.mean:.3f})")
    ax.set_xlabel("pair similarity")
    ax.set_ylabel("pairs")
    ax.set_xlim(-1.05, 1.05)
    ax.legend(loc="upper left", fontsize=8)
    ax.set_title("True-pair similarity distribution")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_curves(curves: list[LearningCurve], out_path: str | Path, target: float | None = None) -> Path:
    """Samples-consumed vs alignment, one line per (strategy, seed)."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for curve in curves:
        xs = [p[0] for p in curve.points]
        ys = [p[1] for p in curve.points]
        ax.plot(xs, ys, label=f"{curve.strategy} seed={curve.seed}", alpha=0.8)
    if target is not None:
        ax.axhline(target, color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("training samples consumed")
    ax.set_ylabel("clean-pair alignment")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_relative_flops(relative_by_label: dict[str, float], out_path: str | Path) -> Path:
    """Bar chart of relative cost per accounting regime, cheapest first."""
    out_path = Path(out_path)
    items = sorted(relative_by_label.items(), key=lambda kv: kv[1])
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.bar([k for k, _ in items], [v for _, v in items], color="#4878d0")
    ax.axhline(1.0, color="gray", linestyle=":", linewidth=1)
    ax.set_ylabel("FLOPS relative to iid")
    for i, (_, v) in enumerate(items):
        ax.text(i, v, f"{v:.2f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
