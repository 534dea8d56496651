"""Matplotlib figures rendered next to the delimited outputs."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .align import Annotation, WindowLog  # noqa: E402
from .scoring import ScoreReport  # noqa: E402


def save_threshold_curves(report: ScoreReport, path: Path) -> None:
    """Precision and recall across the matching-threshold sweep."""
    thr = [t for t, _, _ in report.sweep]
    prec = [p for _, p, _ in report.sweep]
    rec = [r for _, _, r in report.sweep]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(thr, prec, "o-", label="precision")
    ax.plot(thr, rec, "s-", label="recall")
    ax.set_xlabel("matching threshold")
    ax.set_ylabel("value")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    ax.set_title("threshold sweep")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_class_bars(report: ScoreReport, path: Path) -> None:
    """Per-class precision, recall, and detection quality."""
    classes = sorted(report.per_class)
    if not classes:
        classes = ["overall"]
        rows = [report.overall]
    else:
        rows = [report.per_class[c] for c in classes]
    x = range(len(classes))
    width = 0.27
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([i - width for i in x], [r.precision for r in rows], width,
           label="precision")
    ax.bar(list(x), [r.recall for r in rows], width, label="recall")
    ax.bar([i + width for i in x], [r.dqf1 for r in rows], width, label="dqf1")
    ax.set_xticks(list(x))
    ax.set_xticklabels(classes)
    ax.set_ylim(0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    ax.set_title("per-class metrics")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_bev_annotations(annotations: Sequence[Annotation], path: Path) -> None:
    """BEV scatter of annotations, split by source."""
    fig, ax = plt.subplots(figsize=(6, 6))
    styles = {"ALIGNED": ("o", "tab:blue"), "SUPPLEMENTARY": ("^", "tab:orange"),
              "TRUTH": ("x", "tab:green")}
    for source, (marker, color) in styles.items():
        xs = [a.point.r * math.sin(a.point.theta) for a in annotations
              if a.source == source]
        zs = [a.point.r * math.cos(a.point.theta) for a in annotations
              if a.source == source]
        if xs:
            ax.scatter(xs, zs, marker=marker, s=12, alpha=0.5, color=color,
                       label=source.lower())
    ax.set_xlabel("x (m, lateral)")
    ax.set_ylabel("z (m, forward)")
    ax.set_aspect("equal")
    ax.grid(True, alpha=0.3)
    ax.legend()
    ax.set_title("annotations, bird's eye view")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_plane_history(windows: Sequence[WindowLog], path: Path) -> None:
    """Optimized pitch and roll per window."""
    fig, ax = plt.subplots(figsize=(6, 4))
    starts = [w.frame_start for w in windows]
    ax.plot(starts, [math.degrees(w.plane.phi) for w in windows], "o-",
            label="pitch (deg)")
    ax.plot(starts, [math.degrees(w.plane.gamma) for w in windows], "s-",
            label="roll (deg)")
    ax.set_xlabel("window start frame")
    ax.set_ylabel("degrees")
    ax.grid(True, alpha=0.3)
    ax.legend()
    ax.set_title("ground-plane estimates")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
