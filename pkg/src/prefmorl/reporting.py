"""Report rendering: delimited metric exports plus figure files.

Every eval report writes the machine-readable CSV next to rendered
PNG figures (learning curves and the frontier scatter), so a run's
numbers and pictures always travel together.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_metric_log(path) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def export_curves_csv(records: list[dict], path) -> Path:
    """step,eu,hv rows for external plotting."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "eu", "hv"])
        for rec in records:
            writer.writerow([rec["step"], rec["eu"], rec["hv"]])
    return path


def render_curves(records: list[dict], path, title: str = "") -> Path:
    path = Path(path)
    steps = [r["step"] for r in records]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    axes[0].plot(steps, [r["eu"] for r in records], marker="o", ms=3)
    axes[0].set_xlabel("environment steps")
    axes[0].set_ylabel("expected utility")
    axes[1].plot(steps, [r["hv"] for r in records], marker="o", ms=3, color="tab:red")
    axes[1].set_xlabel("environment steps")
    axes[1].set_ylabel("hypervolume")
    if title:
        fig.suptitle(title)
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_frontier(points: np.ndarray, reference: np.ndarray, path, title: str = "") -> Path:
    """Scatter of frontier returns.  Dimensions above two are collapsed
    to (sum of first half, sum of second half) for display."""
    path = Path(path)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    if pts.size:
        if pts.shape[1] > 2:
            half = pts.shape[1] // 2
            xy = np.stack((pts[:, :half].sum(axis=1), pts[:, half:].sum(axis=1)), axis=1)
            ax.set_xlabel(f"objectives 1..{half} (sum)")
            ax.set_ylabel(f"objectives {half + 1}..{pts.shape[1]} (sum)")
        else:
            xy = pts
            ax.set_xlabel("objective 1")
            ax.set_ylabel("objective 2")
        order = np.argsort(xy[:, 0])
        ax.plot(xy[order, 0], xy[order, 1], "o-", ms=4)
    if reference is not None and len(reference) == 2:
        ax.plot([reference[0]], [reference[1]], "x", color="gray")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def write_report(records: list[dict], outdir, prefix: str, frontier=None, reference=None) -> dict:
    """CSV plus figures for a metric log; returns written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": str(export_curves_csv(records, outdir / f"{prefix}_curves.csv")),
        "curves_png": str(
            render_curves(records, outdir / f"{prefix}_curves.png", title=prefix)
        ),
    }
    if frontier is not None:
        paths["frontier_png"] = str(
            render_frontier(
                frontier, reference, outdir / f"{prefix}_frontier.png", title=prefix
            )
        )
    return paths
