"""Render a sweep's ``plot_data.csv`` to an image file (matplotlib, no display needed)."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_plot_data(path):
    with open(path, newline="") as fh:
        return [{"x": r["x"], "method": r["method"], "mean": float(r["mean"]), "std": float(r["std"])}
                for r in csv.DictReader(fh)]


def _numeric(x):
    try:
        return float(x)
    except ValueError:
        return None


def render(records, out_path, x_axis="epsilon", title=None):
    """Mean test AUC with one-std error bars.

    Method comparisons become a bar chart. Other axes are drawn as lines
    over categorical positions, so an infinite epsilon gets its own tick.
    """
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if x_axis == "method":
        names = [r["method"] for r in records]
        ax.bar(range(len(records)), [r["mean"] for r in records], yerr=[r["std"] for r in records],
               capsize=3, color="tab:blue")
        ax.set_xticks(range(len(records)), names, rotation=30, ha="right")
    else:
        xs = sorted({r["x"] for r in records},
                    key=lambda v: (_numeric(v) is None, _numeric(v) if _numeric(v) is not None else 0, v))
        pos = {x: i for i, x in enumerate(xs)}
        methods = list(dict.fromkeys(r["method"] for r in records))
        for m in methods:
            rs = sorted((r for r in records if r["method"] == m), key=lambda r: pos[r["x"]])
            ax.errorbar([pos[r["x"]] for r in rs], [r["mean"] for r in rs], yerr=[r["std"] for r in rs],
                        marker="o", capsize=3, label=m)
        labels = ["∞" if _numeric(x) is not None and math.isinf(_numeric(x)) else x for x in xs]
        ax.set_xticks(range(len(xs)), labels)
        ax.legend(fontsize="small")
    ax.set_xlabel(x_axis)
    ax.set_ylabel("test AUC")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
