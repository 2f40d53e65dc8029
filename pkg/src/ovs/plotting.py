"""SVG line plots for reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed hash salt and no timestamp keep repeated renders byte-identical
matplotlib.rcParams["svg.hashsalt"] = "ovs"
SVG_META = {"Date": None, "Creator": None}


def line_plot(path, xs, series: dict, xlabel, ylabel, title=None):
    """Write one SVG with a line per entry of ``series`` (label -> values)."""
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o", lw=1.5, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_xticks(list(xs))
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    if len(series) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)
    return path
