"""Matplotlib renderings of the delimited reports (headless Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "muffle",  # deterministic ids in SVG output
}


def save_histogram_figure(hist, path, title="score distribution"):
    """Bar chart of a score histogram with the clip thresholds marked."""
    widths = np.diff(hist.edges)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.bar(hist.edges[:-1], hist.counts, width=widths, align="edge",
               color="#4878cf", edgecolor="white", linewidth=0.3)
        for v in (-1.0, 1.0):
            ax.axvline(v, color="black", linestyle="--", linewidth=1.0)
        ax.set_xlabel("ensemble score")
        ax.set_ylabel("examples")
        ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def save_mow_figure(rows, path, title="per-node coverage and error bounds",
                    m_total=None):
    """Per-node summary: coverage fraction, plug-in margin, and its
    confidence-adjusted lower bound, ordered as reported."""
    idx = np.arange(len(rows))
    awake = np.array([r.m_awake for r in rows], dtype=np.float64)
    if m_total is None:
        # A root node is awake on every example, so the max is the total.
        m_total = max((r.m_awake for r in rows), default=0)
    coverage = awake / m_total if m_total else awake
    plugin = np.array([1.0 - 2.0 * r.p_hat if r.m_awake else np.nan for r in rows])
    bound = np.array([1.0 - 2.0 * r.wilson_upper if r.m_awake else np.nan for r in rows])
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(idx, coverage, color="green", marker=".", linewidth=1.0,
                label="coverage")
        ax.plot(idx, plugin, color="red", marker=".", linewidth=1.0,
                label="plug-in margin")
        ax.plot(idx, bound, color="blue", marker=".", linewidth=1.0,
                label="margin lower bound")
        ax.axhline(0.0, color="black", linewidth=0.8)
        ax.set_xlabel("node (report order)")
        ax.set_ylabel("fraction")
        ax.set_title(title)
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
