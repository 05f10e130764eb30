"""Matplotlib helpers for regret curves and phase diagrams."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "legend.frameon": False,
    "svg.hashsalt": "graphbo",
    "svg.fonttype": "none",
}

COLORS = {
    "ours": "#1b6ca8",
    "random": "#7f7f7f",
    "local": "#d98c1f",
    "bfs": "#3a9a4a",
    "dfs": "#b5443c",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_regret(curves: dict, path, title=None, log=False):
    """Mean regret with a shaded 95% band per method.

    ``curves`` maps a method label to ``(iterations, mean, low, high)``.
    A zero-width band draws as the mean line only.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, (it, mean, lo, hi) in sorted(curves.items()):
            color = COLORS.get(label)
            ax.plot(it, mean, label=label, color=color)
            if (hi - lo).max(initial=0.0) > 0:
                ax.fill_between(it, lo, hi, color=ax.lines[-1].get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("iteration")
        ax.set_ylabel("simple regret")
        if log:
            ax.set_yscale("symlog", linthresh=1e-3)
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)


def plot_phase(rates: dict, path, title=None):
    """Recovery success rate against the number of observed pairs."""
    sizes = sorted(rates)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(sizes, [rates[s] for s in sizes], marker="o", color=COLORS["ours"])
        ax.set_xscale("log")
        ax.set_ylim(-0.05, 1.05)
        ax.set_xlabel(r"$|\Omega|$")
        ax.set_ylabel("success rate")
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_grid(values, row_labels, col_labels, path, xlabel="", ylabel="", title=None):
    """Heat map of a small result grid with the numbers printed in each cell."""
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, ax = plt.subplots()
        im = ax.imshow(values, cmap="viridis_r", aspect="auto")
        ax.set_xticks(range(len(col_labels)), [str(c) for c in col_labels])
        ax.set_yticks(range(len(row_labels)), [str(r) for r in row_labels])
        for i in range(len(row_labels)):
            for j in range(len(col_labels)):
                ax.text(j, i, f"{values[i][j]:.3f}", ha="center", va="center",
                        color="white", fontsize=8)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        fig.colorbar(im, ax=ax)
        _save(fig, path)
