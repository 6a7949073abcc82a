"""Matplotlib figure rendering for training curves and attribution reports.

All figures are written straight to files (Agg backend); nothing opens a
window. Each helper takes already-computed data so the plots stay in sync
with the CSVs emitted next to them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_training_curve(returns, moving_avg, path, title="Training returns"):
    fig, ax = plt.subplots(figsize=(7, 4))
    episodes = range(1, len(returns) + 1)
    ax.plot(episodes, returns, color="lightsteelblue", linewidth=0.8,
            label="episode return")
    ax.plot(episodes, moving_avg, color="navy", linewidth=1.6,
            label="moving average (50)")
    ax.set_xlabel("episode")
    ax.set_ylabel("return")
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_eval_returns(returns, path, title="Evaluation returns"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(returns, bins=min(20, max(5, len(returns) // 3)),
            color="seagreen", edgecolor="black")
    ax.set_xlabel("episode return")
    ax.set_ylabel("count")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_attribution(atom_names, magnitudes, path, top=15,
                     title="Input-atom attribution"):
    pairs = sorted(zip(atom_names, magnitudes), key=lambda p: -abs(p[1]))
    pairs = [p for p in pairs if p[1] != 0.0][:top] or pairs[:1]
    names = [p[0] for p in pairs][::-1]
    values = [p[1] for p in pairs][::-1]
    fig, ax = plt.subplots(figsize=(7, 0.4 * len(names) + 1.5))
    ax.barh(range(len(names)), values, color="darkorange")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("gradient magnitude")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
