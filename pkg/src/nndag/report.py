"""Figure rendering for training trajectories and benchmark aggregates.

Figures are written straight to files next to the CSV/JSON outputs; no
interactive backend is ever required.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_trajectory", "plot_adjacency_entries", "plot_benchmark"]


def plot_trajectory(trajectory: list[dict], path) -> None:
    """Constraint value and objectives against the inner iteration count."""
    if not trajectory:
        return
    it = [row["iteration"] for row in trajectory]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.semilogy([i for i, r in zip(it, trajectory) if r["h"] > 0],
                 [r["h"] for r in trajectory if r["h"] > 0],
                 label="constraint h", color="tab:red")
    ax1.set_ylabel("h")
    ax1.legend()
    ax2.plot(it, [r["train_objective"] for r in trajectory], label="train")
    ax2.plot(it, [r["heldout_objective"] for r in trajectory], label="held out")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("objective")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_adjacency_entries(adjacency_log: list[tuple[int, np.ndarray]],
                           true_adj: np.ndarray | None, path) -> None:
    """Every off-diagonal weighted-adjacency entry as a line over training.

    With a ground truth, true-edge entries are drawn green and the rest red.
    """
    if not adjacency_log:
        return
    its = [t for t, _ in adjacency_log]
    mats = np.stack([a for _, a in adjacency_log])  # (T, d, d)
    d = mats.shape[1]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i in range(d):
        for j in range(d):
            if i == j:
                continue
            if true_adj is None:
                color, alpha = "tab:blue", 0.4
            elif true_adj[i, j]:
                color, alpha = "tab:green", 0.8
            else:
                color, alpha = "tab:red", 0.3
            ax.plot(its, mats[:, i, j], color=color, alpha=alpha, lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("weighted adjacency entry")
    if true_adj is not None:
        ax.plot([], [], color="tab:green", label="true edge")
        ax.plot([], [], color="tab:red", label="non-edge")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_benchmark(per_seed: list[dict], metric_names: tuple[str, ...], path) -> None:
    """Bar chart of mean with a standard-deviation error bar per metric."""
    if not per_seed:
        return
    means = [float(np.mean([r[m] for r in per_seed])) for m in metric_names]
    stds = [float(np.std([r[m] for r in per_seed])) for m in metric_names]
    fig, ax = plt.subplots(figsize=(5, 4))
    pos = np.arange(len(metric_names))
    ax.bar(pos, means, yerr=stds, capsize=4, color="tab:blue")
    ax.set_xticks(pos)
    ax.set_xticklabels(metric_names)
    ax.set_ylabel(f"mean over {len(per_seed)} seeds")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
