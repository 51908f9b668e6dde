"""Matplotlib figures written straight to image files."""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_success_curves(curves: dict, out_file, title: str = "Success rate vs. iterations"):
    """``curves`` maps p_c to (iterations, success fractions)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for p_c, (its, rate) in sorted(curves.items()):
        ax.plot(its, [100 * r for r in rate], label=f"p_c = {p_c:g}")
    ax.set_xlabel("iterations N_c")
    ax.set_ylabel("success rate [%]")
    ax.set_ylim(0, 105)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_file, dpi=120)
    plt.close(fig)


def plot_percentile_curves(curves: dict, out_file, thresholds: Sequence[float] = (0.15, 0.25)):
    """``curves`` maps (p_c, threshold) to (iterations, fractions below threshold)."""
    fig, axes = plt.subplots(1, len(thresholds), figsize=(5 * len(thresholds), 4), squeeze=False)
    for ax, thr in zip(axes[0], thresholds):
        for (p_c, t), (its, rate) in sorted(curves.items()):
            if t == thr:
                ax.plot(its, [100 * r for r in rate], label=f"p_c = {p_c:g}")
        ax.set_title(f"normalized cost below {thr:g}")
        ax.set_xlabel("iterations N_c")
        ax.set_ylabel("trials [%]")
        ax.set_ylim(0, 105)
        ax.grid(alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_file, dpi=120)
    plt.close(fig)


def plot_training(history, out_file):
    """Loss and mean position error per epoch."""
    epochs = [h.epoch for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(epochs, [h.mean_loss for h in history], color="C0")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss", color="C0")
    ax2 = ax.twinx()
    ax2.plot(epochs, [h.mean_dp_mm for h in history], color="C1")
    ax2.set_ylabel("mean position error [mm]", color="C1")
    ax.set_title("IK network training")
    fig.tight_layout()
    fig.savefig(out_file, dpi=120)
    plt.close(fig)
