"""Matplotlib renderings of the CSV reports, written next to them as PNGs."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def trace_figure(path, lams, losses, lam_star=None) -> None:
    """Scalar-axis loss landscape, log-scaled where the loss spans decades."""
    lams = np.asarray(lams, dtype=float)
    losses = np.asarray(losses, dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(lams, losses, lw=1.0, color="tab:blue")
    positive = losses[losses > 0]
    if positive.size and positive.max() / max(positive.min(), 1e-300) > 1e3:
        ax.set_yscale("log")
    if lam_star is not None and np.isfinite(lam_star):
        ax.axvline(lam_star, color="tab:red", ls="--", lw=0.8, label="true scalar")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("scalar")
    ax.set_ylabel("scaled label loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def sweep_figure(path, points) -> None:
    """Accuracy and mean scalar error against noise scale, one line per family."""
    families = sorted({p.family for p in points})
    fig, (ax_acc, ax_ls) = plt.subplots(1, 2, figsize=(9, 3.6))
    for fam in families:
        rows = sorted((p for p in points if p.family == fam), key=lambda p: p.scale)
        scales = [p.scale for p in rows]
        ax_acc.plot(scales, [p.accuracy for p in rows], "o-", label=fam)
        ls = [(p.scale, p.mean_ls) for p in rows if np.isfinite(p.mean_ls)]
        if ls:
            ax_ls.plot([s for s, _ in ls], [v for _, v in ls], "o-", label=fam)
    ax_acc.set_xscale("log")
    ax_acc.set_xlabel("noise scale")
    ax_acc.set_ylabel("accuracy (%)")
    ax_acc.set_ylim(-3, 103)
    ax_acc.legend(fontsize=8)
    ax_ls.set_xscale("log")
    ax_ls.set_yscale("log")
    ax_ls.set_xlabel("noise scale")
    ax_ls.set_ylabel("mean scalar error")
    ax_ls.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def label_error_figure(path, lr_values) -> None:
    """Histogram of label errors on a log10 axis."""
    vals = np.asarray([v for v in lr_values if np.isfinite(v) and v > 0], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    if vals.size:
        ax.hist(np.log10(vals), bins=min(40, max(5, vals.size // 5)),
                color="tab:blue", alpha=0.85)
    ax.set_xlabel("log10 label error")
    ax.set_ylabel("instances")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def reconstruction_figure(path, pairs, psnrs, max_cols: int = 8) -> None:
    """Side-by-side grid: ground truth on the top row, reconstruction below."""
    n = min(len(pairs), max_cols)
    if n == 0:
        fig, ax = plt.subplots(figsize=(4, 2))
        ax.text(0.5, 0.5, "no reconstructions", ha="center", va="center")
        ax.axis("off")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return
    fig, axes = plt.subplots(2, n, figsize=(1.6 * n, 3.4), squeeze=False)
    for col in range(n):
        truth, recon = pairs[col]
        axes[0][col].imshow(truth, cmap="gray", vmin=0.0, vmax=1.0)
        axes[1][col].imshow(recon, cmap="gray", vmin=0.0, vmax=1.0)
        axes[1][col].set_xlabel(f"{psnrs[col]:.1f} dB", fontsize=7)
        for row in range(2):
            axes[row][col].set_xticks([])
            axes[row][col].set_yticks([])
    axes[0][0].set_ylabel("truth", fontsize=8)
    axes[1][0].set_ylabel("recovered", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
