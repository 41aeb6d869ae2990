"""Matplotlib renderings of the report data: confusion matrices, ROC, loss curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_confusion(cm, class_names, path, title: str = "Confusion matrix") -> Path:
    counts = np.asarray(cm.counts)
    k = len(class_names)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(1.2 + 0.9 * k, 1.0 + 0.8 * k))
        ax.imshow(counts, cmap="Blues")
        ax.set_xticks(range(k), class_names, rotation=30, ha="right")
        ax.set_yticks(range(k), class_names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(title)
        thresh = counts.max() / 2.0 if counts.size else 0
        for i in range(k):
            for j in range(k):
                ax.text(j, i, str(counts[i, j]), ha="center", va="center",
                        color="white" if counts[i, j] > thresh else "black")
        return _save(fig, path)


def plot_roc(curves: dict, class_names, path, title: str = "ROC") -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 4.0))
        for key, c in curves.items():
            label = class_names[int(key)] if key.isdigit() else key
            style = "--" if key == "micro" else "-"
            ax.plot(c.fpr, c.tpr, style, lw=1.4, label=f"{label} (AUC {c.auc:.3f})")
        ax.plot([0, 1], [0, 1], color="0.7", lw=0.8)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
        return _save(fig, path)


def plot_history(history, path, title: str = "Loss") -> Path:
    epochs = [h.epoch for h in history]
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.5, 3.0))
        ax1.plot(epochs, [h.train_loss for h in history], "o-", ms=3, label="train")
        ax1.plot(epochs, [h.val_loss for h in history], "s-", ms=3, label="validation")
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("cross-entropy")
        ax1.set_title(title)
        ax1.legend(frameon=False)
        ax2.plot(epochs, [h.train_acc for h in history], "o-", ms=3, label="train")
        ax2.plot(epochs, [h.val_acc for h in history], "s-", ms=3, label="validation")
        ax2.set_xlabel("epoch")
        ax2.set_ylabel("accuracy")
        ax2.set_ylim(0, 1.02)
        ax2.legend(frameon=False)
        return _save(fig, path)


def plot_preview(original, corrected, path) -> Path:
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(8, 4))
        for ax, img, title in zip(axes, (original, corrected), ("original", "gamma corrected")):
            px = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
            ax.imshow(px, cmap="gray" if img.channels == 1 else None, vmin=0, vmax=255)
            ax.set_title(title)
            ax.axis("off")
        return _save(fig, path)
