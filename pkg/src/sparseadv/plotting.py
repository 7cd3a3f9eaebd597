"""Matplotlib figures written next to the CSV/JSON reports."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .image import changed_pixels  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _show(ax, img):
    if img.shape[-1] == 1:
        ax.imshow(img[..., 0], cmap="gray", vmin=0, vmax=1, interpolation="nearest")
    else:
        ax.imshow(np.clip(img, 0, 1), interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    ax.grid(False)


def plot_robust_accuracy(curves, path, title=None):
    """``curves`` maps a legend label to a list of ``(k, robust_accuracy)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for label, curve in curves.items():
            ks, acc = zip(*curve) if curve else ((), ())
            ax.plot(ks, np.asarray(acc) * 100, marker="o", ms=3, label=label)
        ax.set_xlabel("pixels changed (k)")
        ax.set_ylabel("robust accuracy (%)")
        ax.set_ylim(-2, 102)
        if title:
            ax.set_title(title)
        if len(curves) > 1:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_adversarial_examples(examples, path, max_examples=6):
    """Grid of (original, adversarial, changed-pixel map) triples.

    ``examples`` is a list of ``(original, adversarial, caption)``.
    """
    examples = list(examples)[:max_examples]
    if not examples:
        return
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, len(examples), figsize=(1.6 * len(examples), 5), squeeze=False)
        for col, (x, adv, caption) in enumerate(examples):
            _show(axes[0, col], x)
            _show(axes[1, col], adv)
            axes[2, col].imshow(changed_pixels(x, adv), cmap="Reds", vmin=0, vmax=1, interpolation="nearest")
            axes[2, col].set_xticks([])
            axes[2, col].set_yticks([])
            axes[2, col].grid(False)
            axes[0, col].set_title(caption, fontsize=7)
        axes[0, 0].set_ylabel("original")
        axes[1, 0].set_ylabel("adversarial")
        axes[2, 0].set_ylabel("changed")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_pixel_histogram(pixels, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        if len(pixels):
            bins = np.arange(0.5, max(pixels) + 1.5)
            ax.hist(pixels, bins=bins, color="tab:blue", alpha=0.8)
        ax.set_xlabel("pixels changed")
        ax.set_ylabel("successful attacks")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_training(metrics, path):
    epochs = [m.epoch for m in metrics]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.plot(epochs, [m.loss for m in metrics], color="tab:red", label="training loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax2 = ax.twinx()
        ax2.plot(epochs, [m.clean_accuracy for m in metrics], color="tab:blue", label="clean accuracy")
        ax2.set_ylabel("clean accuracy")
        ax2.set_ylim(0, 1.02)
        ax2.grid(False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
