"""Matplotlib renderings of the CSV reports. Figures go to files, never to screen."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(curves, label, path, raw_curves=None, n_show=None):
    """TPD curves, one per swept value; a raw-I panel is added when given."""
    with plt.rc_context(RC):
        ncols = 2 if raw_curves else 1
        fig, axes = plt.subplots(1, ncols, figsize=(4.2 * ncols, 3.0), squeeze=False)
        ax = axes[0, 0]
        for value, y in curves:
            y = np.asarray(y)[:n_show]
            ax.plot(np.arange(y.size), y, marker=".", ms=3, lw=1, label=f"{label}={value:g}")
        ax.set_xlabel("sample")
        ax.set_ylabel("TPD (rad/sample)")
        ax.legend(loc="best")
        if raw_curves:
            ax = axes[0, 1]
            for value, y in raw_curves:
                y = np.asarray(y)[:n_show]
                ax.plot(np.arange(y.size), y, marker=".", ms=3, lw=1, label=f"{label}={value:g}")
            ax.set_xlabel("sample")
            ax.set_ylabel("I (normalized)")
        return _save(fig, path)


def plot_accuracy_grid(grid, rows, cols, method, path):
    """Heat map of a train x test accuracy grid (values in [0, 1])."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(1.1 * len(cols) + 1.5, 0.7 * len(rows) + 1.2))
        data = np.asarray(grid, dtype=float)
        im = ax.imshow(data, vmin=0, vmax=1, cmap="viridis", aspect="auto")
        for i in range(data.shape[0]):
            for j in range(data.shape[1]):
                ax.text(j, i, f"{100 * data[i, j]:.0f}", ha="center", va="center",
                        color="w" if data[i, j] < 0.6 else "k", fontsize=8)
        ax.set_xticks(range(len(cols)), cols, rotation=30, ha="right")
        ax.set_yticks(range(len(rows)), rows)
        ax.set_xlabel("test")
        ax.set_ylabel("train")
        ax.set_title(method)
        fig.colorbar(im, ax=ax, fraction=0.05)
        return _save(fig, path)


def plot_confusion(cm, title, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.6, 3.2))
        cm = np.asarray(cm, dtype=float)
        rows = cm.sum(axis=1, keepdims=True)
        ax.imshow(cm / np.where(rows > 0, rows, 1), vmin=0, vmax=1, cmap="Blues")
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(title)
        return _save(fig, path)


def plot_scalability(results, path):
    """Accuracy vs device count, one line per (method, test scenario)."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        counts = sorted(results)
        keys = list(dict.fromkeys(k for c in counts for k in results[c].accuracy))
        for key in keys:
            ax.plot(counts, [results[c].accuracy.get(key, np.nan) for c in counts], marker="o", ms=3,
                    label=f"{key[0]} / {key[1]}")
        ax.set_xlabel("devices")
        ax.set_ylabel("accuracy")
        ax.set_ylim(0, 1.02)
        ax.legend(loc="best")
        return _save(fig, path)
