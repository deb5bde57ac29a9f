"""PNG figures for the command-line reports (non-interactive Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_sweep(rows: Sequence[tuple[int, float, float]], path) -> Path:
    """Quantile RMSE against lattice volume, labelled by side length."""
    sides = [r[0] for r in rows]
    mm3 = [r[1] for r in rows]
    rmse = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(mm3, rmse, "o-", color="C0")
    best = int(np.argmin(rmse))
    ax.plot(mm3[best], rmse[best], "o", color="C3", ms=9, mfc="none")
    for s, x, y in zip(sides, mm3, rmse):
        ax.annotate(str(s), (x, y), textcoords="offset points", xytext=(0, 6), ha="center", fontsize=8)
    ax.set_xlabel("lattice volume (mm$^3$)")
    ax.set_ylabel("quantile RMSE")
    ax.set_title("Nakagami fit vs lattice size")
    fig.tight_layout()
    return _save(fig, path)


def plot_mid_slices(maps: dict[str, np.ndarray], path, mask: np.ndarray | None = None) -> Path:
    """Middle z-slice of each named volume side by side."""
    names = list(maps)
    fig, axes = plt.subplots(1, len(names), figsize=(3.2 * len(names), 3.2), squeeze=False)
    for ax, name in zip(axes[0], names):
        vol = np.asarray(maps[name], dtype=float)
        z = vol.shape[2] // 2
        img = vol[:, :, z].T
        if mask is not None:
            img = np.ma.masked_where(~np.asarray(mask, bool)[:, :, z].T, img)
        im = ax.imshow(img, origin="lower", cmap="viridis")
        ax.set_title(name, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    return _save(fig, path)


def plot_study(X: np.ndarray, labels: Sequence[str], feature_names: Sequence[str], path) -> Path:
    """Per-feature strip plot of the two classes, standardised per feature."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    sd = X.std(axis=0)
    Z = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    fig, ax = plt.subplots(figsize=(max(5, 0.45 * X.shape[1] + 2), 3.8))
    for k, cls in enumerate(sorted(set(labels.tolist()))):
        rows = Z[labels == cls]
        xs = np.arange(X.shape[1])[None, :] + (k - 0.5) * 0.3
        ax.plot(np.broadcast_to(xs, rows.shape).ravel(), rows.ravel(), ".", color=f"C{k}", label=cls, alpha=0.7)
    ax.set_xticks(range(X.shape[1]))
    ax.set_xticklabels(feature_names, rotation=90, fontsize=7)
    ax.set_ylabel("standardised FD")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
