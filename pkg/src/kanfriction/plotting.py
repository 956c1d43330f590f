"""Static SVG figures of friction curves. Uses the non-interactive Agg backend."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_SVG_META = {"Date": None, "Creator": None}
matplotlib.rcParams["svg.hashsalt"] = "kanfriction"


def plot_prediction(velocities, truth, prediction, path, title: str = "", extra: dict | None = None) -> Path:
    """Scatter of measured torque with the model curve drawn over it.

    ``extra`` maps a label to another prediction array (e.g. snapshots).
    """
    v = np.asarray(velocities, dtype=float)
    order = np.argsort(v, kind="stable")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(v, truth, ".", ms=2, color="0.6", label="data")
    for label, curve in (extra or {}).items():
        ax.plot(v[order], np.asarray(curve)[order], lw=1, ls="--", label=label)
    ax.plot(v[order], np.asarray(prediction)[order], lw=1.5, color="C3", label="prediction")
    ax.set_xlabel("velocity")
    ax.set_ylabel("torque")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_loss(history, path, title: str = "") -> Path:
    """Loss against iteration on a log scale; ``history`` is [(iter, loss), ...]."""
    it = [h[0] for h in history]
    loss = [max(h[1], np.finfo(float).tiny) for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(it, loss, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path
