"""Report figures rendered to files next to the delimited text outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsReport  # noqa: E402


def save_loss_curves(manifest: dict, path: Union[str, Path]) -> Path:
    """Per-epoch training losses (and validation loss, when recorded)."""
    epochs = manifest.get("epochs", [])
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    xs = [e["epoch"] for e in epochs if e.get("loss") is not None]
    for key, label in (("loss", "total"), ("cmd_loss", "command"), ("args_loss", "parameter")):
        ys = [e[key] for e in epochs if e.get(key) is not None]
        if ys:
            ax.plot(xs[: len(ys)], ys, label=label, linewidth=1.2)
    val = [(e["epoch"], e["val_loss"]) for e in epochs if e.get("val_loss") is not None]
    if val:
        ax.plot(*zip(*val), "o--", label="validation", markersize=3, linewidth=1.0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    ax.set_title("training losses")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_metrics_chart(report: MetricsReport, path: Union[str, Path]) -> Path:
    """Bar chart of the scaled evaluation metrics."""
    scaled = report.scaled()
    path = Path(path)
    names, values = [], []
    for key in ("acc_cmd", "acc_param", "ir", "mcd"):
        if scaled[key] is not None:
            names.append(key)
            values.append(scaled[key])
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(names, values, color=["#4c72b0", "#55a868", "#c44e52", "#8172b2"][: len(names)])
    for bar, value in zip(bars, values):
        ax.annotate(f"{value:.2f}", (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=9)
    ax.set_ylabel("value (accuracies and IR x100, MCD x100)")
    ax.set_title(f"evaluation over {report.n_samples} samples "
                 f"({report.n_invalid} invalid)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
