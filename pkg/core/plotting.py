from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from core.bench.latency import scaling_fit

__all__ = ["plot_loss_curves", "plot_scaling"]


def plot_loss_curves(csv_path, out=None):
    """
    Loss terms and masking ratio of a pretraining run, written next to the CSV
    unless `out` is given. Returns the PNG path.
    """
    losses = pd.read_csv(csv_path)
    out = Path(out) if out else Path(csv_path).with_suffix(".png")

    fig, (ax, ax_rho) = plt.subplots(2, 1, figsize=(8, 6), sharex=True, gridspec_kw={"height_ratios": [3, 1]})
    for column, color in (("L_total", "black"), ("L_stat", "darkorchid"), ("L_eng", "teal"), ("L_phase", "orange")):
        ax.plot(losses["step"], losses[column], label=column, color=color, lw=1)
    ax.set_yscale("log")
    ax.set_ylabel("Loss")
    ax.legend()
    ax.set_title("Masked reconstruction pretraining")
    ax_rho.plot(losses["step"], losses["rho"], color="gray")
    ax_rho.set_xlabel("Step")
    ax_rho.set_ylabel("Mask ratio")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_scaling(csv_path, out=None):
    """Median forward latency against token count per variant on log-log axes, with the fitted exponent."""
    bench = pd.read_csv(csv_path).dropna(subset=["median_ms"])
    out = Path(out) if out else Path(csv_path).with_suffix(".png")

    fig, ax = plt.subplots(figsize=(8, 6))
    for variant, rows in bench.groupby("variant"):
        rows = rows.sort_values("tokens")
        label = variant
        if rows["tokens"].nunique() >= 4 and rows["tokens"].max() >= 8 * rows["tokens"].min():
            label = f"{variant} (slope {scaling_fit(rows['tokens'], rows['median_ms']):.2f})"
        ax.errorbar(rows["tokens"], rows["median_ms"],
                    yerr=np.vstack([rows["median_ms"] - rows["p10_ms"], rows["p90_ms"] - rows["median_ms"]]),
                    marker="o", capsize=3, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("Tokens")
    ax.set_ylabel("Median forward time (ms)")
    ax.set_title("Inference latency scaling")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
