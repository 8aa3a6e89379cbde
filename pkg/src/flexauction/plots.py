"""Figures written next to the CLI's JSON reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG output reproducible
_PNG_META = {"Software": None}


def figure_dir(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + "_figures")


def plot_interim(table, model, path: Path, title: str = "") -> Path:
    """Win probability and expected payment against the reported valuation, one line per level."""
    levels = sorted({c for _, c in table.reports})
    q_bar, t_bar = table.q_bar(), table.t_bar()
    fig, (ax_q, ax_t) = plt.subplots(1, 2, figsize=(9, 3.6), sharex=True)
    for c in levels:
        idx = [i for i, (_, lvl) in enumerate(table.reports) if lvl == c]
        r = np.array([table.reports[i][0] for i in idx])
        ax_q.plot(r, q_bar[idx], marker=".", label=f"level {c}")
        ax_t.plot(r, t_bar[idx], marker=".", label=f"level {c}")
    ax_q.set_xlabel("reported valuation")
    ax_q.set_ylabel("win probability")
    ax_q.set_ylim(-0.02, 1.02)
    ax_t.set_xlabel("reported valuation")
    ax_t.set_ylabel("expected payment")
    ax_t.legend(frameon=False)
    for ax in (ax_q, ax_t):
        ax.axvline(model.theta_min, color="0.8", lw=0.8)
        ax.spines[["top", "right"]].set_visible(False)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_revenue(revenue: np.ndarray, surplus: np.ndarray, path: Path) -> Path:
    """Histogram of per-trial revenue with the running means of revenue and virtual surplus."""
    fig, (ax_h, ax_m) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax_h.hist(revenue, bins=40, color="0.4")
    ax_h.set_xlabel("revenue per auction")
    ax_h.set_ylabel("count")
    n = np.arange(1, revenue.size + 1)
    ax_m.plot(n, np.cumsum(revenue) / n, label="revenue")
    ax_m.plot(n, np.cumsum(surplus) / n, label="virtual surplus", ls="--")
    ax_m.set_xscale("log")
    ax_m.set_xlabel("trials")
    ax_m.set_ylabel("running mean")
    ax_m.legend(frameon=False)
    for ax in (ax_h, ax_m):
        ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path
