"""PNG figures for the CLI reports (matplotlib, non-interactive backend)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METHOD_COLORS = {"carve": "#1b6ca8", "posi": "#d1495b", "split": "#66a182", "naive": "#8d8d8d"}
DPI = 120


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_power_surface(rows, path, mus=None) -> Path:
    """Power against ``n_A`` for a few signal sizes; one panel per method."""
    by_mu = defaultdict(list)
    for r in rows:
        by_mu[r.mu].append(r)
    all_mu = sorted(by_mu)
    if mus is None:
        idx = np.unique(np.linspace(0, len(all_mu) - 1, min(5, len(all_mu))).round().astype(int))
        mus = [all_mu[i] for i in idx]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.8), sharey=True)
    cmap = plt.get_cmap("viridis")
    for ax, method in zip(axes, ("carve", "split", "posi")):
        for k, mu in enumerate(mus):
            pts = sorted(by_mu[mu], key=lambda r: r.n_a)
            ax.plot([r.n_a for r in pts], [getattr(r, method) for r in pts],
                    color=cmap(k / max(len(mus) - 1, 1)), label=f"mu={mu:g}")
        ax.set_title(method)
        ax.set_xlabel("n_A")
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("power")
    axes[-1].legend(fontsize=8, loc="lower right")
    return _save(fig, path)


def plot_hdr_metric(records, path, metric: str = "type2", alpha: float | None = None) -> Path:
    """One panel per inference fraction; rate against SNR with Clopper-Pearson bars."""
    recs = [r for r in records if r.metric == metric]
    fracs = sorted({r.frac_b for r in recs})
    fig, axes = plt.subplots(1, len(fracs), figsize=(4 * len(fracs), 3.6), sharey=True, squeeze=False)
    for ax, frac in zip(axes[0], fracs):
        for k, method in enumerate(sorted({r.method for r in recs})):
            pts = sorted((r for r in recs if r.frac_b == frac and r.method == method), key=lambda r: r.snr)
            x = np.array([r.snr for r in pts]) + 0.03 * (k - 1.5)
            y = np.array([r.value for r in pts])
            err = np.array([[r.value - r.ci_lo for r in pts], [r.ci_hi - r.value for r in pts]])
            ax.errorbar(x, y, yerr=err, fmt="o-", ms=3, capsize=2,
                        color=METHOD_COLORS.get(method), label=method)
        if alpha is not None and metric == "type1":
            ax.axhline(alpha, ls="--", color="k", lw=0.8)
        ax.set_title(f"n_B/n = {frac:g}")
        ax.set_xlabel("log10(SNR)")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel(metric)
    axes[0][-1].legend(fontsize=8)
    return _save(fig, path)


def plot_intervals(rows, path, title: str = "") -> Path:
    """Horizontal interval plot, one row per feature, one marker per method/fraction."""
    feats = list(dict.fromkeys(r.feature for r in rows))
    groups = list(dict.fromkeys((r.method, r.frac_b) for r in rows))
    fig, ax = plt.subplots(figsize=(7, 0.6 * len(feats) + 1.5))
    step = 0.7 / max(len(groups), 1)
    for g, (method, frac) in enumerate(groups):
        label = method if not frac else f"{method} {frac:g}"
        color = METHOD_COLORS.get(method)
        shade = 0.4 + 0.6 * (g + 1) / len(groups)
        for i, f in enumerate(feats):
            sel = [r for r in rows if r.feature == f and (r.method, r.frac_b) == (method, frac)]
            for r in sel:
                yy = i - 0.35 + g * step
                ax.plot([r.ci_lo, r.ci_hi], [yy, yy], color=color, alpha=shade, lw=2)
                ax.plot(r.estimate, yy, "o", color=color, alpha=shade, ms=3,
                        label=label if i == feats.index(sel[0].feature) else None)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_yticks(range(len(feats)))
    ax.set_yticklabels(feats)
    ax.set_xlabel("coefficient")
    if title:
        ax.set_title(title)
    handles, labels = ax.get_legend_handles_labels()
    uniq = dict(zip(labels, handles))
    ax.legend(uniq.values(), uniq.keys(), fontsize=7, loc="best")
    return _save(fig, path)


def plot_bench(rows, path, value: str = "total_seconds") -> Path:
    names = [r.method for r in rows]
    vals = [getattr(r, value) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar(names, vals, color="#1b6ca8")
    ax.set_yscale("log")
    ax.set_ylabel(value)
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, path)
