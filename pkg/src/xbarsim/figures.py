"""Figure rendering for sweep reports.

Figures are derived views of the CSV rows (never an extra computation) and
are rendered only when the sweep actually exercises the relevant axis:
SNR vs gamma needs two gammas, the ON/OFF panel needs two ratios, the cost
comparison needs two clip settings.
"""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np  # noqa: E402

from .config import ExperimentSpec  # noqa: E402
from .experiment import RunRow  # noqa: E402


def _clip_label(alpha: float | None, beta: float | None) -> str:
    if alpha is None:
        return "no clip"
    return f"clip ({alpha:g}, {beta:g})"


def _group(rows: list[RunRow], key) -> "OrderedDict":
    out: OrderedDict = OrderedDict()
    for row in rows:
        out.setdefault(key(row), []).append(row)
    return out


def _mean(rows: list[RunRow], attr: str) -> float:
    return float(np.mean([getattr(r, attr) for r in rows]))


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def snr_vs_gamma(rows: list[RunRow], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for (alpha, beta), group in _group(
            rows, lambda r: (r.alpha, r.beta)).items():
        by_gamma = _group(group, lambda r: r.gamma)
        gammas = sorted(by_gamma)
        means = [_mean(by_gamma[g], "mean_snr") for g in gammas]
        ax.plot(gammas, means, marker="o", label=_clip_label(alpha, beta))
    ax.set_xlabel(r"write noise multiplier $\gamma$")
    ax.set_ylabel("mean attention SNR (dB)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def snr_per_block(rows: list[RunRow], path: Path) -> Path:
    gamma = max(r.gamma for r in rows)
    at_gamma = [r for r in rows if r.gamma == gamma]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for (alpha, beta), group in _group(
            at_gamma, lambda r: (r.alpha, r.beta)).items():
        n_blocks = len(group[0].per_block_snr)
        means = [float(np.mean([r.per_block_snr[b] for r in group]))
                 for b in range(n_blocks)]
        ax.plot(range(n_blocks), means, marker="s",
                label=_clip_label(alpha, beta))
    ax.set_xlabel("encoder index")
    ax.set_ylabel("attention SNR (dB)")
    ax.set_title(rf"$\gamma$ = {gamma:g}")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def onoff_panel(rows: list[RunRow], path: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.4))
    for (alpha, beta), group in _group(
            rows, lambda r: (r.alpha, r.beta)).items():
        by_ratio = _group(group, lambda r: r.on_off)
        ratios = sorted(by_ratio)
        label = _clip_label(alpha, beta)
        ax1.plot(ratios, [_mean(by_ratio[r], "mean_snr") for r in ratios],
                 marker="o", label=label)
        ax2.plot(ratios,
                 [_mean(by_ratio[r], "kv_write_dw_rms") for r in ratios],
                 marker="o", label=label)
    ax1.set_xlabel("ON/OFF ratio")
    ax1.set_ylabel("mean attention SNR (dB)")
    ax2.set_xlabel("ON/OFF ratio")
    ax2.set_ylabel("K/V write perturbation RMS (w$_{max}$ units)")
    ax1.grid(alpha=0.3)
    ax2.grid(alpha=0.3)
    ax1.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def cost_comparison(rows: list[RunRow], path: Path) -> Path:
    groups = _group(rows, lambda r: (r.alpha, r.beta))
    labels = [_clip_label(a, b) for a, b in groups]
    areas = [_mean(g, "attention_area") for g in groups.values()]
    energies = [_mean(g, "attention_energy") for g in groups.values()]
    x = np.arange(len(labels))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.4))
    ax1.bar(x, areas, color="tab:blue")
    ax1.set_xticks(x, labels, rotation=20, fontsize=8)
    ax1.set_ylabel("attention area (mm$^2$)")
    ax2.bar(x, energies, color="tab:orange")
    ax2.set_xticks(x, labels, rotation=20, fontsize=8)
    ax2.set_ylabel("attention energy (pJ)")
    fig.tight_layout()
    return _save(fig, path)


def render_figures(spec: ExperimentSpec, rows: list[RunRow],
                   out_dir) -> list[Path]:
    """Render every figure the sweep axes support; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if not rows:
        return written
    n_gammas = len({r.gamma for r in rows})
    n_clips = len({(r.alpha, r.beta) for r in rows})
    n_ratios = len({r.on_off for r in rows})
    if n_gammas >= 2:
        written.append(snr_vs_gamma(rows, out_dir / "snr_vs_gamma.png"))
    written.append(snr_per_block(rows, out_dir / "snr_per_block.png"))
    if n_ratios >= 2:
        written.append(onoff_panel(rows, out_dir / "onoff_invariance.png"))
    if n_clips >= 2:
        written.append(cost_comparison(rows, out_dir / "cost_comparison.png"))
    return written
