"""Figure rendering for the CLI report paths.

Every CSV the CLI writes gets a PNG sibling. Rendering is deterministic:
fixed figure geometry, fixed dpi, and pinned PNG metadata so identical runs
produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_loss_trace",
    "save_gain_curve",
    "save_spectrogram_pair",
    "save_retrieval_bars",
    "save_weight_heatmap",
]

_PNG_METADATA = {"Software": "timbrespace"}
_DPI = 110


def _finish(fig, path):
    fig.savefig(path, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def save_loss_trace(path, trace) -> None:
    """Loss per iteration of an EQ run."""
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.plot(np.arange(len(trace)), trace, lw=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title("EQ optimization loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _finish(fig, path)


def save_gain_curve(path, centers_hz, log_gains) -> None:
    """Learned per-band gains in dB against band center frequency."""
    gains_db = 20.0 * np.asarray(log_gains) / np.log(10.0)
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.plot(np.asarray(centers_hz), gains_db, marker="o", ms=3, lw=1.0)
    ax.set_xlabel("band center (Hz)")
    ax.set_ylabel("gain (dB)")
    ax.set_title("learned EQ bands")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _finish(fig, path)


def save_spectrogram_pair(path, before, after) -> None:
    """Log-magnitude spectrograms of the source and the processed audio."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.5), sharey=True)
    for ax, spec, title in ((axes[0], before, "source"), (axes[1], after, "processed")):
        log_mag = np.log10(spec.magnitudes.T + 1e-8)
        extent = (0, spec.frames * spec.hop / spec.sample_rate, 0, spec.sample_rate / 2 / 1000.0)
        ax.imshow(log_mag, origin="lower", aspect="auto", extent=extent, cmap="magma")
        ax.set_title(title)
        ax.set_xlabel("time (s)")
    axes[0].set_ylabel("frequency (kHz)")
    fig.tight_layout()
    _finish(fig, path)


def save_retrieval_bars(path, rows: list[dict]) -> None:
    """Grouped bars of R@k per report row (model / baseline)."""
    ks = [k for k in (1, 5, 10, 50)]
    labels = [str(row["model"]) for row in rows]
    x = np.arange(len(ks), dtype=float)
    width = 0.8 / max(len(rows), 1)
    fig, ax = plt.subplots(figsize=(6.5, 3.5))
    for i, row in enumerate(rows):
        values = [row[f"R@{k}"] for k in ks]
        ax.bar(x + i * width, values, width, label=labels[i])
    ax.set_xticks(x + width * (len(rows) - 1) / 2)
    ax.set_xticklabels([f"R@{k}" for k in ks])
    ax.set_ylabel("normalized recall (%)")
    ax.set_title("retrieval report")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _finish(fig, path)


def save_weight_heatmap(path, input_names, keywords, weights) -> None:
    """Inputs x keywords conditioning-weight matrix."""
    weights = np.asarray(weights, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(keywords)), max(3.0, 0.4 * len(input_names))))
    im = ax.imshow(weights, aspect="auto", cmap="viridis")
    ax.set_xticks(np.arange(len(keywords)))
    ax.set_xticklabels(keywords, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(np.arange(len(input_names)))
    ax.set_yticklabels(input_names, fontsize=7)
    fig.colorbar(im, ax=ax, label="weight")
    ax.set_title("keyword weights")
    fig.tight_layout()
    _finish(fig, path)
