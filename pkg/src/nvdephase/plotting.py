"""
Figure rendering for the report path. Uses the Agg backend and writes
files; nothing here opens a window. All figures take plain arrays or
result dictionaries so they can be redrawn from saved bundles.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import DataIOError  # noqa: E402

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}
DATA_COLOR = "0.25"
FIT_COLOR = "#c0392b"
BAND_COLOR = "#5b8cc8"


def _figure(width=5.0, rows=1, cols=1):
    return plt.subplots(rows, cols, figsize=(width, width * GOLDEN * rows / cols + 0.3 * rows),
                        squeeze=False)


def _save(fig, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, bbox_inches="tight")
    except OSError as exc:
        raise DataIOError(f"cannot write figure {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def plot_fid_fit(trace, predictive: dict, path, map_curve=None) -> Path:
    """Data points, posterior mean curve and band for an FID fit."""
    with plt.rc_context(STYLE):
        fig, axes = _figure()
        ax = axes[0, 0]
        t = np.asarray(predictive["inputs"])
        ax.fill_between(t, predictive["band_lo"], predictive["band_hi"], color=BAND_COLOR,
                        alpha=0.35, lw=0, label="95% band")
        ax.plot(t, predictive["mean"], color=FIT_COLOR, label="posterior mean")
        if map_curve is not None:
            ax.plot(t, map_curve, color=FIT_COLOR, ls="--", lw=0.8, label="MAP")
        ax.plot(trace.times, trace.magnitude, "o", color=DATA_COLOR, ms=3, label="data")
        ax.set_xlabel(r"free evolution $t$ ($\mu$s)")
        ax.set_ylabel(r"Bloch length $r(t)$")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_nm_predictive(predictive: dict, path, observed=None, expectation=None) -> Path:
    """Posterior predictive of N'(phi): mean, mean +/- 2 std band, observations."""
    with plt.rc_context(STYLE):
        fig, axes = _figure()
        ax = axes[0, 0]
        phi = np.asarray(predictive["inputs"])
        mean = np.asarray(predictive["mean"])
        std = np.asarray(predictive["std"])
        ax.fill_between(phi, mean - 2 * std, mean + 2 * std, color=BAND_COLOR, alpha=0.35,
                        lw=0, label=r"mean $\pm 2\,$std")
        ax.plot(phi, mean, color=FIT_COLOR, label="predictive mean")
        if expectation is not None:
            ax.plot(expectation["inputs"], expectation["mean"], color=FIT_COLOR, ls=":", lw=0.8,
                    label="expectation")
        if observed:
            ox, oy = zip(*observed)
            ax.plot(ox, oy, "o", color=DATA_COLOR, label="measured")
        ax.set_xlabel(r"preparation angle $\varphi$ (rad)")
        ax.set_ylabel(r"$\mathcal{N}'(\varphi)$")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_traces(traces, path, labels=None) -> Path:
    """Overlay of coherence magnitudes, offset vertically for legibility."""
    with plt.rc_context(STYLE):
        fig, axes = _figure(width=5.0, rows=1)
        ax = axes[0, 0]
        cmap = plt.get_cmap("viridis")
        n = max(len(traces), 1)
        for k, tr in enumerate(traces):
            label = labels[k] if labels else (f"$\\varphi$={tr.phi:.2f}" if tr.phi is not None else None)
            ax.plot(tr.times, tr.magnitude + 0.1 * k, "-", color=cmap(k / n), lw=0.8, label=label)
        ax.set_xlabel(r"free evolution $t$ ($\mu$s)")
        ax.set_ylabel("magnitude (offset per trace)")
        if n <= 8:
            ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def plot_marginals(samples, summaries: dict, path, names=None) -> Path:
    """Histogram of each marginal with its median and 95% HPD marked."""
    names = list(names or samples.names)
    cols = 3
    rows = int(math.ceil(len(names) / cols))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(rows, cols, figsize=(7.0, 1.8 * rows), squeeze=False)
        for ax, name in zip(axes.flat, names):
            draws = samples.flat(name)
            ax.hist(draws, bins=60, color=BAND_COLOR, alpha=0.7)
            s = summaries.get(name)
            if s:
                lo, hi = s["hpd"]
                ax.axvspan(lo, hi, color="0.85", zorder=0)
                ax.axvline(s["median"], color=FIT_COLOR, lw=1)
            ax.set_title(name, fontsize=8)
            ax.set_yticks([])
        for ax in list(axes.flat)[len(names):]:
            ax.set_visible(False)
        fig.tight_layout()
        return _save(fig, path)


def plot_chains(samples, path, names=None) -> Path:
    """Trace plot per parameter, one line per chain."""
    names = list(names or samples.names)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(names), 1, figsize=(6.0, 0.9 * len(names) + 0.5),
                                 sharex=True, squeeze=False)
        for ax, name in zip(axes[:, 0], names):
            draws = samples.draws(name)
            stride = max(1, draws.shape[1] // 2000)
            for c in range(draws.shape[0]):
                ax.plot(draws[c, ::stride], lw=0.4)
            ax.set_ylabel(name, fontsize=7, rotation=0, ha="right")
        axes[-1, 0].set_xlabel(f"draw (every {stride})" if stride > 1 else "draw")
        return _save(fig, path)
