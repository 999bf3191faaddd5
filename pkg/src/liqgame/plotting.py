"""Static SVG charts for scenario bundles and rate studies.

Output is byte-stable: the SVG id salt is fixed and the date stamp dropped.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SVG_METADATA = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    with matplotlib.rc_context({"svg.hashsalt": "liqgame", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    return path


def _padded(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    pad = 0.05 * max(hi - lo, 1e-12)
    return lo - pad, hi + pad


def scenario_figure(columns: dict, title: str, path: Path) -> Path:
    """Inventories on the left, signal and distortion on the right."""
    t = columns["t"]
    agents = sorted(k for k in columns if k.startswith("X_hat_"))
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    for name in agents:
        left.plot(t, columns[name], lw=1.0, label=name.replace("X_hat_", "agent "))
    left.plot(t, columns["X_tilde"], "k--", lw=1.5, label="mean field")
    left.set_xlim(t[0], t[-1])
    left.set_ylim(*_padded(np.concatenate([columns[n] for n in agents + ["X_tilde"]])))
    left.set_xlabel("t")
    left.set_ylabel("inventory")
    left.legend(fontsize=7)
    for name, label in (("A", "signal A"), ("minus_kappa_Y", "distortion"), ("A_minus_kappa_Y", "amplified signal")):
        right.plot(t, columns[name], lw=1.0, label=label)
    right.set_xlim(t[0], t[-1])
    right.set_ylim(*_padded(np.concatenate([columns["A"], columns["minus_kappa_Y"], columns["A_minus_kappa_Y"]])))
    right.set_xlabel("t")
    right.legend(fontsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def rate_figure(n_values, series: dict, path: Path, title: str = "") -> Path:
    """Log-log metric against N, one line per series, with the fitted power law dashed."""
    n = np.asarray(n_values, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, (metric, fit) in series.items():
        metric = np.asarray(metric, dtype=float)
        positive = metric > 0
        ax.loglog(n[positive], metric[positive], "o-", label=name)
        if fit is not None and not fit.degenerate:
            ax.loglog(n, np.exp(fit.intercept) * n**fit.slope, "--", lw=0.8, label=f"{name} slope {fit.slope:.2f}")
    ax.set_xlabel("N")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def trajectory_figure(t: np.ndarray, series: dict, path: Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in series.items():
        ax.plot(t, values, lw=1.0, label=name)
    ax.set_xlim(t[0], t[-1])
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
