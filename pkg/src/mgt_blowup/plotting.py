"""Figures written next to the CSV reports.  Headless (Agg) backend only."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def figure_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def plot_trace(columns: dict, path) -> Path:
    """F1, H and G against time, with the identity residual on a log axis."""
    t = columns["t"]
    fig, (ax, ax_res) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for name in ("F1", "H", "G"):
        vals = np.where(np.asarray(columns[name]) > 0, columns[name], np.nan)
        ax.semilogy(t, vals, label=name)
    ax.set_ylabel("functional value")
    ax.legend()
    res = np.maximum(np.asarray(columns["residual_eq01"]), 1e-18)
    ax_res.semilogy(t, res, color="k")
    ax_res.set_xlabel("t")
    ax_res.set_ylabel("identity residual")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_lifespans(rows, path, fit=None) -> Path:
    """Detected blow-up times and the theoretical bound against epsilon."""
    eps = np.array([r.epsilon for r in rows])
    t_det = np.array([r.t_detect for r in rows])
    bound = np.array([r.t_bound_theory for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ok = np.isfinite(t_det)
    ax.loglog(eps[ok], t_det[ok], "o", label="detected blow-up")
    finite_bound = np.isfinite(bound) & (bound > 0)
    if finite_bound.any():
        ax.loglog(eps[finite_bound], bound[finite_bound], "--", label="lifespan bound")
    if fit is not None and ok.any():
        grid = np.geomspace(eps[ok].min(), eps[ok].max(), 50)
        ax.loglog(grid, np.exp(fit.intercept) * grid**fit.slope, ":",
                  label=f"fit slope {fit.slope:.3f}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("T")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_snapshot(r, u, v, t: float, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(r, u, label="u")
    ax.plot(r, v, label="u_t")
    ax.set_xlabel("r")
    ax.set_title(f"t = {t:.6g}" if math.isfinite(t) else "snapshot")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
