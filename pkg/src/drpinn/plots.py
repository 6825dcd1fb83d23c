"""matplotlib figures rendered from the plot-data columns the CLI writes as CSV.

Every function takes the same column dict that sits in the matching CSV file,
so a figure can always be re-rendered from disk.  Figures are built on the
object API with the Agg canvas; no pyplot global state is touched.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {"data": dict(ls="none", marker="o", ms=3.5, mfc="none", color="0.25"),
         "fit": dict(lw=1.6, color="C3"),
         "truth": dict(lw=1.0, ls="--", color="0.4")}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    # no timestamp/version metadata so identical inputs give identical files
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def plot_fit(data: dict, curve: dict, path, title: str = ""):
    """Observed current and the learned total/branch currents over time."""
    fig = Figure(figsize=(6.0, 4.0), layout="constrained")
    ax = fig.add_subplot()
    ax.plot(data["t"], data["current"], label="observed", **STYLE["data"])
    if "clean" in data:
        ax.plot(data["t"], data["clean"], label="noiseless", **STYLE["truth"])
    ax.plot(curve["t"], curve["total"], label="PINN total", **STYLE["fit"])
    branches = [k for k in curve if k.startswith("branch_")]
    for i, k in enumerate(branches):
        ax.plot(curve["t"], curve[k], lw=0.9, color=f"C{i}", alpha=0.8, label=k.replace("_", " "))
    ax.set_xlabel("time")
    ax.set_ylabel("current")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_fit_temperature(data: dict, curve: dict, path, title: str = ""):
    """One curve per temperature; the time axis is normalized per measurement."""
    fig = Figure(figsize=(6.5, 4.2), layout="constrained")
    ax = fig.add_subplot()
    temps = np.unique(data["temperature"])
    colors = _ramp(len(temps))
    for T, c in zip(temps, colors):
        d = data["temperature"] == T
        k = curve["temperature"] == T
        tmax = curve["t"][k].max()
        ax.plot(data["t"][d] / tmax, data["current"][d], ls="none", marker="o", ms=3,
                mfc="none", color=c)
        ax.plot(curve["t"][k] / tmax, curve["total"][k], lw=1.2, color=c, label=f"{T:g} K")
    ax.set_yscale("log")
    ax.set_xlabel("time / measurement length")
    ax.set_ylabel("current")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=7, ncol=2)
    return _save(fig, path)


def _ramp(n):
    from matplotlib import colormaps
    cm = colormaps["viridis"]
    return [cm(x) for x in np.linspace(0.0, 0.9, max(n, 1))]


def plot_trajectory(trace: dict, path, truth: dict | None = None, title: str = ""):
    """Parameter values against training step, one panel per parameter."""
    skip = {"step", "loss_data", "loss_phys", "loss_ic", "lr"}
    names = [k for k in trace if k not in skip]
    ncol = min(len(names), 3) or 1
    nrow = -(-len(names) // ncol) + 1
    fig = Figure(figsize=(3.0 * ncol, 2.3 * nrow), layout="constrained")
    axes = fig.subplots(nrow, ncol, squeeze=False)
    steps = trace["step"]
    for ax, name in zip(axes[:-1].ravel(), names):
        ax.plot(steps, trace[name], **STYLE["fit"])
        if truth and name in truth:
            ax.axhline(truth[name], **STYLE["truth"])
        ax.set_title(name, fontsize=9)
    for ax in axes[:-1].ravel()[len(names):]:
        ax.set_visible(False)
    gs = axes[-1, 0].get_gridspec()
    for ax in axes[-1]:
        ax.remove()
    lax = fig.add_subplot(gs[-1, :])
    for k in ("loss_data", "loss_phys", "loss_ic"):
        lax.plot(steps, np.maximum(trace[k], 1e-300), lw=1.0, label=k)
    lax.set_yscale("log")
    lax.set_xlabel("step")
    lax.legend(frameon=False, fontsize=8, ncol=3)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_resistance(curves: dict, path, title: str = ""):
    """Learned resistance curves against the true laws over temperature."""
    fig = Figure(figsize=(6.0, 4.0), layout="constrained")
    ax = fig.add_subplot()
    learned = [k for k in curves if k.endswith("_learned")]
    for i, k in enumerate(learned):
        name = k[:-len("_learned")]
        ax.plot(curves["temperature"], curves[k], color=f"C{i}", marker="o", ms=3,
                label=f"{name} learned")
        if f"{name}_true" in curves:
            ax.plot(curves["temperature"], curves[f"{name}_true"], color=f"C{i}", ls="--",
                    lw=1.0, label=f"{name} true")
    ax.set_yscale("log")
    ax.set_xlabel("temperature (K)")
    ax.set_ylabel("resistance")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)
