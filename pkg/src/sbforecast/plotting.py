"""Figure rendering for benchmark reports (Agg backend, files only)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_trajectory",
    "plot_forecast_series",
    "plot_loss_history",
    "plot_benchmark_mae",
    "plot_error_growth",
]


def plot_trajectory(traj, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(traj.times, traj.values, lw=1.2)
    p = traj.params
    ax.set_title(
        rf"$\epsilon$={p.epsilon:g}, $\lambda$={p.lam:g}, "
        rf"$\omega_c$={p.omega_c:g}, $\beta$={p.beta:g}",
        fontsize=9,
    )
    ax.set_xlabel(r"$t\Delta$")
    ax.set_ylabel(r"$\langle\sigma_z(t)\rangle$")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_forecast_series(times, reference, predicted, path, title: str = "") -> None:
    """Reference vs recursively predicted values over the forecast span."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(times, reference, lw=1.4, label="reference")
    ax.plot(times, predicted, lw=1.0, ls="--", label="predicted")
    if title:
        ax.set_title(title, fontsize=9)
    ax.set_xlabel(r"$t\Delta$")
    ax.set_ylabel(r"$\langle\sigma_z(t)\rangle$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_loss_history(history, path) -> None:
    epochs = [row["epoch"] for row in history]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.semilogy(epochs, [row["train_mse"] for row in history], label="train MSE")
    if not math.isnan(history[0]["val_mse"]):
        ax.semilogy(epochs, [row["val_mse"] for row in history], label="validation MSE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_benchmark_mae(report, path) -> None:
    """Log-scale MAE bar chart, one bar per benchmarked model."""
    rows = [r for r in report.rows if math.isfinite(r.mae)]
    diverged = [r.name for r in report.rows if not math.isfinite(r.mae)]
    fig, ax = plt.subplots(figsize=(max(4, 0.7 * len(report.rows) + 2), 3.4))
    if rows:
        names = [r.name for r in rows]
        maes = [r.mae for r in rows]
        ax.bar(names, maes)
        ax.set_yscale("log")
    ax.set_ylabel("hold-out MAE")
    title = "recursive-forecast benchmark"
    if diverged:
        title += f" (diverged: {', '.join(diverged)})"
    ax.set_title(title, fontsize=9)
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_error_growth(series_by_model: dict, path) -> None:
    """Per-step absolute error vs time, averaged over hold-out trajectories."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    for name, series in series_by_model.items():
        valid = [s for s in series if s is not None]
        if not valid:
            continue
        times = np.asarray(valid[0]["times"], dtype=float)
        errors = np.mean([s["abs_error"] for s in valid], axis=0)
        ax.semilogy(times, errors, lw=1.0, label=name)
    ax.set_xlabel(r"$t\Delta$")
    ax.set_ylabel("mean |error|")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
