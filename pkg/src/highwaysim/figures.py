"""Matplotlib report figures written next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .experiments import EpisodeLog, MetricsReport, TrajectoryComparison


def save_metrics_figure(report: MetricsReport, path: str | Path) -> Path:
    """Bar panels for collisions, velocity, and decision latency per mode."""
    modes = [m for m in report.MODE_ORDER if m in report.per_mode] + [
        m for m in sorted(report.per_mode) if m not in report.MODE_ORDER
    ]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    panels = [
        ("collision_mean", "Collisions per run", 1.0),
        ("velocity_kmh", "Velocity (km/h)", 1.0),
        ("inference_time_s", "Inference time (s)", 1.0),
    ]
    x = np.arange(len(modes))
    for ax, (attr, title, _) in zip(axes, panels):
        values = []
        for m in modes:
            v = getattr(report.per_mode[m], attr)
            values.append(0.0 if v is None else v)
        ax.bar(x, values, color=["#4c72b0", "#55a868", "#c44e52"][: len(modes)])
        ax.set_xticks(x)
        ax.set_xticklabels(modes, rotation=20, ha="right", fontsize=8)
        ax.set_title(title, fontsize=10)
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def save_training_curve(curve: list[dict], path: str | Path, window: int = 25) -> Path:
    """Per-episode returns with a moving average; collisions marked underneath."""
    episodes = [rec["episode"] for rec in curve]
    returns = np.array([rec["return"] for rec in curve], dtype=float)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(episodes, returns, lw=0.7, alpha=0.45, label="return")
    if len(returns) >= window:
        kernel = np.ones(window) / window
        smooth = np.convolve(returns, kernel, mode="valid")
        ax.plot(episodes[window - 1 :], smooth, lw=2.0, label=f"mean({window})")
    crashes = [rec["episode"] for rec in curve if rec.get("collision")]
    if crashes:
        ax.plot(
            crashes,
            np.full(len(crashes), returns.min() - 1.0),
            "|",
            color="#c44e52",
            label="collision",
        )
    ax.set_xlabel("episode")
    ax.set_ylabel("undiscounted return")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def save_trajectory_figure(log: EpisodeLog, path: str | Path) -> Path:
    """Actual ego path versus predicted waypoints, top-down."""
    xs = [log.header["initial_ego"]["x"]] + [s["ego"]["x"] for s in log.steps]
    ys = [log.header["initial_ego"]["y"]] + [s["ego"]["y"] for s in log.steps]
    fig, ax = plt.subplots(figsize=(9, 3))
    for b in log.header["geometry"]["boundaries"]:
        ax.axhline(b, color="#888888", lw=0.8, ls="--")
    ax.plot(xs, ys, color="#c0392b", lw=2, label="actual")
    wx = [w[0] for call in log.planner_calls for w in call["waypoints"]]
    wy = [w[1] for call in log.planner_calls for w in call["waypoints"]]
    if wx:
        ax.scatter(wx, wy, s=22, color="#27ae60", zorder=3, label="predicted waypoints")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.invert_yaxis()  # left lanes (lower y) drawn on top
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)


def save_comparison_errors_figure(comp: TrajectoryComparison, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 3))
    flat = [e for call in comp.errors for e in call]
    ax.plot(flat, marker="o", ms=3, lw=0.8)
    ax.set_xlabel("waypoint (episode order)")
    ax.set_ylabel("error (m)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)
