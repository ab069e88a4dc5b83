"""Figure rendering for the report paths.

Each function writes one PNG next to the delimited output. All rendering
uses the Agg backend so the CLI works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schedule import ScheduleSpec, evaluate


def plot_waveform(spec: ScheduleSpec, steps: int, path) -> None:
    ts = np.arange(steps)
    deltas = [evaluate(spec, int(t)).delta for t in ts]
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(ts, deltas, lw=1.5)
    ax.axhline(0.0, color="gray", lw=0.5)
    ax.set_xlabel("generated-token position t")
    ax.set_ylabel("logit adjustment")
    ax.set_title(f"{spec.kind.value} schedule")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_segment_histogram(proportions, bin_width: int, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    xs = np.arange(len(proportions))
    ax.plot(xs, proportions, marker="o")
    ax.set_xticks(xs)
    ax.set_xticklabels([f"{i * bin_width // 1000}-{(i + 1) * bin_width // 1000}k" for i in xs])
    ax.set_xlabel(f"{bin_width}-token segment")
    ax.set_ylabel("share of reflection tokens")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_clusters(points, assignments, centroids, names, path) -> None:
    points = np.asarray(points, dtype=float)
    assignments = np.asarray(assignments)
    fig, ax = plt.subplots(figsize=(5, 4))
    for j, name in enumerate(names):
        mask = assignments == j
        ax.scatter(points[mask, 1], points[mask, 0], s=18, label=name, alpha=0.7)
    cts = np.asarray(centroids)
    ax.scatter(cts[:, 1], cts[:, 0], marker="x", s=90, c="black", label="centroids")
    ax.set_xlabel("generation length (tokens)")
    ax.set_ylabel("reflection count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep_heatmap(rows, path) -> None:
    """Accuracy heatmap over the first two swept parameters."""
    keys = [k for k in rows[0] if k not in ("accuracy", "mean_length", "mean_reflections", "best")]
    if len(keys) < 2:
        return
    xs = sorted({row[keys[1]] for row in rows})
    ys = sorted({row[keys[0]] for row in rows})
    grid = np.full((len(ys), len(xs)), np.nan)
    for row in rows:
        grid[ys.index(row[keys[0]]), xs.index(row[keys[1]])] = row["accuracy"]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(xs)))
    ax.set_xticklabels([f"{x:g}" for x in xs])
    ax.set_yticks(range(len(ys)))
    ax.set_yticklabels([f"{y:g}" for y in ys])
    ax.set_xlabel(keys[1])
    ax.set_ylabel(keys[0])
    fig.colorbar(im, ax=ax, label="accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_candidate_rewards(rewards, best_index: int, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 3))
    xs = np.arange(len(rewards))
    colors = ["tab:orange" if i == best_index else "tab:blue" for i in xs]
    ax.bar(xs, rewards, color=colors)
    ax.set_xlabel("candidate")
    ax.set_ylabel("reward")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_distance_series(distances, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(range(len(distances)), distances, marker="o")
    ax.set_xlabel("thought step")
    ax.set_ylabel("distance to answer")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
