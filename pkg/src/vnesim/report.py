"""Figure rendering for run reports.

Reads the delimited metrics emitted by a run (metrics.csv, summary.json, and
optionally rewards.csv) and writes PNG figures next to them.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import VnesimError


def _read_metrics_csv(path: Path) -> dict[str, list[float]]:
    with path.open() as fh:
        reader = csv.DictReader(fh)
        columns: dict[str, list[float]] = {name: [] for name in reader.fieldnames or ()}
        for row in reader:
            for name, value in row.items():
                columns[name].append(float(value))
    return columns


def render_report(out_dir: str | Path) -> list[Path]:
    """Render the standard figures for one run directory; returns the paths."""
    out_dir = Path(out_dir)
    metrics_path = out_dir / "metrics.csv"
    summary_path = out_dir / "summary.json"
    if not metrics_path.exists() or not summary_path.exists():
        raise VnesimError(f"no metrics.csv / summary.json under {out_dir}")
    columns = _read_metrics_csv(metrics_path)
    summary = json.loads(summary_path.read_text())
    written: list[Path] = []

    t = columns.get("bucket_start", [])

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(t, [100 * v for v in columns["cpu_occupancy"]], label="cpu")
    ax.plot(t, [100 * v for v in columns["mem_occupancy"]], label="memory")
    ax.set_xlabel("time units")
    ax.set_ylabel("allocated capacity (%)")
    ax.set_title("Resource occupancy over time")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "occupancy.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(t, [100 * v for v in columns["cpu_efficiency"]], label="cpu")
    ax.plot(t, [100 * v for v in columns["mem_efficiency"]], label="memory")
    ax.set_xlabel("time units")
    ax.set_ylabel("used / allocated (%)")
    ax.set_title("Allocation efficiency over time")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "efficiency.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(t, columns["accepted"], label="accepted")
    ax.plot(t, columns["rejected"], label="rejected")
    ax.plot(t, columns["active"], label="active")
    ax.set_xlabel("time units")
    ax.set_ylabel("requests")
    rate = summary.get("acceptance_rate")
    if rate is not None:
        ax.set_title(f"Request counts (acceptance rate {100 * rate:.1f}%)")
    else:
        ax.set_title("Request counts")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "requests.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    rewards_path = out_dir / "rewards.csv"
    if rewards_path.exists():
        episodes: list[float] = []
        means: list[float] = []
        with rewards_path.open() as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                episodes.append(float(row["episode"]))
                means.append(float(row["mean_reward"]))
        window = max(1, len(means) // 50)
        smoothed = [
            sum(means[max(0, i - window + 1) : i + 1]) / len(means[max(0, i - window + 1) : i + 1])
            for i in range(len(means))
        ]
        fig, ax = plt.subplots(figsize=(8, 4.5))
        ax.plot(episodes, means, alpha=0.25, label="episode")
        ax.plot(episodes, smoothed, label=f"rolling mean ({window})")
        ax.set_xlabel("episode")
        ax.set_ylabel("mean per-VM reward")
        ax.set_title("Training reward")
        ax.legend()
        fig.tight_layout()
        path = out_dir / "rewards.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def write_rewards_csv(rewards: list[float], path: str | Path) -> None:
    path = Path(path)
    lines = ["episode,mean_reward"]
    for i, value in enumerate(rewards):
        lines.append(f"{i},{value!r}")
    path.write_text("\n".join(lines) + "\n")
