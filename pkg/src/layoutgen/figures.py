"""Report figures for the evaluation path. All rendering is headless."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_metric_histograms(
    values_by_metric: Mapping[str, Sequence[float]], path: str
) -> bool:
    """One histogram subplot per metric with data; returns False if none had any."""
    present = {name: list(vals) for name, vals in values_by_metric.items() if vals}
    if not present:
        return False
    count = len(present)
    columns = min(3, count)
    rows = math.ceil(count / columns)
    fig, axes = plt.subplots(rows, columns, figsize=(4 * columns, 3 * rows), squeeze=False)
    flat = [ax for row in axes for ax in row]
    for ax, (name, values) in zip(flat, sorted(present.items())):
        ax.hist(values, bins=min(20, max(5, len(values) // 2)), color="#4363d8")
        ax.set_title(name)
        ax.set_ylabel("samples")
    for ax in flat[count:]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def save_seed_variance(
    means_by_metric: Mapping[str, Sequence[float]], seeds: Sequence[int], path: str
) -> bool:
    """Errorbar chart of per-seed means: mean of means +/- their std.

    Each metric contributes one point; the raw per-seed means are overlaid
    so outlier seeds stay visible. Returns False when nothing had data.
    """
    present = {
        name: list(values) for name, values in means_by_metric.items() if values
    }
    if not present:
        return False
    names = sorted(present)
    centers = []
    spreads = []
    for name in names:
        values = present[name]
        mean = sum(values) / len(values)
        variance = sum((v - mean) ** 2 for v in values) / len(values)
        centers.append(mean)
        spreads.append(math.sqrt(variance))
    fig, ax = plt.subplots(figsize=(1.6 * len(names) + 2, 4))
    positions = range(len(names))
    ax.errorbar(
        positions, centers, yerr=spreads, fmt="o", capsize=4, color="#4363d8"
    )
    for x, name in zip(positions, names):
        for value in present[name]:
            ax.plot(x, value, marker=".", color="#999999", markersize=4)
    ax.set_xticks(list(positions))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_title(f"metric stability over {len(seeds)} seeds")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True
