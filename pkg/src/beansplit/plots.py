"""Standalone SVG charts (matplotlib, non-interactive backend)."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def bar_chart(path, values: Sequence[float], labels: Sequence[str] | None = None,
              title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    xs = range(len(values))
    ax.bar(xs, values, color="#4a8f3a")
    if labels is not None:
        ax.set_xticks(list(xs), labels, rotation=45 if len(values) > 10 else 0, fontsize=8)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def bsh_chart(path, bins: Sequence[float], title: str = "") -> None:
    n = len(bins)
    labels = [f"{i / n:.1f}" for i in range(n)]
    bar_chart(path, bins, labels, title, "split size / max split area (bin start)", "area fraction")


def line_chart(path, x: Sequence[float], series: Mapping[str, Sequence[float]], title: str = "",
               xlabel: str = "", marker: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for name, ys in series.items():
        ax.plot(list(x), list(ys), label=name)
    if marker is not None:
        ax.axvline(marker, color="green", linestyle="--", linewidth=1)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
