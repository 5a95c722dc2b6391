"""Figure rendering for run comparisons."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import BoxGeometry  # noqa: E402


def transfer_boxplot(boxes: Sequence[BoxGeometry], path: str | Path, title: str | None = None,
                     banner: str | None = None) -> Path:
    """Box per variant: median line, quartile box, dashed whiskers to the extremes."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(1.6 + 1.3 * len(boxes), 4.0))
    stats = [{"label": f"({i}) {b.label}", "med": 100 * b.median, "q1": 100 * b.q1, "q3": 100 * b.q3,
              "whislo": 100 * b.whisker_low, "whishi": 100 * b.whisker_high, "mean": 100 * b.mean,
              "fliers": []} for i, b in enumerate(boxes, start=1)]
    ax.bxp(stats, showmeans=True, meanline=False, whiskerprops={"linestyle": "--"},
           medianprops={"color": "tab:red"})
    for i, b in enumerate(boxes, start=1):
        ax.scatter([i] * len(b.values), [100 * v for v in b.values], s=8, color="0.4", zorder=3)
    ax.axhline(50.0, color="0.6", linewidth=0.8, linestyle=":")
    ax.set_ylabel("Transfer accuracy (%)")
    ax.set_title(title or "Held-out subject accuracy")
    if banner:
        fig.text(0.5, 0.99, banner, ha="center", va="top", color="tab:red", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format=path.suffix.lstrip(".") or "svg")
    plt.close(fig)
    return path
