"""Gap-versus-time figures for composed solves and black-box baselines."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

Series = Sequence[Tuple[float, float]]
MARKERS = ["o", "s", "^", "v", "d", "<", ">", "p"]


def _steps(series: Series, horizon: Optional[float]):
    pts = sorted((float(t), float(g)) for t, g in series)
    xs = [t for t, _ in pts]
    ys = [g for _, g in pts]
    if horizon is not None and xs and horizon > xs[-1]:
        xs.append(horizon)
        ys.append(ys[-1])
    return xs, ys


def plot_gap_vs_time(series: Mapping[str, Series], path, title: str = "", ylabel: str = "best gap",
                     logx: bool = False) -> None:
    """Step plot of the best gap found so far, one line per method."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    horizon = max((t for s in series.values() for t, _ in s), default=None)
    for i, (name, s) in enumerate(series.items()):
        xs, ys = _steps(s, horizon)
        if not xs:
            continue
        ax.step(xs, ys, where="post", label=name, marker=MARKERS[i % len(MARKERS)], markevery=[0],
                linewidth=1.6)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel("time (s)")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    if series:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
