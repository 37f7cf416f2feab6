"""SVG figures for routing maps and link delays.

matplotlib is an optional dependency; it is imported on first use so the
rest of the package works without it.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .traces import DelaySeries, GroupStats, RoutingMap

HIST_BIN_MS = 20.0


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "bgpmlab"  # stable element ids
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path


def plot_routing_maps(maps: Sequence[RoutingMap], path: Union[str, Path],
                      labels: Sequence[str] = ()) -> Path:
    """One strip per map: destination host index on x, border link as colour."""
    plt = _pyplot()
    if not maps:
        raise ValueError("no routing maps to plot")
    case = maps[0].case
    n_links = len(case.far_ips)
    grid = np.full((len(maps), 256), np.nan)
    for row, m in enumerate(maps):
        for dst, far in m.assignment.items():
            grid[row, int(dst) & 0xFF] = case.links.index(far)
    fig, ax = plt.subplots(figsize=(10, 0.4 * len(maps) + 1.2))
    cmap = plt.get_cmap("tab10", max(n_links, 2))
    ax.imshow(grid[:, 1:255], aspect="auto", interpolation="nearest", cmap=cmap,
              vmin=-0.5, vmax=max(n_links, 2) - 0.5, extent=(0.5, 254.5, len(maps) - 0.5, -0.5))
    ax.set_yticks(range(len(maps)))
    ax.set_yticklabels(list(labels) or [str(m.time) for m in maps])
    ax.set_xlabel(f"last octet of destination in {case.dst_prefix}")
    ax.set_title(str(case))
    handles = [plt.Rectangle((0, 0), 1, 1, color=cmap(i)) for i in range(n_links)]
    ax.legend(handles, [str(ip) for ip in case.links], loc="upper center",
              bbox_to_anchor=(0.5, -0.35), ncol=n_links, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_delay_histogram(series: DelaySeries, path: Union[str, Path],
                         bin_ms: float = HIST_BIN_MS) -> Path:
    """Per-link delay histogram with fixed-width bins."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    far_ips = sorted({s.far_ip for s in series.samples}, key=int)
    top = max((s.ms for s in series.samples), default=bin_ms)
    bins = np.arange(0.0, top + bin_ms, bin_ms)
    for far in far_ips:
        ax.hist(series.values(far), bins=bins, histtype="step", label=str(far))
    ax.set_xlabel("link delay (ms)")
    ax.set_ylabel("samples")
    if far_ips:
        ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_delay_timeseries(stats: Mapping, path: Union[str, Path]) -> Path:
    """Median with interquartile band per link from ``delay_stats(..., "time")``."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(10, 4))
    by_link: dict = {}
    for (far, t), g in stats.items():
        by_link.setdefault(far, []).append((t, g))
    for far in sorted(by_link, key=int):
        rows = sorted(by_link[far], key=lambda r: r[0])
        t = np.array([r[0] for r in rows], dtype=float)
        t = (t - t[0]) / 3600.0
        g: list[GroupStats] = [r[1] for r in rows]
        ax.plot(t, [x.median for x in g], label=str(far))
        ax.fill_between(t, [x.p25 for x in g], [x.p75 for x in g], alpha=0.25)
    ax.set_xlabel("hours since first measurement")
    ax.set_ylabel("link delay (ms)")
    if by_link:
        ax.legend()
    fig.tight_layout()
    return _save(fig, path)
