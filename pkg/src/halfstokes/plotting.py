"""Static figures (SVG and PNG) for decay curves, sweeps and ratio histograms."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "halfstokes"  # stable element ids


@dataclass
class PlotSpec:
    """A line plot (``kind="line"``), a point cloud (``"scatter"``) or a histogram (``"hist"``)."""

    name: str
    series: dict = field(default_factory=dict)  # label -> (x, y) or values for hist
    kind: str = "line"
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    logy: bool = False
    title: str = ""
    markers: bool = True


def render(spec: PlotSpec, out_dir: str | Path, formats=("svg", "png")) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    if spec.kind == "hist":
        for label, vals in spec.series.items():
            vals = np.asarray(vals, float)
            vals = vals[np.isfinite(vals)]
            if vals.size:
                ax.hist(vals, bins=min(20, max(4, vals.size)), alpha=0.6, label=label)
    else:
        for label, (x, y) in spec.series.items():
            x, y = np.asarray(x, float), np.asarray(y, float)
            if spec.logy:
                ok = y > 0
                x, y = x[ok], y[ok]
            if spec.kind == "scatter":
                ax.plot(x, y, "o", ms=3.5, label=label)
            else:
                ax.plot(x, y, "o-" if spec.markers else "-", ms=3, lw=1.2, label=label)
    ax.set_xscale("log" if spec.logx else "linear")
    if spec.kind != "hist":
        ax.set_yscale("log" if spec.logy else "linear")
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    if spec.title:
        ax.set_title(spec.title, fontsize=10)
    if len(spec.series) > 1:
        ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    paths = []
    for fmt in formats:
        p = out_dir / f"{spec.name}.{fmt}"
        meta = {"Date": None} if fmt == "svg" else {}
        fig.savefig(p, format=fmt, metadata=meta, dpi=110)
        paths.append(p)
    plt.close(fig)
    return paths
