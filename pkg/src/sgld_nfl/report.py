"""Render experiment plot-data CSVs to PNG figures next to them."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiments import PLOT_SERIES  # noqa: E402

LABELS = {
    "delta_n": r"$\Delta_n$ (summed TV error)",
    "target_gap": "exact target gap",
    "coupling_agreement": "coupling agreement",
}

STYLE = {
    "figure.figsize": (5.0, 3.2),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def read_series(path) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            xs.append(float(row["x"]))
            ys.append(float(row["y"]))
    return xs, ys


def render_figures(out_dir, title: str = "") -> list[Path]:
    """Draw one figure per plotdata series plus an overlay; returns PNG paths."""
    out = Path(out_dir)
    figures = []
    series = {}
    with plt.rc_context(STYLE):
        for name in PLOT_SERIES:
            src = out / f"plotdata_{name}.csv"
            if not src.exists():
                continue
            xs, ys = read_series(src)
            series[name] = (xs, ys)
            fig, ax = plt.subplots()
            ax.plot(xs, ys, "o-", color="k", lw=1.2, ms=4)
            ax.set_xscale("log")
            ax.set_xlabel("n")
            ax.set_ylabel(LABELS[name])
            if title:
                ax.set_title(title)
            path = out / f"{name}.png"
            fig.savefig(path)
            plt.close(fig)
            figures.append(path)
        if series:
            fig, ax = plt.subplots()
            for name, (xs, ys) in series.items():
                ax.plot(xs, ys, "o-", lw=1.2, ms=4, label=LABELS[name])
            ax.set_xscale("log")
            ax.set_xlabel("n")
            ax.legend(frameon=False)
            if title:
                ax.set_title(title)
            path = out / "summary.png"
            fig.savefig(path)
            plt.close(fig)
            figures.append(path)
    return figures
