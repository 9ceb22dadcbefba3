"""Static PNG plots from the per-cell CSVs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CATEGORY_COLORS = {"initial": "black", "precedent": "red", "successor": "blue"}


def _read_columns(path: Path, required) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no data rows")
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise ValueError(f"{path} lacks column(s) {', '.join(missing)}")
    return {c: [r[c] for r in rows] for c in rows[0]}


def plot_curve(csv_path: Path, png_path: Path, h: int | None, ylabel: str) -> Path:
    """Mean line with a +-1 std band and a dashed marker at the training horizon."""
    cols = _read_columns(csv_path, ("step", "mean", "std"))
    step = np.array(cols["step"], dtype=float)
    mean = np.array(cols["mean"], dtype=float)
    std = np.array(cols["std"], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(step, mean, color="tab:blue")
    ax.fill_between(step, mean - std, mean + std, color="tab:blue", alpha=0.25, linewidth=0)
    if h is not None:
        ax.axvline(h, color="gray", linestyle="--")
    ax.set_xlabel("step")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(png_path, dpi=100)
    plt.close(fig)
    return Path(png_path)


def plot_scatter(csv_path: Path, png_path: Path) -> Path:
    cols = _read_columns(csv_path, ("x", "y", "category"))
    x = np.array(cols["x"], dtype=float)
    y = np.array(cols["y"], dtype=float)
    cat = np.array(cols["category"])
    fig, ax = plt.subplots(figsize=(4, 4))
    for name, color in CATEGORY_COLORS.items():
        m = cat == name
        ax.scatter(x[m], y[m], s=4, color=color, label=name, alpha=0.6)
    ax.legend(loc="best", fontsize=7)
    fig.tight_layout()
    fig.savefig(png_path, dpi=100)
    plt.close(fig)
    return Path(png_path)


def plot_cell(cell_dir: Path, h: int) -> list[Path]:
    cell_dir = Path(cell_dir)
    return [
        plot_curve(cell_dir / "reward_steps.csv", cell_dir / "reward_vs_step.png", h, "reward"),
        plot_curve(cell_dir / "mnd.csv", cell_dir / "mnd_vs_step.png", h, "MND"),
        plot_scatter(cell_dir / "scatter.csv", cell_dir / "scatter.png"),
    ]
