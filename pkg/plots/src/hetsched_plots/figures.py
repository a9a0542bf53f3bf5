"""The four figure kinds and their rendering.

Each kind is a fixed recipe: which column is the x axis, which metrics
are drawn, and how the axes are labelled (always with units).  Curves
are split by the group-by columns, one line per group, with error bars
showing the sample standard deviation over replications.  Rendering
also writes the aggregated table to ``<output>.csv`` so the numbers
behind every point are inspectable without re-reading the image.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from hetsched_plots.aggregate import (
    DEFAULT_GROUP_COLS,
    aggregate_csv,
    load_rows,
    series_for,
)

POWER_LABEL = "average power (W)"
DELAY_LABEL = "average delay (s)"
OFFLOAD_LABEL = "Wi-Fi share of served traffic (%)"

# Per-kind recipe: x column, x axis label, and (metric, y label) panels.
# "tradeoff" is the odd one out: it is parametric in V, plotting delay
# against power, so its two metrics become the x and y of one panel.
KINDS: dict[str, dict] = {
    "vs_v": {
        "x": "V",
        "xlabel": "control weight V (Mb²/(W·s))",
        "panels": [
            ("avg_power_w", POWER_LABEL),
            ("avg_delay_s", DELAY_LABEL),
            ("offload_pct", OFFLOAD_LABEL),
        ],
        "logx": True,
    },
    "workload": {
        "x": "mean_arrival_mbps",
        "xlabel": "mean arrival rate (Mbps)",
        "panels": [
            ("avg_power_w", POWER_LABEL),
            ("avg_delay_s", DELAY_LABEL),
            ("offload_pct", OFFLOAD_LABEL),
        ],
        "logx": False,
    },
    "theta": {
        "x": "theta",
        "xlabel": "arrival inflation θ (Mbps)",
        "panels": [
            ("avg_power_w", POWER_LABEL),
            ("avg_delay_s", DELAY_LABEL),
            ("offload_pct", OFFLOAD_LABEL),
        ],
        "logx": False,
    },
    "tradeoff": {
        "x": "V",
        "xlabel": DELAY_LABEL,
        "panels": [
            ("avg_delay_s", DELAY_LABEL),
            ("avg_power_w", POWER_LABEL),
        ],
        "logx": False,
    },
}


@dataclasses.dataclass
class FigureSpec:
    """One figure request: inputs, kind, grouping, and output path."""

    inputs: Sequence[str]
    kind: str
    output: str
    group_cols: Sequence[str] = DEFAULT_GROUP_COLS

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(
                f"unknown kind {self.kind!r}; expected one of {sorted(KINDS)}"
            )


def sidecar_path(output: str) -> Path:
    return Path(output).with_suffix(".csv")


def _group_label(group_cols: Sequence[str], key: tuple) -> str:
    parts = []
    for col, val in zip(group_cols, key):
        if col == "error_rate":
            parts.append(f"e={val:g}" if isinstance(val, float) else f"e={val}")
        else:
            parts.append(f"{col}={val}" if col != "algorithm" else str(val))
    return ", ".join(parts)


def _errorbar(ax, x, y, err_x, err_y, label):
    # A run without replication carries std 0.0 everywhere; drop the
    # bars entirely then so single points stay single points.
    xerr = err_x if err_x is not None and np.any(err_x > 0) else None
    yerr = err_y if np.any(err_y > 0) else None
    ax.errorbar(
        x, y, xerr=xerr, yerr=yerr, marker="o", capsize=3, markersize=4, label=label
    )


def render(spec: FigureSpec) -> tuple[Path, Path]:
    """Render one figure and its sidecar table.

    Returns ``(image_path, sidecar_path)``.  The sidecar holds the
    aggregated long-format table exactly as plotted.
    """
    recipe = KINDS[spec.kind]
    group_cols = list(spec.group_cols)
    metrics = [m for m, _ in recipe["panels"]]
    rows = load_rows(spec.inputs)
    table = aggregate_csv(rows, recipe["x"], metrics, group_cols)

    group_keys = (
        table[group_cols].drop_duplicates().itertuples(index=False, name=None)
    )
    group_keys = sorted(group_keys, key=lambda k: tuple(map(str, k)))

    if spec.kind == "tradeoff":
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        for key in group_keys:
            _draw_tradeoff_group(ax, table, key, group_cols, recipe)
        ax.set_xlabel(DELAY_LABEL)
        ax.set_ylabel(POWER_LABEL)
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
    else:
        fig, axes = plt.subplots(
            len(recipe["panels"]), 1, sharex=True, figsize=(6.0, 8.5)
        )
        for ax, (metric, ylabel) in zip(axes, recipe["panels"]):
            for key in group_keys:
                x, mean, std = series_for(table, key, group_cols, recipe["x"], metric)
                if x.size == 0:
                    continue
                _errorbar(ax, x, mean, None, std, _group_label(group_cols, key))
            ax.set_ylabel(ylabel)
            if recipe["logx"]:
                ax.set_xscale("log")
            ax.grid(True, alpha=0.3)
        axes[0].legend(fontsize=8)
        axes[-1].set_xlabel(recipe["xlabel"])

    fig.tight_layout()
    out_png = Path(spec.output)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=150)
    plt.close(fig)

    out_csv = sidecar_path(spec.output)
    table.to_csv(out_csv, index=False, float_format="%.17g")
    return out_png, out_csv


def _draw_tradeoff_group(ax, table, key, group_cols, recipe) -> None:
    """One delay-versus-power curve, points ordered by V."""
    x_col = recipe["x"]
    vd, d_mean, d_std = series_for(table, key, group_cols, x_col, "avg_delay_s")
    vp, p_mean, p_std = series_for(table, key, group_cols, x_col, "avg_power_w")
    # Delay and power can survive the finite-value filter at different
    # V; a point needs both coordinates, so join on V.
    delay = pd.DataFrame({x_col: vd, "d": d_mean, "ds": d_std})
    power = pd.DataFrame({x_col: vp, "p": p_mean, "ps": p_std})
    both = delay.merge(power, on=x_col).sort_values(x_col)
    if both.empty:
        return
    _errorbar(
        ax,
        both["d"].to_numpy(),
        both["p"].to_numpy(),
        both["ds"].to_numpy(),
        both["ps"].to_numpy(),
        _group_label(group_cols, key),
    )
