"""Replication aggregation for sweep CSVs.

The simulator writes one CSV row per replication.  Everything plotted
is a per-(group, x) mean over replications with a sample standard
deviation for the error bar, and this module is the single place that
computes those numbers.  The figure code draws what comes out of
:func:`aggregate_csv` and nothing else, so the sidecar table written
next to each image is exactly the plotted data.
"""

from __future__ import annotations

import warnings
from collections.abc import Sequence

import numpy as np
import pandas as pd

# Columns shared by every sweep file; anything the caller groups or
# plots by must be one of these or the request is rejected by name.
SWEEP_COLUMNS = (
    "run_id",
    "algorithm",
    "V",
    "theta",
    "W",
    "error_rate",
    "mean_arrival_mbps",
    "seed",
    "avg_power_w",
    "avg_queue_mb",
    "avg_delay_s",
    "offload_pct",
    "frames",
)

DEFAULT_GROUP_COLS = ("algorithm", "W", "error_rate")


class PlotInputError(ValueError):
    """Raised when an input CSV cannot be plotted as requested."""


def load_rows(paths: Sequence[str]) -> pd.DataFrame:
    """Read one or more sweep CSVs into a single row table.

    Files are concatenated, not joined: each row stays one replication.
    """
    if not paths:
        raise PlotInputError("no input CSV given")
    frames = []
    for path in paths:
        try:
            frames.append(pd.read_csv(path))
        except FileNotFoundError as exc:
            raise PlotInputError(f"input CSV not found: {path}") from exc
        except pd.errors.EmptyDataError as exc:
            raise PlotInputError(f"input CSV is empty: {path}") from exc
    return pd.concat(frames, ignore_index=True)


def require_columns(frame: pd.DataFrame, needed: Sequence[str]) -> None:
    """Reject a table that lacks any of ``needed``, naming every absentee."""
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise PlotInputError(
            "missing column(s) " + ", ".join(repr(c) for c in missing)
            + "; expected a hetsched sweep CSV with header "
            + ",".join(SWEEP_COLUMNS)
        )


def aggregate_csv(
    frame: pd.DataFrame,
    x_col: str,
    metrics: Sequence[str],
    group_cols: Sequence[str] = DEFAULT_GROUP_COLS,
) -> pd.DataFrame:
    """Aggregate replications into one row per (group, x, metric).

    Returns a long-format table with columns
    ``[*group_cols, x_col, "metric", "n", "mean", "std"]`` sorted by
    group then x.  ``std`` is the sample standard deviation (ddof=1)
    and is 0.0 when a cell holds a single replication.  Values that are
    not finite (the simulator reports ``inf`` delay for an empty
    system) are dropped; a cell left empty by that is skipped with a
    ``RuntimeWarning`` rather than plotted as NaN.
    """
    group_cols = list(group_cols)
    require_columns(frame, [*group_cols, x_col, *metrics])
    records: list[dict] = []
    keys_cols = group_cols + [x_col]
    for keys, cell in frame.groupby(keys_cols, sort=True):
        base = dict(zip(keys_cols, keys))
        for metric in metrics:
            vals = pd.to_numeric(cell[metric], errors="coerce").to_numpy(dtype=float)
            vals = vals[np.isfinite(vals)]
            if vals.size == 0:
                label = ", ".join(f"{c}={v}" for c, v in base.items())
                warnings.warn(
                    f"skipping {metric} at {label}: no finite values",
                    RuntimeWarning,
                    stacklevel=2,
                )
                continue
            records.append(
                {
                    **base,
                    "metric": metric,
                    "n": int(vals.size),
                    "mean": float(vals.mean()),
                    "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                }
            )
    out = pd.DataFrame.from_records(
        records, columns=[*keys_cols, "metric", "n", "mean", "std"]
    )
    if out.empty:
        raise PlotInputError(
            f"nothing to plot: every ({', '.join(keys_cols)}) cell is empty"
        )
    return out


def series_for(
    table: pd.DataFrame,
    group_key: tuple,
    group_cols: Sequence[str],
    x_col: str,
    metric: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Extract (x, mean, std) arrays for one group and metric, x-sorted."""
    mask = table["metric"] == metric
    for col, val in zip(group_cols, group_key):
        mask &= table[col] == val
    sub = table[mask].sort_values(x_col)
    return (
        sub[x_col].to_numpy(dtype=float),
        sub["mean"].to_numpy(dtype=float),
        sub["std"].to_numpy(dtype=float),
    )
