"""Publication-style figures from hetsched sweep CSVs.

This package never imports the simulator.  It consumes the delimited
output of ``hetsched sweep`` (or any file with the same header) and
renders one of four figure kinds, writing the plotted means and error
bars to a sidecar table next to the image.
"""

from hetsched_plots.aggregate import PlotInputError, aggregate_csv, load_rows
from hetsched_plots.figures import FigureSpec, KINDS, render

__all__ = [
    "FigureSpec",
    "KINDS",
    "PlotInputError",
    "aggregate_csv",
    "load_rows",
    "render",
]

__version__ = "0.1.0"
