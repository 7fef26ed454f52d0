"""Convergence figures from training metrics CSV logs."""

from .plotting import RunSeries, SchemaError, load_series, plot_convergence

__all__ = ["RunSeries", "SchemaError", "load_series", "plot_convergence"]
