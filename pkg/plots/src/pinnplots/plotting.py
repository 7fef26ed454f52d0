"""Two-panel convergence figures (training loss and L2 error) from run logs.

Input files follow the trainer's metrics.csv schema; only the four
columns named in REQUIRED_COLUMNS are consumed. Both panels are
log-scaled, so non-positive values are clamped to a floor and the
figure is annotated when that happens.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

REQUIRED_COLUMNS = ("step", "wall_time_s", "train_loss", "l2_error")
LOG_FLOOR = 1e-16


class SchemaError(ValueError):
    pass


@dataclass
class RunSeries:
    """One run's curves, parsed from a metrics.csv file."""

    label: str
    steps: list[float]
    wall_time_s: list[float]
    train_loss: list[float]
    l2_error: list[float]

    def __post_init__(self):
        lengths = {len(self.steps), len(self.wall_time_s),
                   len(self.train_loss), len(self.l2_error)}
        if len(lengths) != 1:
            raise ValueError("series columns have unequal lengths")

    def x_values(self, axes: str) -> list[float]:
        return self.steps if axes == "steps" else self.wall_time_s


def load_series(path: str | Path, label: str | None = None) -> RunSeries:
    """Parse one metrics.csv; raises SchemaError naming any missing column."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(
                f"{path.name}: missing required columns {missing}; found {header}"
            )
        rows = list(reader)
    return RunSeries(
        label=label if label is not None else path.stem,
        steps=[float(r["step"]) for r in rows],
        wall_time_s=[float(r["wall_time_s"]) for r in rows],
        train_loss=[float(r["train_loss"]) for r in rows],
        l2_error=[float(r["l2_error"]) for r in rows],
    )


def _clamped(values: Sequence[float]) -> tuple[list[float], bool]:
    clamped = [max(v, LOG_FLOOR) for v in values]
    return clamped, any(v < LOG_FLOOR for v in values)


def plot_convergence(
    csv_paths: Sequence[str | Path],
    out_path: str | Path,
    axes: str = "time",
    labels: Sequence[str] | None = None,
    overwrite: bool = False,
) -> Path:
    """Render loss and L2-error panels for the given runs, one curve each.

    `axes` selects the x-axis: "time" (wall-clock seconds) or "steps".
    Refuses to replace an existing file unless `overwrite` is set, and
    never touches the input CSVs.
    """
    if axes not in ("time", "steps"):
        raise ValueError(f"axes must be 'time' or 'steps', got {axes!r}")
    if not csv_paths:
        raise ValueError("no input CSV files given")
    if labels is not None and len(labels) != len(csv_paths):
        raise ValueError(f"{len(labels)} labels for {len(csv_paths)} runs")
    out_path = Path(out_path)
    if out_path.exists() and not overwrite:
        raise FileExistsError(f"{out_path} exists; pass overwrite to replace it")

    series = [
        load_series(path, labels[i] if labels is not None else None)
        for i, path in enumerate(csv_paths)
    ]

    fig, (ax_loss, ax_err) = plt.subplots(1, 2, figsize=(9.6, 3.8))
    any_clamped = False
    for run in series:
        x = run.x_values(axes)
        loss, c1 = _clamped(run.train_loss)
        err, c2 = _clamped(run.l2_error)
        any_clamped |= c1 or c2
        ax_loss.plot(x, loss, label=run.label)
        ax_err.plot(x, err, label=run.label)

    x_label = "steps" if axes == "steps" else "wall time [s]"
    for ax, y_label in ((ax_loss, "training loss"), (ax_err, "relative L2 error")):
        ax.set_yscale("log")
        ax.set_xlabel(x_label)
        ax.set_ylabel(y_label)
        ax.legend()
    if any_clamped:
        fig.text(0.01, 0.01, f"values below {LOG_FLOOR:g} clamped for log scale",
                 fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
