"""Panel renderers: each draws one panel kind and reports its series.

Every draw function receives the host figure, the grid slot to draw
into, and the validated PanelSpec; it reads its input tables, draws
them, and returns the plotted series keyed by curve name so callers
can verify that the figure shows exactly the file contents.
"""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np
from matplotlib.collections import LineCollection

from .csvio import read_columns, read_csv_table, SchemaError
from .figspec import PanelSpec

REFERENCE_STYLE = dict(color="0.45", linestyle=":", linewidth=1.6)

Series = Dict[str, Tuple[np.ndarray, ...]]


def _apply_labels(ax, panel: PanelSpec, x_default: str,
                  y_default: str) -> None:
    ax.set_xlabel(panel.labels.get("x", x_default))
    ax.set_ylabel(panel.labels.get("y", y_default))
    title = panel.labels.get("title", "")
    if title:
        ax.set_title(title, loc="left", fontweight="bold")


def draw_controls(fig, slot, panel: PanelSpec) -> Series:
    """Dose schedules versus their reference protocols (panels A/B)."""
    ax = fig.add_subplot(slot)
    table = read_columns(panel.inputs["controls"], ("t", "U", "S"))
    reference = None
    if "reference" in panel.inputs:
        reference = read_columns(panel.inputs["reference"], ("t", "U", "S"))

    wanted = ("U", "S") if panel.series == "both" else (panel.series,)
    series: Series = {}
    for name in wanted:
        if reference is not None:
            label = f"{name}_0"
            ax.plot(reference["t"], reference[name], label=label,
                    **REFERENCE_STYLE)
            series[label] = (reference["t"], reference[name])
        ax.plot(table["t"], table["U" if name == "U" else "S"], label=name,
                linewidth=1.8)
        series[name] = (table["t"], table[name])
    ax.legend(loc="best", fontsize=8)
    y_default = {"U": "cytotoxic effect", "S": "antiangiogenic effect",
                 "both": "drug effect"}[panel.series]
    _apply_labels(ax, panel, "t (days)", y_default)
    return series


def draw_qoi(fig, slot, panel: PanelSpec) -> Series:
    """Tumor volume and serum marker trajectories (panel C)."""
    fields = (("v_phi", "P_s") if panel.fields == "both"
              else (panel.fields,))
    grid = slot.subgridspec(len(fields), 1, hspace=0.35)
    tables = [(entry["label"],
               read_columns(entry["path"], ("t", "v_phi", "P_s")))
              for entry in panel.inputs["runs"]]

    series: Series = {}
    y_defaults = {"v_phi": "tumor volume", "P_s": "serum marker"}
    for row, field in enumerate(fields):
        ax = fig.add_subplot(grid[row])
        for label, table in tables:
            name = f"{label}:{field}"
            ax.plot(table["t"], table[field], label=label, linewidth=1.8)
            series[name] = (table["t"], table[field])
        ax.legend(loc="best", fontsize=8)
        ax.set_ylabel(panel.labels.get(f"y_{field}", y_defaults[field]))
        if row == len(fields) - 1:
            ax.set_xlabel(panel.labels.get("x", "t (days)"))
        if row == 0:
            title = panel.labels.get("title", "")
            if title:
                ax.set_title(title, loc="left", fontweight="bold")
    return series


def draw_contours(fig, slot, panel: PanelSpec) -> Series:
    """Tumor boundary isolines from segment tables (panel D)."""
    ax = fig.add_subplot(slot)
    series: Series = {}
    for k, entry in enumerate(panel.inputs["contours"]):
        table = read_columns(entry["path"], ("x1", "y1", "x2", "y2"))
        segments = np.stack(
            [np.column_stack([table["x1"], table["y1"]]),
             np.column_stack([table["x2"], table["y2"]])], axis=1)
        color = f"C{k}"
        ax.add_collection(LineCollection(segments, colors=color,
                                         linewidths=1.6))
        ax.plot([], [], color=color, label=entry["label"])
        series[entry["label"]] = (table["x1"], table["y1"],
                                  table["x2"], table["y2"])
    ax.autoscale_view()
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    _apply_labels(ax, panel, "x (um)", "y (um)")
    return series


def draw_protocol(fig, slot, panel: PanelSpec) -> Series:
    """Fitted protocol effect curves against their target (Fig.-5 style)."""
    ax = fig.add_subplot(slot)
    path = panel.inputs["curves"]
    names, _ = read_csv_table(path)
    for required in ("t", "target"):
        if required not in names:
            raise SchemaError(
                f"{path}: missing required column(s) {required}")
    table = read_columns(path, names)

    series: Series = {}
    ax.plot(table["t"], table["target"], color="black", linewidth=2.2,
            label="target")
    series["target"] = (table["t"], table["target"])
    for name in names:
        if name in ("t", "target"):
            continue
        ax.plot(table["t"], table[name], linewidth=1.6, label=name)
        series[name] = (table["t"], table[name])
    ax.legend(loc="best", fontsize=8)
    _apply_labels(ax, panel, "t (days)", "cytotoxic effect")
    return series


DRAWERS = {
    "controls": draw_controls,
    "qoi": draw_qoi,
    "contours": draw_contours,
    "protocol": draw_protocol,
}
