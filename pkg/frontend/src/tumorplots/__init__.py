"""Publication-style figures from tumor control run CSVs.

The package reads only the flat-file outputs of the simulation CLI
(comment-prefixed CSV tables and contour segment lists) and renders
them into static images. A figure is described by a small JSON spec
naming the panel kind, the input tables, the output path, and any
label overrides; rendering is a pure read -> draw -> write pass that
never modifies its inputs.
"""

from .csvio import SchemaError, read_columns, read_csv_table
from .figspec import FigureSpec, PanelSpec, SpecError, load_spec
from .render import PanelReport, RenderReport, render

__all__ = [
    "FigureSpec",
    "PanelReport",
    "PanelSpec",
    "RenderReport",
    "SchemaError",
    "SpecError",
    "load_spec",
    "read_columns",
    "read_csv_table",
    "render",
]
