"""Figure assembly: lay out panels on a grid and write the image."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .figspec import FigureSpec, load_spec
from .panels import DRAWERS

PathLike = Union[str, Path]

PANEL_WIDTH = 5.2
PANEL_HEIGHT = 3.9


@dataclass
class PanelReport:
    """What one rendered panel drew: kind plus named series arrays."""

    kind: str
    series: Dict[str, Tuple[np.ndarray, ...]]


@dataclass
class RenderReport:
    """Rendered figure location and the series every panel plotted."""

    output: Path
    panels: List[PanelReport]


def _grid_shape(n_panels: int) -> Tuple[int, int]:
    if n_panels == 1:
        return 1, 1
    if n_panels == 2:
        return 1, 2
    return (n_panels + 1) // 2, 2


def render(spec: Union[FigureSpec, PathLike]) -> RenderReport:
    """Draw every panel of one figure spec and write the image file.

    Accepts either a loaded FigureSpec or a path to a spec file. The
    output directory is created if needed; inputs are only read.
    """
    if not isinstance(spec, FigureSpec):
        spec = load_spec(spec)

    rows, cols = _grid_shape(len(spec.panels))
    fig = Figure(figsize=(PANEL_WIDTH * cols, PANEL_HEIGHT * rows),
                 constrained_layout=True)
    FigureCanvasAgg(fig)
    if spec.title:
        fig.suptitle(spec.title)

    grid = fig.add_gridspec(rows, cols)
    reports = []
    for i, panel in enumerate(spec.panels):
        slot = grid[i // cols, i % cols]
        series = DRAWERS[panel.kind](fig, slot, panel)
        reports.append(PanelReport(kind=panel.kind, series=series))

    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, dpi=spec.dpi)
    return RenderReport(output=spec.output, panels=reports)
