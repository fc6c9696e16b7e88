"""Comment-aware CSV reading for simulation output tables.

The simulation CLI writes every table with a leading ``# ``-prefixed
comment block (the resolved run configuration) followed by one header
row and repr-formatted float cells. This reader skips comments and
blank lines, validates the header, and converts requested columns to
float arrays. An empty body under a valid header is legal.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

PathLike = Union[str, Path]


class SchemaError(ValueError):
    """A data file does not match the expected tabular schema."""


def read_csv_table(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    """Header and raw string rows of one CSV, comments skipped."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {p}")
    names = None
    rows: List[List[str]] = []
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        cells = [c.strip() for c in stripped.split(",")]
        if names is None:
            names = cells
            continue
        if len(cells) != len(names):
            raise SchemaError(
                f"{p}:{lineno}: expected {len(names)} cells, got {len(cells)}")
        rows.append(cells)
    if names is None:
        raise SchemaError(f"{p}: no header row")
    return names, rows


def read_columns(path: PathLike, required: Sequence[str]
                 ) -> Dict[str, np.ndarray]:
    """Named float columns of one CSV; missing columns are named.

    Extra columns are ignored so readers stay forward compatible with
    wider tables.
    """
    names, rows = read_csv_table(path)
    missing = [c for c in required if c not in names]
    if missing:
        raise SchemaError(
            f"{Path(path)}: missing required column(s) {', '.join(missing)}")
    out = {}
    for col in required:
        i = names.index(col)
        try:
            out[col] = np.array([float(r[i]) for r in rows], dtype=float)
        except ValueError:
            raise SchemaError(
                f"{Path(path)}: non-numeric value in column {col}") from None
    return out


def read_header(path: PathLike) -> List[str]:
    """Column names of one CSV without converting the body."""
    names, _ = read_csv_table(path)
    return names
