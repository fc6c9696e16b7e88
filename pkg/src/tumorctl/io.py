"""Output formats: self-describing CSV, VTK/binary snapshots, contours.

Every writer embeds the fully resolved run configuration as a leading
``# ``-prefixed comment block, so a result file alone identifies the
run that produced it. Floats are written with ``repr`` (shortest
round-trip decimal); reruns with the same configuration therefore
produce byte-identical files.

CSV is the single tabular interchange format. Field snapshots go out
as legacy-VTK structured grids and as flat float64 arrays with a small
text header file; both sample the spline fields on a uniform lattice
that includes the domain boundary.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .splines import SplineSpace

PathLike = Union[str, Path]


class FormatError(ValueError):
    """A data file does not match the expected tabular schema."""


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def comment_block(config_lines: Sequence[str],
                  extra: Sequence[str] = ()) -> List[str]:
    """Resolved-config echo (plus run notes) as CSV comment lines."""
    return ["# " + line for line in (*config_lines, *extra)]


def write_csv(path: PathLike, columns: Sequence[str],
              rows: Iterable[Sequence], config_lines: Sequence[str],
              extra: Sequence[str] = ()) -> None:
    """One table: comment block, header row, repr-formatted body."""
    lines = comment_block(config_lines, extra)
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(
                f"row width {len(row)} does not match header {len(columns)}")
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv_table(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    """Header and raw string rows of one CSV, comments skipped.

    An empty body under a valid header is legal and returns no rows.
    """
    p = Path(path)
    names: Optional[List[str]] = None
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
            raise FormatError(
                f"{p}:{lineno}: expected {len(names)} cells, got {len(cells)}")
        rows.append(cells)
    if names is None:
        raise FormatError(f"{p}: no header row")
    return names, rows


def read_columns(path: PathLike, required: Sequence[str]
                 ) -> Dict[str, np.ndarray]:
    """Named float columns of one CSV; missing columns are named.

    Only the required columns are converted; extras are ignored, which
    lets readers stay forward compatible with wider tables.
    """
    names, rows = read_csv_table(path)
    missing = [c for c in required if c not in names]
    if missing:
        raise FormatError(
            f"{Path(path)}: missing required column(s) {', '.join(missing)}")
    index = {c: names.index(c) for c in required}
    out = {}
    for col, i in index.items():
        try:
            out[col] = np.array([float(r[i]) for r in rows], dtype=float)
        except ValueError:
            raise FormatError(
                f"{Path(path)}: non-numeric value in column {col}") from None
    return out


# -- tabular writers ----------------------------------------------------------


def write_qoi_csv(path: PathLike, times: np.ndarray, v_phi: np.ndarray,
                  serum_total: np.ndarray, config_lines: Sequence[str],
                  scale: float = 1.0) -> None:
    """Tumor volume and serum-marker mass per time node."""
    rows = zip(times, np.asarray(v_phi) * scale, serum_total)
    write_csv(path, ("t", "v_phi", "P_s"), rows, config_lines)


def read_qoi_csv(path: PathLike) -> Dict[str, np.ndarray]:
    return read_columns(path, ("t", "v_phi", "P_s"))


def write_controls_csv(path: PathLike, times: np.ndarray, U: np.ndarray,
                       S: np.ndarray, config_lines: Sequence[str]) -> None:
    """Both dose schedules on the march grid."""
    write_csv(path, ("t", "U", "S"), zip(times, U, S), config_lines)


def read_controls_csv(path: PathLike) -> Dict[str, np.ndarray]:
    return read_columns(path, ("t", "U", "S"))


def write_iterations_csv(path: PathLike, records,
                         config_lines: Sequence[str]) -> None:
    """Descent history: objective breakdown and step diagnostics."""
    term_names = ("k1", "k2", "k3", "k4", "k5", "k6", "k7")
    columns = ("iter", "J", *(f"J_{k}" for k in term_names),
               "norm_dU", "norm_dS", "mu_star", "criterion")
    rows = [
        (rec.iteration, rec.J, *(rec.terms[k] for k in term_names),
         rec.norm_dU, rec.norm_dS, rec.mu_star, rec.criterion)
        for rec in records
    ]
    write_csv(path, columns, rows, config_lines)


def write_kkt_csv(path: PathLike, report, config_lines: Sequence[str]) -> None:
    """Pointwise projected-stationarity comparison for both schedules."""
    columns = ("t", "u_target", "u_residual", "u_interior", "u_gap",
               "s_target", "s_residual", "s_interior", "s_gap")
    rows = zip(report.times, report.u_target, report.u_residual,
               report.interior_u.astype(int), report.gap_u,
               report.s_target, report.s_residual,
               report.interior_s.astype(int), report.gap_s)
    write_csv(path, columns, rows, config_lines)


def write_fit_csv(path: PathLike, fits: Dict[str, object],
                  config_lines: Sequence[str]) -> None:
    """Recovered protocol parameters and fit quality per template.

    Templates with fewer doses leave the unused dose/time cells blank;
    an undefined coefficient of determination is blank as well.
    """
    columns = ("template", "d1", "d2", "d3", "t1", "t2", "t3", "tau",
               "r2", "rmse", "converged", "iterations")
    rows = []
    for tag, res in fits.items():
        doses = list(res.protocol.doses)
        times = list(res.protocol.times)
        pad = 3 - len(doses)
        cells = doses + [""] * pad + times + [""] * pad
        r2 = "" if res.r2 is None else res.r2
        rows.append((tag, *cells, res.protocol.tau, r2, res.rmse,
                     int(res.converged), res.n_iters))
    write_csv(path, columns, rows, config_lines)


def write_fit_curves_csv(path: PathLike, times: np.ndarray,
                         target: np.ndarray,
                         curves: Dict[str, np.ndarray],
                         config_lines: Sequence[str]) -> None:
    """Target effect series next to every fitted template's curve."""
    columns = ("t", "target", *curves.keys())
    rows = zip(times, target, *curves.values())
    write_csv(path, columns, rows, config_lines)


def write_gradient_csv(path: PathLike, rows: Iterable[Sequence],
                       config_lines: Sequence[str],
                       extra: Sequence[str] = ()) -> None:
    """Derivative consistency table over mesh levels and step sizes."""
    columns = ("elements", "dt", "eps", "directional_fd",
               "directional_adjoint", "rel_error_fd",
               "directional_tangent", "rel_error_duality")
    write_csv(path, columns, rows, config_lines, extra)


# -- field snapshots ----------------------------------------------------------

FIELD_NAMES = ("phi", "sigma", "p")


def sample_fields(space: SplineSpace, state: np.ndarray,
                  n_points: int) -> Dict[str, np.ndarray]:
    """All three fields of one state vector on the uniform lattice."""
    nb = space.n_b
    return {
        "phi": space.sample_lattice(state[:nb], n_points),
        "sigma": space.sample_lattice(state[nb:2 * nb], n_points),
        "p": space.sample_lattice(state[2 * nb:], n_points),
    }


def write_vtk_snapshot(path: PathLike, space: SplineSpace, state: np.ndarray,
                       time: float, n_points: int) -> None:
    """Legacy-VTK structured-points file with all three fields.

    Point order follows the legacy convention (x fastest); the sample
    time is recorded on the title line.
    """
    fields = sample_fields(space, state, n_points)
    spacing = space.length / (n_points - 1)
    lines = [
        "# vtk DataFile Version 3.0",
        f"tumorctl snapshot t = {_fmt(float(time))}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {n_points} {n_points} 1",
        "ORIGIN 0.0 0.0 0.0",
        f"SPACING {_fmt(spacing)} {_fmt(spacing)} 1.0",
        f"POINT_DATA {n_points * n_points}",
    ]
    for name in FIELD_NAMES:
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        # lattice[i, j] = f(x_i, y_j); emit x fastest
        lines.extend(_fmt(v) for v in fields[name].T.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def write_binary_snapshot(basepath: PathLike, space: SplineSpace,
                          state: np.ndarray, time: float,
                          n_points: int) -> Tuple[Path, Path]:
    """Flat float64 dump plus a small text header file.

    ``<base>.bin`` holds the three lattice arrays stacked C-contiguous
    (phi, sigma, p), each ``n x n`` with x varying along the first
    axis. ``<base>.meta`` records dimensions, domain side, sample time,
    and the field order needed to read the dump back.
    """
    base = Path(basepath)
    fields = sample_fields(space, state, n_points)
    data = np.stack([fields[name] for name in FIELD_NAMES])
    bin_path = base.with_suffix(".bin")
    meta_path = base.with_suffix(".meta")
    data.astype(np.float64).tofile(bin_path)
    meta = [
        f"fields = {' '.join(FIELD_NAMES)}",
        f"nx = {n_points}",
        f"ny = {n_points}",
        f"side = {_fmt(space.length)}",
        f"time = {_fmt(float(time))}",
        "dtype = float64",
        "order = C",
    ]
    meta_path.write_text("\n".join(meta) + "\n")
    return bin_path, meta_path


def read_binary_snapshot(basepath: PathLike) -> Tuple[Dict[str, str],
                                                      np.ndarray]:
    """Meta dictionary and the stacked field array of one dump."""
    base = Path(basepath)
    meta = {}
    for line in base.with_suffix(".meta").read_text().splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    nx, ny = int(meta["nx"]), int(meta["ny"])
    n_fields = len(meta["fields"].split())
    data = np.fromfile(base.with_suffix(".bin"), dtype=np.float64)
    return meta, data.reshape(n_fields, nx, ny)


# -- isoline extraction -------------------------------------------------------

# segment endpoints per marching-squares case; corners a=(i,j), b=(i+1,j),
# c=(i+1,j+1), d=(i,j+1) set bits 1/2/4/8, edges are 0 bottom (a-b),
# 1 right (b-c), 2 top (d-c), 3 left (a-d)
_CASE_SEGMENTS = {
    0: (), 15: (),
    1: ((0, 3),), 2: ((0, 1),), 3: ((1, 3),), 4: ((1, 2),),
    6: ((0, 2),), 7: ((2, 3),), 8: ((2, 3),), 9: ((0, 2),),
    11: ((1, 2),), 12: ((1, 3),), 13: ((0, 1),), 14: ((0, 3),),
}


def contour_segments(lattice: np.ndarray, side: float,
                     level: float = 0.5) -> np.ndarray:
    """Isoline of a lattice sampling as line segments, (n, 4) array.

    ``lattice[i, j]`` is the field value at ``(x_i, y_j)`` on the
    uniform grid over ``[0, side]^2``. Crossing points are linear
    interpolations along cell edges; a point exactly at the level
    counts as inside, and the two ambiguous saddle cases are resolved
    by the cell-center average. Rows are ``x1, y1, x2, y2``.
    """
    L = np.asarray(lattice, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] < 2:
        raise ValueError("lattice must be a square array with >= 2 points")
    n = L.shape[0]
    h = side / (n - 1)
    segments = []

    def cross(v0, v1):
        return (level - v0) / (v1 - v0)

    for i in range(n - 1):
        x0 = i * h
        for j in range(n - 1):
            y0 = j * h
            a, b = L[i, j], L[i + 1, j]
            c, d = L[i + 1, j + 1], L[i, j + 1]
            case = ((a >= level) * 1 + (b >= level) * 2
                    + (c >= level) * 4 + (d >= level) * 8)
            if case in (0, 15):
                continue
            if case == 5:
                pairs = ((0, 1), (2, 3)) if (a + b + c + d) / 4 >= level \
                    else ((0, 3), (1, 2))
            elif case == 10:
                pairs = ((0, 3), (1, 2)) if (a + b + c + d) / 4 >= level \
                    else ((0, 1), (2, 3))
            else:
                pairs = _CASE_SEGMENTS[case]
            points = {}
            for e0, e1 in pairs:
                for e in (e0, e1):
                    if e in points:
                        continue
                    if e == 0:
                        points[e] = (x0 + h * cross(a, b), y0)
                    elif e == 1:
                        points[e] = (x0 + h, y0 + h * cross(b, c))
                    elif e == 2:
                        points[e] = (x0 + h * cross(d, c), y0 + h)
                    else:
                        points[e] = (x0, y0 + h * cross(a, d))
                (x1, y1), (x2, y2) = points[e0], points[e1]
                segments.append((x1, y1, x2, y2))
    if not segments:
        return np.empty((0, 4))
    return np.array(segments, dtype=float)


def write_contour_csv(path: PathLike, space: SplineSpace,
                      phi_coeffs: np.ndarray, n_points: int,
                      config_lines: Sequence[str],
                      level: float = 0.5) -> None:
    """Tumor boundary: the phase-field isoline sampled on the lattice."""
    lattice = space.sample_lattice(phi_coeffs, n_points)
    segments = contour_segments(lattice, space.length, level)
    write_csv(path, ("x1", "y1", "x2", "y2"), segments, config_lines,
              extra=(f"contour level = {_fmt(level)}",))


def read_contour_csv(path: PathLike) -> Dict[str, np.ndarray]:
    return read_columns(path, ("x1", "y1", "x2", "y2"))
