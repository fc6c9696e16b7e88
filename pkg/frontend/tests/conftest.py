"""Shared fixtures: synthetic CSV tables in the simulation CLI format."""

import numpy as np
import pytest

HEADER_NOTE = ["# resolved config", "# grid = 8x8"]


def write_table(path, columns, rows):
    lines = list(HEADER_NOTE)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def controls_csv(tmp_path):
    t = np.linspace(0.0, 21.0, 22)
    u = 0.09 * np.exp(-t / 5.0)
    s = 0.02 * np.exp(-t / 20.0)
    path = tmp_path / "controls.csv"
    write_table(path, ("t", "U", "S"), zip(t, u, s))
    return path


@pytest.fixture
def reference_csv(tmp_path):
    t = np.linspace(0.0, 21.0, 22)
    u = 0.11 * np.exp(-t / 4.0)
    s = 0.03 * np.ones_like(t)
    path = tmp_path / "controls_initial.csv"
    write_table(path, ("t", "U", "S"), zip(t, u, s))
    return path


@pytest.fixture
def qoi_csv(tmp_path):
    t = np.linspace(0.0, 21.0, 22)
    v = 1e5 * (1.0 + 0.02 * t)
    p = 6e5 * (1.0 + 0.01 * t)
    path = tmp_path / "qoi.csv"
    write_table(path, ("t", "v_phi", "P_s"), zip(t, v, p))
    return path


@pytest.fixture
def contour_csv(tmp_path):
    theta = np.linspace(0.0, 2 * np.pi, 33)
    x = 1500.0 + 300.0 * np.cos(theta)
    y = 1500.0 + 200.0 * np.sin(theta)
    rows = zip(x[:-1], y[:-1], x[1:], y[1:])
    path = tmp_path / "contour_final.csv"
    write_table(path, ("x1", "y1", "x2", "y2"), rows)
    return path


@pytest.fixture
def curves_csv(tmp_path):
    t = np.linspace(0.0, 21.0, 22)
    target = 0.1 * np.exp(-t / 6.0)
    single = 0.098 * np.exp(-t / 5.0)
    triple = 0.101 * np.exp(-t / 6.2)
    path = tmp_path / "fit_curves.csv"
    write_table(path, ("t", "target", "dtx1", "new3"),
                zip(t, target, single, triple))
    return path
