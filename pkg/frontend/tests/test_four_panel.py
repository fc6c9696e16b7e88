"""Acceptance: a four-panel figure from a completed optimization run.

The fixture runs the simulation CLI end to end on a small desk case,
then the figure is rendered from the resulting CSV files alone. Every
plotted series must equal the file contents exactly.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from tumorplots.csvio import read_columns
from tumorplots.render import render

RUN_CONFIG = """
[grid]
elements = 8
lattice = 9
[time]
dt = 0.1
duration = 0.5
[descent]
max_iters = 2
[output]
directory = out
"""


@pytest.fixture(scope="module")
def optimization_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("deskrun")
    cfg = root / "run.ini"
    cfg.write_text(RUN_CONFIG)
    out = root / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "tumorctl.cli", "optimize",
         "--config", str(cfg), "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out


def four_panel_spec(out_dir):
    return {
        "output": "figure.png",
        "title": "desk optimization",
        "panels": [
            {"kind": "controls", "series": "U",
             "inputs": {"controls": "out/controls.csv",
                        "reference": "out/controls_initial.csv"},
             "labels": {"title": "A"}},
            {"kind": "controls", "series": "S",
             "inputs": {"controls": "out/controls.csv",
                        "reference": "out/controls_initial.csv"},
             "labels": {"title": "B"}},
            {"kind": "qoi",
             "inputs": {"runs": [{"path": "out/qoi.csv",
                                  "label": "optimal"}]},
             "labels": {"title": "C"}},
            {"kind": "contours",
             "inputs": {"contours": [
                 {"path": "out/contour_initial.csv", "label": "t = 0"},
                 {"path": "out/contour_final.csv", "label": "t = T"}]},
             "labels": {"title": "D"}},
        ],
    }


def test_four_panel_figure_matches_run_outputs(optimization_dir):
    root = optimization_dir.parent
    spec_path = root / "figure.json"
    spec_path.write_text(json.dumps(four_panel_spec(optimization_dir)))

    report = render(spec_path)
    assert report.output.is_file()
    assert [p.kind for p in report.panels] == [
        "controls", "controls", "qoi", "contours"]

    controls = read_columns(optimization_dir / "controls.csv",
                            ("t", "U", "S"))
    reference = read_columns(optimization_dir / "controls_initial.csv",
                             ("t", "U", "S"))
    qoi = read_columns(optimization_dir / "qoi.csv", ("t", "v_phi", "P_s"))

    panel_a, panel_b, panel_c, panel_d = report.panels
    assert np.array_equal(panel_a.series["U"][1], controls["U"])
    assert np.array_equal(panel_a.series["U_0"][1], reference["U"])
    assert np.array_equal(panel_b.series["S"][1], controls["S"])
    assert np.array_equal(panel_b.series["S_0"][1], reference["S"])
    assert np.array_equal(panel_c.series["optimal:v_phi"][1], qoi["v_phi"])
    assert np.array_equal(panel_c.series["optimal:P_s"][1], qoi["P_s"])

    for name, csv in (("t = 0", "contour_initial.csv"),
                      ("t = T", "contour_final.csv")):
        table = read_columns(optimization_dir / csv,
                             ("x1", "y1", "x2", "y2"))
        for got, col in zip(panel_d.series[name],
                            ("x1", "y1", "x2", "y2")):
            assert np.array_equal(got, table[col])


def test_rerender_leaves_run_outputs_untouched(optimization_dir):
    import hashlib

    root = optimization_dir.parent
    spec_path = root / "figure2.json"
    payload = four_panel_spec(optimization_dir)
    payload["output"] = "figure2.png"
    spec_path.write_text(json.dumps(payload))

    digests = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
               for p in sorted(optimization_dir.glob("*.csv"))}
    render(spec_path)
    after = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
             for p in sorted(optimization_dir.glob("*.csv"))}
    assert digests == after
