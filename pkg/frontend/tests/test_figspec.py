"""Spec parsing: panel kinds, path resolution, validation errors."""

import json

import pytest

from tumorplots.figspec import SpecError, load_spec


def write_spec(tmp_path, payload):
    path = tmp_path / "figure.json"
    path.write_text(json.dumps(payload))
    return path


def test_single_panel_shorthand(tmp_path, controls_csv):
    spec = load_spec(write_spec(tmp_path, {
        "output": "fig.png",
        "kind": "controls",
        "inputs": {"controls": controls_csv.name},
    }))
    assert len(spec.panels) == 1
    assert spec.panels[0].kind == "controls"
    assert spec.panels[0].inputs["controls"] == controls_csv
    assert spec.output == tmp_path / "fig.png"


def test_relative_paths_resolve_against_spec_dir(tmp_path, qoi_csv):
    nested = tmp_path / "specs"
    nested.mkdir()
    path = nested / "figure.json"
    path.write_text(json.dumps({
        "output": "out/fig.png",
        "kind": "qoi",
        "inputs": {"runs": [f"../{qoi_csv.name}"]},
    }))
    spec = load_spec(path)
    assert spec.panels[0].inputs["runs"][0]["path"].resolve() == qoi_csv
    assert spec.output == nested / "out" / "fig.png"


def test_unknown_panel_kind_is_rejected(tmp_path, controls_csv):
    with pytest.raises(SpecError, match="unrecognized panel kind"):
        load_spec(write_spec(tmp_path, {
            "output": "fig.png",
            "kind": "surface",
            "inputs": {"controls": controls_csv.name},
        }))


def test_missing_input_file_is_reported(tmp_path):
    with pytest.raises(FileNotFoundError, match="absent.csv"):
        load_spec(write_spec(tmp_path, {
            "output": "fig.png",
            "kind": "controls",
            "inputs": {"controls": "absent.csv"},
        }))


def test_invalid_json_is_a_spec_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(SpecError, match="invalid JSON"):
        load_spec(path)


def test_missing_output_is_rejected(tmp_path, controls_csv):
    with pytest.raises(SpecError, match="output"):
        load_spec(write_spec(tmp_path, {
            "kind": "controls",
            "inputs": {"controls": controls_csv.name},
        }))


def test_bad_series_choice_is_rejected(tmp_path, controls_csv):
    with pytest.raises(SpecError, match="series"):
        load_spec(write_spec(tmp_path, {
            "output": "fig.png",
            "kind": "controls",
            "series": "V",
            "inputs": {"controls": controls_csv.name},
        }))


def test_labeled_list_entries_keep_labels(tmp_path, contour_csv):
    spec = load_spec(write_spec(tmp_path, {
        "output": "fig.png",
        "kind": "contours",
        "inputs": {"contours": [
            {"path": contour_csv.name, "label": "t = T"}]},
    }))
    assert spec.panels[0].inputs["contours"][0]["label"] == "t = T"
