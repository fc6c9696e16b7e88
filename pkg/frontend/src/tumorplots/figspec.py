"""Figure description: JSON spec naming panels, inputs, and output.

A spec file is a JSON object with an ``output`` image path and either
a single panel description inline or a ``panels`` list. Each panel
carries a ``kind`` tag (controls | qoi | contours | protocol), a
``kind``-specific ``inputs`` mapping of CSV paths, and optional
``labels`` overrides. Relative input and output paths are resolved
against the directory containing the spec file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

PathLike = Union[str, Path]

PANEL_KINDS = ("controls", "qoi", "contours", "protocol")
CONTROL_SERIES = ("U", "S", "both")
QOI_FIELDS = ("v_phi", "P_s", "both")


class SpecError(ValueError):
    """A figure spec is malformed or references missing inputs."""


@dataclass
class PanelSpec:
    """One panel: a recognized kind plus its input tables."""

    kind: str
    inputs: Dict[str, object]
    labels: Dict[str, str] = field(default_factory=dict)
    series: str = "both"
    fields: str = "both"


@dataclass
class FigureSpec:
    """One figure: panel list, output image path, global options."""

    panels: List[PanelSpec]
    output: Path
    title: str = ""
    dpi: int = 150


def _resolve(base: Path, value: object, context: str) -> Path:
    if not isinstance(value, str) or not value:
        raise SpecError(f"{context}: expected a non-empty path string")
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    return p


def _labeled_paths(base: Path, value: object, context: str
                   ) -> List[Dict[str, object]]:
    """Normalize a list of {path, label} entries (bare strings allowed)."""
    if not isinstance(value, list) or not value:
        raise SpecError(f"{context}: expected a non-empty list")
    out = []
    for i, entry in enumerate(value):
        where = f"{context}[{i}]"
        if isinstance(entry, str):
            entry = {"path": entry}
        if not isinstance(entry, dict) or "path" not in entry:
            raise SpecError(f"{where}: expected a path or a {{path, label}}"
                            " object")
        path = _resolve(base, entry["path"], where)
        label = str(entry.get("label", path.stem))
        out.append({"path": path, "label": label})
    return out


def _parse_panel(base: Path, raw: object, context: str) -> PanelSpec:
    if not isinstance(raw, dict):
        raise SpecError(f"{context}: expected an object")
    kind = raw.get("kind")
    if kind not in PANEL_KINDS:
        raise SpecError(f"{context}: unrecognized panel kind {kind!r}; "
                        f"expected one of {', '.join(PANEL_KINDS)}")
    inputs = raw.get("inputs")
    if not isinstance(inputs, dict):
        raise SpecError(f"{context}: missing inputs mapping")

    parsed: Dict[str, object] = {}
    if kind == "controls":
        if "controls" not in inputs:
            raise SpecError(f"{context}: controls panel needs "
                            "inputs.controls")
        parsed["controls"] = _resolve(base, inputs["controls"],
                                      f"{context}.inputs.controls")
        if "reference" in inputs:
            parsed["reference"] = _resolve(base, inputs["reference"],
                                           f"{context}.inputs.reference")
    elif kind == "qoi":
        if "runs" not in inputs:
            raise SpecError(f"{context}: qoi panel needs inputs.runs")
        parsed["runs"] = _labeled_paths(base, inputs["runs"],
                                        f"{context}.inputs.runs")
    elif kind == "contours":
        if "contours" not in inputs:
            raise SpecError(f"{context}: contours panel needs "
                            "inputs.contours")
        parsed["contours"] = _labeled_paths(base, inputs["contours"],
                                            f"{context}.inputs.contours")
    else:
        if "curves" not in inputs:
            raise SpecError(f"{context}: protocol panel needs inputs.curves")
        parsed["curves"] = _resolve(base, inputs["curves"],
                                    f"{context}.inputs.curves")

    labels = raw.get("labels", {})
    if not isinstance(labels, dict):
        raise SpecError(f"{context}: labels must be an object")

    series = str(raw.get("series", "both"))
    if kind == "controls" and series not in CONTROL_SERIES:
        raise SpecError(f"{context}: series must be one of "
                        f"{', '.join(CONTROL_SERIES)}")
    fields = str(raw.get("fields", "both"))
    if kind == "qoi" and fields not in QOI_FIELDS:
        raise SpecError(f"{context}: fields must be one of "
                        f"{', '.join(QOI_FIELDS)}")

    return PanelSpec(kind=kind, inputs=parsed,
                     labels={str(k): str(v) for k, v in labels.items()},
                     series=series, fields=fields)


def _input_paths(panel: PanelSpec) -> List[Path]:
    paths: List[Path] = []
    for value in panel.inputs.values():
        if isinstance(value, Path):
            paths.append(value)
        else:
            paths.extend(entry["path"] for entry in value)
    return paths


def parse_spec(raw: object, base: Path) -> FigureSpec:
    """Validate a decoded JSON object into a FigureSpec."""
    if not isinstance(raw, dict):
        raise SpecError("figure spec must be a JSON object")
    output = raw.get("output")
    if not isinstance(output, str) or not output:
        raise SpecError("figure spec needs a non-empty output path")

    if "panels" in raw:
        entries = raw["panels"]
        if not isinstance(entries, list) or not entries:
            raise SpecError("panels must be a non-empty list")
        panels = [_parse_panel(base, entry, f"panels[{i}]")
                  for i, entry in enumerate(entries)]
    elif "kind" in raw:
        panels = [_parse_panel(base, raw, "panel")]
    else:
        raise SpecError("figure spec needs either a panels list or an "
                        "inline panel kind")

    dpi = raw.get("dpi", 150)
    if not isinstance(dpi, int) or dpi <= 0:
        raise SpecError("dpi must be a positive integer")

    spec = FigureSpec(panels=panels,
                      output=_resolve(base, output, "output"),
                      title=str(raw.get("title", "")), dpi=dpi)
    missing = [str(p) for panel in spec.panels
               for p in _input_paths(panel) if not p.is_file()]
    if missing:
        raise FileNotFoundError(
            "input file(s) not found: " + ", ".join(missing))
    return spec


def load_spec(path: PathLike) -> FigureSpec:
    """Read and validate one figure spec file."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"spec file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{p}: invalid JSON ({exc})") from None
    return parse_spec(raw, p.parent.resolve())
