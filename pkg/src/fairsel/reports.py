"""Deterministic JSON reports, run manifests and their published schemas."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from . import __version__

REPORT_KINDS = ("pid", "score", "select", "synth", "sweep", "compas_prep")


def format_float(x: float) -> str:
    text = format(x, ".17g")
    # keep integral values recognisable as floats
    return text + ".0" if text.lstrip("-").isdigit() else text


def _emit(obj: Any, indent: int, level: int, out: list[str]) -> None:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None or isinstance(obj, (bool, str)):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(int(obj)))
    elif isinstance(obj, float):
        # non-finite values are not valid JSON numbers
        out.append(format_float(obj) if math.isfinite(obj) else json.dumps(str(obj)))
    elif isinstance(obj, Mapping):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            out.append(("," if i else "") + pad + json.dumps(str(k)) + ": ")
            _emit(v, indent, level + 1, out)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float, str, bool)) or v is None for v in obj):
            out.append("[")
            for i, v in enumerate(obj):
                if i:
                    out.append(", ")
                _emit(v, indent, level + 1, out)
            out.append("]")
            return
        out.append("[")
        for i, v in enumerate(obj):
            out.append(("," if i else "") + pad)
            _emit(v, indent, level + 1, out)
        out.append(end + "]")
    elif hasattr(obj, "tolist"):
        _emit(obj.tolist(), indent, level, out)
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    out: list[str] = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


@dataclass
class RunManifest:
    command: str
    parameters: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    tool_version: str = __version__

    def add_input(self, role: str, path) -> None:
        self.inputs[role] = {"path": Path(path).name, "digest": file_digest(path)}

    def to_json(self) -> dict:
        return {"command": self.command, "tool_version": self.tool_version,
                "parameters": dict(sorted(self.parameters.items())),
                "inputs": dict(sorted(self.inputs.items()))}


def load_schema(kind: str) -> dict:
    if kind not in REPORT_KINDS:
        raise KeyError(f"no published schema for report kind {kind!r}")
    text = resources.files("fairsel").joinpath("schemas", f"{kind}_report.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(doc: Mapping) -> None:
    """Raise ``jsonschema.ValidationError`` if ``doc`` breaks its schema."""
    kind = doc.get("report")
    jsonschema.validate(doc, load_schema(kind))


def make_report(kind: str, manifest: RunManifest, body: Mapping) -> dict:
    doc = {"report": kind, "manifest": manifest.to_json()}
    doc.update(body)
    validate_report(doc)
    return doc
