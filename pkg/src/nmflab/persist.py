"""Model files.

A model file is UTF-8 JSON::

    {
      "format": "nmflab-model",
      "version": 1,
      "mode": "label" | "forward",
      "class_names": [...],            # rows of Y (label mode) or groups (forward)
      "feature_names": [...],
      "x": [[...], ...],               # P x Q, row-major
      "theta": [[...], ...],           # Q x R, row-major
      "design": {"kind": "direct" | "gaussian" | "nystrom",
                 "feature_dim": d, "beta": float | null,
                 "anchors": [[...], ...] | null},
      "scaling": [[min, max], ...] | null,
      "fit": {"final_loss": ..., "iterations": ..., "converged": ..., "seed": ...}
    }

Floats are written with Python's shortest round-trip ``repr``, so loading a
file restores every matrix entry exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .kernel import DesignKind, KernelDesign
from .trinmf import TriNmfModel

FORMAT = "nmflab-model"
VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class ModelFile:
    model: TriNmfModel
    mode: str
    feature_names: list[str]
    scaling: Optional[np.ndarray] = None
    fit_info: dict = field(default_factory=dict)

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.model.class_names or ()


def _matrix(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def to_dict(mf: ModelFile) -> dict:
    m = mf.model
    d = m.design
    return {
        "format": FORMAT,
        "version": VERSION,
        "mode": mf.mode,
        "class_names": list(mf.class_names),
        "feature_names": list(mf.feature_names),
        "x": _matrix(m.x),
        "theta": _matrix(m.theta),
        "design": {
            "kind": d.kind.value,
            "feature_dim": d.feature_dim,
            "beta": d.beta,
            "anchors": None if d.anchors is None else _matrix(d.anchors),
        },
        "scaling": None if mf.scaling is None else _matrix(mf.scaling),
        "fit": mf.fit_info,
    }


def from_dict(doc: dict) -> ModelFile:
    if doc.get("format") != FORMAT:
        raise ModelFormatError(f"not an {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r} "
                               f"(this build reads version {VERSION})")
    dd = doc["design"]
    design = KernelDesign(
        DesignKind(dd["kind"]),
        int(dd["feature_dim"]),
        dd["beta"],
        None if dd["anchors"] is None else np.array(dd["anchors"], dtype=np.float64),
    )
    model = TriNmfModel(
        x=np.array(doc["x"], dtype=np.float64),
        theta=np.array(doc["theta"], dtype=np.float64),
        design=design,
        class_names=tuple(doc["class_names"]),
    )
    scaling = None if doc["scaling"] is None else np.array(doc["scaling"], dtype=np.float64)
    return ModelFile(model, doc["mode"], list(doc["feature_names"]), scaling, doc.get("fit", {}))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(mf: ModelFile, path) -> None:
    atomic_write_text(path, json.dumps(to_dict(mf), indent=1) + "\n")


def load(path) -> ModelFile:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None
    return from_dict(doc)
