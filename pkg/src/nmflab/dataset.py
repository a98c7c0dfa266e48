"""CSV ingestion, min-max scaling and the bundled example datasets."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "NMFLAB_DATA_DIR"

# name -> (file, label column, id column)
BUNDLED = {
    "orthodont": ("orthodont.csv", "sex", "subject"),
    "iris": ("iris.csv", "species", None),
    "digits": ("digits.csv", "digit", None),
}
# Not shipped; looked up in the data directory.
CACHED = {
    "seeds": ("seeds.csv", "variety", None),
    "mnist_train": ("mnist_train.csv", "label", None),
    "mnist_test": ("mnist_test.csv", "label", None),
}


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    """Feature rows (N x d) plus optional labels.

    ``scaling`` holds one ``(min, max)`` pair per feature when the samples
    were min-max scaled, otherwise ``None``. ``labels`` entries are ``None``
    for unlabeled samples.
    """

    feature_names: list[str]
    samples: np.ndarray
    labels: Optional[list[Optional[str]]] = None
    scaling: Optional[np.ndarray] = None
    ids: list[str] = field(default_factory=list)
    dropped: int = 0

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def class_names(self) -> tuple[str, ...]:
        if self.labels is None:
            return ()
        return tuple(dict.fromkeys(x for x in self.labels if x is not None))


def data_dir(override: Optional[str] = None) -> Path:
    if override:
        return Path(override)
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else Path.home() / ".cache" / "nmflab"


def resolve(name_or_path: str, data_dir_override: Optional[str] = None):
    """Map a dataset name or a file path to ``(path, label_column, id_column)``."""
    key = name_or_path.lower()
    if key in BUNDLED:
        fname, label, ident = BUNDLED[key]
        return Path(str(resources.files("nmflab") / "data" / fname)), label, ident
    if key in CACHED:
        fname, label, ident = CACHED[key]
        path = data_dir(data_dir_override) / fname
        if not path.exists():
            raise DatasetError(f"{name_or_path} is not bundled; expected it at {path} "
                               f"(set {DATA_DIR_ENV} or see scripts/)")
        return path, label, ident
    return Path(name_or_path), None, None


def fit_scaling(samples: np.ndarray) -> np.ndarray:
    return np.column_stack([samples.min(axis=0), samples.max(axis=0)])


def apply_scaling(samples: np.ndarray, scaling: np.ndarray, clip: bool = False) -> np.ndarray:
    """Min-max transform with recorded pairs; constant features map to 0."""
    lo, hi = scaling[:, 0], scaling[:, 1]
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (samples - lo) / safe, 0.0)
    return np.clip(out, 0.0, 1.0) if clip else out


def load_csv(
    path,
    label_column: Optional[str] = None,
    *,
    id_column: Optional[str] = None,
    feature_columns: Optional[Sequence[str]] = None,
    scale: bool = True,
    unlabeled_token: Optional[str] = None,
    allow_empty: bool = False,
) -> Dataset:
    """Read a CSV with a header row, one sample per row.

    Columns whose every non-empty cell is numeric become features unless
    ``feature_columns`` picks them explicitly; columns with no numeric cell
    are ignored (the first becomes the id column if none is named). Rows with
    an empty feature or label cell are dropped and counted.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path} has no header row") from None
    raw.columns = [c.strip() for c in raw.columns]
    raw = raw.apply(lambda col: col.str.strip())

    if label_column is not None and label_column not in raw.columns:
        raise DatasetError(f"label column {label_column!r} not in {list(raw.columns)}")
    if id_column is not None and id_column not in raw.columns:
        raise DatasetError(f"id column {id_column!r} not in {list(raw.columns)}")

    reserved = {label_column, id_column}
    candidates = list(feature_columns) if feature_columns is not None \
        else [c for c in raw.columns if c not in reserved]
    features = []
    for col in candidates:
        if col not in raw.columns:
            raise DatasetError(f"feature column {col!r} not in file")
        cells = raw[col]
        filled = cells != ""
        nums = pd.to_numeric(cells.where(filled), errors="coerce")
        bad = filled & nums.isna()
        if feature_columns is None and len(cells) and bad.sum() == filled.sum() and filled.any():
            if id_column is None:
                id_column = col
            continue
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DatasetError(f"non-numeric value {cells.iloc[row]!r} in feature column "
                               f"{col!r} (data row {row + 1})")
        features.append(col)
    if not features:
        raise DatasetError("no numeric feature columns found")

    keep = (raw[features] != "").all(axis=1)
    if label_column is not None:
        keep &= raw[label_column] != ""
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("dropped %d row(s) with missing values", dropped)
    raw = raw[keep]
    if len(raw) == 0 and not allow_empty:
        raise DatasetError(f"{path} has no complete data rows")

    samples = raw[features].astype(np.float64).to_numpy().reshape(len(raw), len(features))
    scaling = None
    if scale and len(raw):
        scaling = fit_scaling(samples)
        samples = apply_scaling(samples, scaling)

    labels = None
    if label_column is not None:
        labels = [None if (unlabeled_token is not None and v == unlabeled_token) else v
                  for v in raw[label_column]]
    ids = list(raw[id_column]) if id_column is not None else [str(i + 1) for i in raw.index]
    return Dataset(features, samples, labels, scaling, ids, dropped)


def load_named(name: str, *, scale: bool = True, data_dir_override: Optional[str] = None) -> Dataset:
    path, label, ident = resolve(name, data_dir_override)
    return load_csv(path, label, id_column=ident, scale=scale)
