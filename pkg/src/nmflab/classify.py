"""Label matrices and class-membership probabilities.

Labels are encoded as columns on the probability simplex: one-hot for hard
labels, ``r`` on the stated class and ``(1 - r) / (P - 1)`` elsewhere for soft
labels, and ``1 / P`` everywhere for unlabeled samples. A fitted model turns
new covariates into probabilities by normalizing ``B = Theta @ a`` column by
column and mixing the basis columns: ``Y~ = X @ B~``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .matcore import ShapeError, _column_normalize, as_nonneg


class UnknownLabelError(ValueError):
    pass


@dataclass(frozen=True)
class LabelEncoding:
    class_names: tuple[str, ...]
    columns: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return self.columns.shape[1]

    def subset(self, idx) -> "LabelEncoding":
        return LabelEncoding(self.class_names, self.columns[:, idx])

    def concat(self, other: "LabelEncoding") -> "LabelEncoding":
        if other.class_names != self.class_names:
            raise ValueError("cannot concatenate encodings with different class lists")
        return LabelEncoding(self.class_names, np.hstack([self.columns, other.columns]))


def class_order(labels: Sequence[str]) -> tuple[str, ...]:
    """Distinct labels in order of first appearance."""
    return tuple(dict.fromkeys(str(x) for x in labels))


def _indices(labels, class_names) -> np.ndarray:
    pos = {c: i for i, c in enumerate(class_names)}
    try:
        return np.array([pos[str(lab)] for lab in labels], dtype=np.intp)
    except KeyError as exc:
        raise UnknownLabelError(f"label {exc.args[0]!r} not in {list(class_names)}") from None


def encode_hard(labels: Sequence[str], class_names: Optional[Sequence[str]] = None) -> LabelEncoding:
    names = class_order(labels) if class_names is None else tuple(str(c) for c in class_names)
    idx = _indices(labels, names)
    cols = np.zeros((len(names), len(idx)))
    cols[idx, np.arange(len(idx))] = 1.0
    return LabelEncoding(names, cols)


def encode_soft(labels: Sequence[str], class_names: Optional[Sequence[str]], r: float) -> LabelEncoding:
    """Put mass ``r`` on each sample's class and spread the rest evenly."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    if r == 1.0:
        return encode_hard(labels, class_names)
    names = class_order(labels) if class_names is None else tuple(str(c) for c in class_names)
    p = len(names)
    if p < 2:
        raise ValueError("soft labels with r < 1 need at least two classes")
    idx = _indices(labels, names)
    cols = np.full((p, len(idx)), (1.0 - r) / (p - 1))
    cols[idx, np.arange(len(idx))] = r
    return LabelEncoding(names, cols)


def encode_unlabeled(count: int, class_names: Sequence[str]) -> LabelEncoding:
    names = tuple(str(c) for c in class_names)
    if len(names) < 1:
        raise ValueError("need at least one class")
    return LabelEncoding(names, np.full((len(names), int(count)), 1.0 / len(names)))


@dataclass(frozen=True)
class ProbPrediction:
    probabilities: np.ndarray
    predicted_class: tuple[str, ...]
    class_names: tuple[str, ...]

    @property
    def predicted_index(self) -> np.ndarray:
        return np.argmax(self.probabilities, axis=0)


def membership_probabilities(model, a_new, class_names: Optional[Sequence[str]] = None) -> ProbPrediction:
    """Class probabilities for covariate columns ``a_new`` (R x n).

    Ties in the arg-max go to the lowest class index.
    """
    a_new = as_nonneg(a_new, "a_new")
    if a_new.shape[0] != model.theta.shape[1]:
        raise ShapeError(f"a_new has {a_new.shape[0]} rows, model expects {model.theta.shape[1]}")
    names = class_names if class_names is not None else model.class_names
    if names is None:
        names = tuple(f"class{i + 1}" for i in range(model.x.shape[0]))
    names = tuple(names)
    b_tilde, _ = _column_normalize(model.theta @ a_new)
    probs = model.x @ b_tilde
    top = np.argmax(probs, axis=0)
    return ProbPrediction(probs, tuple(names[i] for i in top), names)


def predict_samples(model, samples) -> ProbPrediction:
    """Probabilities for raw feature rows via the model's covariate design."""
    return membership_probabilities(model, model.covariates(samples))


@dataclass(frozen=True)
class Confusion:
    """Counts with rows = predicted class and columns = true class."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else float("nan")


def confusion_matrix(pred: ProbPrediction, truth: Sequence[str]) -> Confusion:
    if len(pred.predicted_class) != len(truth):
        raise ValueError(
            f"{len(pred.predicted_class)} predictions but {len(truth)} true labels"
        )
    names = pred.class_names
    p_idx = _indices(pred.predicted_class, names)
    t_idx = _indices(truth, names)
    counts = np.zeros((len(names), len(names)), dtype=np.int64)
    np.add.at(counts, (p_idx, t_idx), 1)
    return Confusion(counts, names)


def assign_bases(x: np.ndarray, class_names: Sequence[str]) -> list[str]:
    """Class of the largest entry in each basis column.

    Warns when the result is not a permutation of the classes, i.e. the
    basis does not line up one-to-one with the classes.
    """
    names = list(class_names)
    owners = [names[i] for i in np.argmax(x, axis=0)]
    if x.shape[1] == len(names) and len(set(owners)) != len(names):
        warnings.warn(
            f"basis columns do not map one-to-one onto classes: {owners}",
            RuntimeWarning,
            stacklevel=2,
        )
    return owners
