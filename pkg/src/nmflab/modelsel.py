"""Splitting, cross-validation and hyperparameter search for label-matrix models."""

from __future__ import annotations

import dataclasses
import enum
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from sklearn.model_selection import KFold, StratifiedKFold

from .classify import (
    Confusion,
    LabelEncoding,
    confusion_matrix,
    encode_hard,
    encode_soft,
    membership_probabilities,
    predict_samples,
)
from .kernel import DesignKind, DesignSpec, KernelDesign, beta_grid, kernel_matrix, median_heuristic_beta
from .matcore import _sq_loss
from .trinmf import TriNmfConfig, TriNmfModel, fit

logger = logging.getLogger(__name__)


class DegenerateStratificationError(ValueError):
    pass


class Criterion(str, enum.Enum):
    LOSS = "loss"
    ACCURACY = "accuracy"


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.4
    valid_frac: float = 0.4
    test_frac: float = 0.2
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.valid_frac, self.test_frac)
        if any(not 0 < f < 1 for f in fracs):
            raise ValueError(f"fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(fracs)}")

    @property
    def fractions(self) -> np.ndarray:
        return np.array([self.train_frac, self.valid_frac, self.test_frac])


def _allocate(n: int, fracs: np.ndarray) -> np.ndarray:
    """Largest-remainder allocation of n items with every part non-empty."""
    raw = n * fracs
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    for i in order[: n - counts.sum()]:
        counts[i] += 1
    while np.any(counts == 0):
        counts[np.argmax(counts)] -= 1
        counts[np.argmin(counts)] += 1
    return counts


def stratified_split(labels: Sequence[str], spec: SplitSpec = SplitSpec()):
    """Disjoint train/valid/test index arrays covering every sample.

    With ``spec.stratified`` each class is split separately, so every part
    gets its share of every class to within one sample.
    """
    labels = np.asarray([str(x) for x in labels])
    rng = np.random.default_rng(spec.seed)
    groups = [np.flatnonzero(labels == c) for c in dict.fromkeys(labels)] \
        if spec.stratified else [np.arange(len(labels))]
    parts = [[], [], []]
    for members in groups:
        if len(members) < 3:
            raise DegenerateStratificationError(
                f"class {labels[members[0]]!r} has {len(members)} samples, need >= 3"
                if len(members) else "no samples to split"
            )
        members = rng.permutation(members)
        counts = _allocate(len(members), spec.fractions)
        bounds = np.cumsum(counts)[:-1]
        for part, chunk in zip(parts, np.split(members, bounds)):
            part.append(chunk)
    return tuple(np.sort(np.concatenate(p)) for p in parts)


@dataclass
class CandidateScore:
    label: str
    beta: Optional[float]
    mean_loss: float
    mean_accuracy: float
    failed: bool = False


@dataclass
class CvResult:
    candidates: list[CandidateScore]
    chosen: int
    criterion: Criterion
    fold_train_shapes: list[tuple[int, int]] = field(default_factory=list)
    fold_indices: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def best(self) -> CandidateScore:
        return self.candidates[self.chosen]


def _pick(scores: list[CandidateScore], criterion: Criterion) -> int:
    """Best candidate; ties go to the smaller beta (direct counts as smallest)."""
    alive = [i for i, s in enumerate(scores) if not s.failed]
    if not alive:
        raise RuntimeError("every candidate failed to fit")
    alive.sort(key=lambda i: -np.inf if scores[i].beta is None else scores[i].beta)
    best = alive[0]
    for i in alive[1:]:
        if criterion is Criterion.LOSS:
            better = scores[i].mean_loss < scores[best].mean_loss
        else:
            better = scores[i].mean_accuracy > scores[best].mean_accuracy
        if better:
            best = i
    return best


def _truth_from(enc: LabelEncoding) -> list[str]:
    return [enc.class_names[i] for i in np.argmax(enc.columns, axis=0)]


def _is_hard(enc: LabelEncoding) -> bool:
    cols = enc.columns
    return bool(np.all((cols == 0) | (cols == 1)) and np.all(cols.sum(axis=0) == 1))


def kfold_cv_kernel(
    features,
    label_enc: LabelEncoding,
    betas: Sequence[float],
    k: int = 5,
    cfg: Optional[TriNmfConfig] = None,
    criterion: Criterion = Criterion.LOSS,
    *,
    truth: Optional[Sequence[str]] = None,
    seed: int = 0,
) -> CvResult:
    """k-fold cross-validation of the Gaussian bandwidth.

    For every beta the kernel is computed once on all samples; each fold then
    deletes the held-out rows and columns, fits on the remaining
    (N - n_out) x (N - n_out) block and scores the held-out samples through
    their similarities to the training samples only. The loss is the squared
    error between held-out label columns and the raw reconstruction
    ``X @ Theta @ a``; accuracy uses the normalized probabilities.
    """
    criterion = Criterion(criterion)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(betas) == 0:
        raise ValueError("need at least one beta")
    features = np.asarray(features, dtype=np.float64)
    y = label_enc.columns
    n = y.shape[1]
    truth = list(truth) if truth is not None else _truth_from(label_enc)
    cfg = cfg or TriNmfConfig(rank_q=label_enc.n_classes)

    if _is_hard(label_enc):
        splitter = StratifiedKFold(k, shuffle=True, random_state=seed)
        folds = list(splitter.split(np.zeros(n), truth))
    else:
        folds = list(KFold(k, shuffle=True, random_state=seed).split(np.zeros(n)))

    truth_arr = np.asarray(truth)
    scores, shapes = [], []
    for beta in sorted(betas):
        gram = kernel_matrix(features, features, beta)
        losses, accs = [], []
        for tr, va in folds:
            a_tr = gram[np.ix_(tr, tr)]
            a_va = gram[np.ix_(tr, va)]
            shapes.append(a_tr.shape)
            design = KernelDesign(DesignKind.GAUSSIAN_FULL, features.shape[1], beta, features[tr])
            model, _ = fit(y[:, tr], a_tr, cfg, design=design, class_names=label_enc.class_names)
            losses.append(_sq_loss(y[:, va], model.x @ model.theta @ a_va))
            missing = set(label_enc.class_names) - set(truth_arr[tr])
            if missing:
                warnings.warn(f"fold training part lacks classes {sorted(missing)}; "
                              "skipping it for accuracy", RuntimeWarning, stacklevel=2)
                continue
            pred = membership_probabilities(model, a_va)
            accs.append(float(np.mean(np.asarray(pred.predicted_class) == truth_arr[va])))
        scores.append(CandidateScore(
            label=f"gaussian beta={beta:.6g}",
            beta=float(beta),
            mean_loss=float(np.mean(losses)),
            mean_accuracy=float(np.mean(accs)) if accs else float("nan"),
        ))
    return CvResult(scores, _pick(scores, criterion), criterion, shapes, folds)


@dataclass
class GridSearchResult:
    cv: CvResult
    model: TriNmfModel
    n_train: int
    spec: DesignSpec


def grid_search(
    train_features,
    train_enc: LabelEncoding,
    valid_features,
    valid_enc: LabelEncoding,
    candidates: Sequence[DesignSpec],
    cfg: TriNmfConfig,
    criterion: Criterion = Criterion.LOSS,
    *,
    valid_truth: Optional[Sequence[str]] = None,
    refit_valid_enc: Optional[LabelEncoding] = None,
) -> GridSearchResult:
    """Score each candidate design on a validation set, then refit the winner.

    The winner is refit on the union of training and validation samples, with
    its bandwidth held at the selected value. ``refit_valid_enc`` replaces
    ``valid_enc`` in the refit, e.g. when validation labels are scored hard
    but trained soft.
    """
    criterion = Criterion(criterion)
    if len(candidates) == 0:
        raise ValueError("need at least one candidate")
    train_features = np.asarray(train_features, dtype=np.float64)
    valid_features = np.asarray(valid_features, dtype=np.float64)
    truth = np.asarray(valid_truth if valid_truth is not None else _truth_from(valid_enc))

    scores, resolved = [], []
    for spec in candidates:
        try:
            design = spec.build(train_features)
            spec = dataclasses.replace(spec, beta=design.beta)
            model, _ = fit(train_enc.columns, design.build(train_features), cfg,
                           design=design, class_names=train_enc.class_names)
            a_va = design.build(valid_features)
            loss = _sq_loss(valid_enc.columns, model.x @ model.theta @ a_va)
            pred = membership_probabilities(model, a_va)
            acc = float(np.mean(np.asarray(pred.predicted_class) == truth))
            scores.append(CandidateScore(spec.label(), design.beta, loss, acc))
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.warning("candidate %s failed: %s", spec.label(), exc)
            scores.append(CandidateScore(spec.label(), spec.beta, np.inf, -np.inf, failed=True))
        resolved.append(spec)

    chosen = _pick(scores, criterion)
    winner = resolved[chosen]
    all_features = np.vstack([train_features, valid_features])
    all_enc = train_enc.concat(refit_valid_enc if refit_valid_enc is not None else valid_enc)
    design = winner.build(all_features)
    model, _ = fit(all_enc.columns, design.build(all_features), cfg,
                   design=design, class_names=train_enc.class_names)
    return GridSearchResult(CvResult(scores, chosen, criterion), model, all_features.shape[0], winner)


@dataclass
class EvalResult:
    accuracies: np.ndarray
    confusions: list[Confusion]
    chosen: list[str]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def sd(self) -> float:
        if len(self.accuracies) < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))


Pipeline = Callable[..., object]


def repeated_evaluation(
    features,
    labels: Sequence[str],
    spec: SplitSpec,
    repeats: int,
    pipeline: Pipeline,
    class_names: Optional[Sequence[str]] = None,
) -> EvalResult:
    """Split, tune, refit and test ``repeats`` times with seeds ``spec.seed + i``.

    ``pipeline(train_x, train_labels, valid_x, valid_labels, seed)`` must
    return an object whose ``predict(samples)`` gives a ``ProbPrediction``.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    features = np.asarray(features, dtype=np.float64)
    labels = [str(x) for x in labels]
    names = tuple(class_names) if class_names is not None else tuple(dict.fromkeys(labels))
    lab = np.asarray(labels)
    accs, confs, chosen = [], [], []
    for i in range(repeats):
        seed = spec.seed + i
        try:
            tr, va, te = stratified_split(labels, dataclasses.replace(spec, seed=seed))
            fitted = pipeline(features[tr], list(lab[tr]), features[va], list(lab[va]), seed)
            pred = fitted.predict(features[te])
            conf = confusion_matrix(pred, list(lab[te]))
        except Exception as exc:
            raise RuntimeError(f"repeat {i} (seed {seed}) failed: {exc}") from exc
        accs.append(conf.accuracy)
        confs.append(conf)
        chosen.append(getattr(fitted, "description", ""))
    return EvalResult(np.array(accs), confs, chosen)


@dataclass
class FittedClassifier:
    model: TriNmfModel
    search: GridSearchResult

    @property
    def description(self) -> str:
        return self.search.spec.label()

    def predict(self, samples):
        return predict_samples(self.model, samples)


def nmflab_pipeline(
    kind: DesignKind | str,
    *,
    cfg: Optional[TriNmfConfig] = None,
    criterion: Criterion = Criterion.LOSS,
    soft_r: float = 1.0,
    grid_exponents: Sequence[float] = (-2, -1, 0, 1),
    betas: Optional[Sequence[float]] = None,
    n_landmarks: Optional[int] = None,
    class_names: Optional[Sequence[str]] = None,
) -> Pipeline:
    """Standard protocol: Q = P, beta grid around the median heuristic.

    Training and validation labels are encoded with ``soft_r`` for fitting;
    validation scoring always uses the hard labels.
    """
    kind = DesignKind(kind)
    base = cfg or TriNmfConfig(rank_q=1)

    def run(train_x, train_labels, valid_x, valid_labels, seed):
        names = tuple(class_names) if class_names is not None \
            else tuple(dict.fromkeys(list(train_labels) + list(valid_labels)))
        run_cfg = dataclasses.replace(base, rank_q=len(names), seed=seed)
        train_enc = encode_soft(train_labels, names, soft_r)
        valid_hard = encode_hard(valid_labels, names)
        if kind is DesignKind.DIRECT:
            specs = [DesignSpec(kind)]
        else:
            grid = betas if betas is not None else beta_grid(
                median_heuristic_beta(train_x, seed=seed), grid_exponents)
            specs = [DesignSpec(kind, b, n_landmarks, seed) for b in grid]
        search = grid_search(train_x, train_enc, valid_x, valid_hard, specs, run_cfg,
                             criterion, valid_truth=valid_labels,
                             refit_valid_enc=encode_soft(valid_labels, names, soft_r))
        return FittedClassifier(search.model, search)

    return run
