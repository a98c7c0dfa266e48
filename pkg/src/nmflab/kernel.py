"""Covariate designs built from raw feature vectors.

A design turns n feature rows into an R x n covariate matrix:

* ``direct``: the features themselves, one column per sample (R = feature_dim);
* ``gaussian``: similarities ``exp(-beta * ||anchor - u||^2)`` to every
  training sample (R = N);
* ``nystrom``: the same similarities to M landmark points (R = M), i.e. the
  transpose of the Nystrom ``C`` matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist
from sklearn.cluster import KMeans

from .matcore import DomainError, ShapeError

MEDIAN_EXACT_LIMIT = 2000
LANDMARK_SUBSET_CAP = 10_000
DECADE_GRID_EXPONENTS = (-2, -1, 0, 1)


class DegenerateInputError(ValueError):
    """Raised when the data cannot support the requested computation."""


class DesignKind(str, enum.Enum):
    DIRECT = "direct"
    GAUSSIAN_FULL = "gaussian"
    GAUSSIAN_NYSTROM = "nystrom"


def _as_samples(samples, name="samples") -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a list of feature vectors, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or infinite values")
    return arr


def _check_beta(beta) -> float:
    beta = float(beta)
    if not (beta > 0 and np.isfinite(beta)):
        raise ValueError(f"beta must be positive and finite, got {beta!r}")
    return beta


def gaussian_kernel(u, v, beta: float) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"vectors have dimensions {u.size} and {v.size}")
    beta = _check_beta(beta)
    d = u - v
    return float(np.exp(-beta * (d @ d)))


def kernel_matrix(anchors, samples, beta: float) -> np.ndarray:
    """Matrix with entry ``(m, n) = k(anchors[m], samples[n])``."""
    anchors = _as_samples(anchors, "anchors")
    samples = _as_samples(samples)
    if anchors.shape[1] != samples.shape[1]:
        raise ShapeError(
            f"anchors have {anchors.shape[1]} features, samples have {samples.shape[1]}"
        )
    beta = _check_beta(beta)
    return np.exp(-beta * cdist(anchors, samples, "sqeuclidean"))


@dataclass(frozen=True, eq=False)
class KernelDesign:
    """How covariate columns are built for any set of samples.

    ``anchors`` holds the training samples (``gaussian``) or the landmarks
    (``nystrom``); it is ``None`` for ``direct``.
    """

    kind: DesignKind
    feature_dim: int
    beta: Optional[float] = None
    anchors: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        if self.kind is DesignKind.DIRECT:
            return
        object.__setattr__(self, "beta", _check_beta(self.beta))
        if self.anchors is None or len(self.anchors) < 1:
            raise ValueError(f"{self.kind.value} design needs at least one anchor")
        anchors = _as_samples(self.anchors, "anchors")
        if anchors.shape[1] != self.feature_dim:
            raise ShapeError(
                f"anchors have {anchors.shape[1]} features, design says {self.feature_dim}"
            )
        anchors.setflags(write=False)
        object.__setattr__(self, "anchors", anchors)

    @property
    def n_covariates(self) -> int:
        if self.kind is DesignKind.DIRECT:
            return self.feature_dim
        return self.anchors.shape[0]

    def build(self, samples) -> np.ndarray:
        return build_covariates(self, samples)


def build_covariates(design: KernelDesign, samples) -> np.ndarray:
    """Covariate matrix (R x n) for the feature rows in ``samples``."""
    samples = _as_samples(samples)
    if samples.shape[1] != design.feature_dim:
        raise ShapeError(
            f"samples have {samples.shape[1]} features, design expects {design.feature_dim}"
        )
    if design.kind is DesignKind.DIRECT:
        if np.any(samples < 0):
            raise DomainError("direct design requires non-negative feature values")
        return np.ascontiguousarray(samples.T)
    return kernel_matrix(design.anchors, samples, design.beta)


def median_heuristic_beta(samples, *, seed: int = 0) -> float:
    """``1 / median`` of the squared pairwise distances between samples.

    Above ``MEDIAN_EXACT_LIMIT`` samples the median is taken over a seeded
    random subset of that size.
    """
    samples = _as_samples(samples)
    if samples.shape[0] < 2:
        raise DegenerateInputError("median heuristic needs at least two samples")
    if samples.shape[0] > MEDIAN_EXACT_LIMIT:
        rng = np.random.default_rng(seed)
        idx = rng.choice(samples.shape[0], MEDIAN_EXACT_LIMIT, replace=False)
        samples = samples[idx]
    med = float(np.median(pdist(samples, "sqeuclidean")))
    if not med > 0:
        raise DegenerateInputError(
            "median squared pairwise distance is 0 (samples mostly identical)"
        )
    return 1.0 / med


def beta_grid(beta_median: float, exponents=DECADE_GRID_EXPONENTS) -> list[float]:
    """``beta_median * 10**e`` for each exponent, ascending."""
    beta_median = _check_beta(beta_median)
    return [beta_median * 10.0 ** e for e in sorted(exponents)]


def fine_beta_grid(beta_median: float, lo: float = -2, hi: float = 1, per_decade: int = 4):
    """Log-spaced grid over ``beta_median * [10**lo, 10**hi]``."""
    steps = int(round((hi - lo) * per_decade))
    return beta_grid(beta_median, [lo + k / per_decade for k in range(steps + 1)])


def select_landmarks(samples, m: int, seed: int = 0, subset_cap: int = LANDMARK_SUBSET_CAP):
    """k-means centroids used as Nystrom landmarks.

    When there are more than ``subset_cap`` samples the clustering runs on a
    seeded uniform subset of that size.
    """
    samples = _as_samples(samples)
    n = samples.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"landmark count must be in [1, {n}], got {m}")
    if n > subset_cap:
        rng = np.random.default_rng(seed)
        samples = samples[rng.choice(n, subset_cap, replace=False)]
    km = KMeans(n_clusters=m, init="k-means++", n_init=1, max_iter=100, random_state=seed)
    return km.fit(samples).cluster_centers_


def nystrom_design(samples, landmarks, beta: float, ridge: float = 0.0):
    """Nystrom factors ``C`` (N x M) and ``W`` (M x M).

    ``K ~ C (W + ridge I)^-1 C^T``; see :func:`nystrom_kernel`.
    """
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    samples = _as_samples(samples)
    landmarks = _as_samples(landmarks, "landmarks")
    if landmarks.shape[0] < 1:
        raise ValueError("need at least one landmark")
    c = kernel_matrix(samples, landmarks, beta)
    w = kernel_matrix(landmarks, landmarks, beta)
    return c, w


def default_ridge(w: np.ndarray) -> float:
    return 1e-8 * float(np.trace(w)) / w.shape[0]


def nystrom_kernel(c: np.ndarray, w: np.ndarray, ridge: Optional[float] = None) -> np.ndarray:
    """Explicit approximation ``C (W + ridge I)^-1 C^T``."""
    if ridge is None:
        ridge = default_ridge(w)
    wr = w + ridge * np.eye(w.shape[0])
    return c @ np.linalg.solve(wr, c.T)


@dataclass(frozen=True)
class DesignSpec:
    """A design before it has seen training data.

    ``beta`` may be ``None`` for Gaussian kinds, meaning the median heuristic
    on the training samples.
    """

    kind: DesignKind
    beta: Optional[float] = None
    n_landmarks: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        if self.kind is DesignKind.GAUSSIAN_NYSTROM and not self.n_landmarks:
            raise ValueError("nystrom design needs n_landmarks")

    def build(self, train_samples) -> KernelDesign:
        train_samples = _as_samples(train_samples, "train_samples")
        dim = train_samples.shape[1]
        if self.kind is DesignKind.DIRECT:
            return KernelDesign(DesignKind.DIRECT, dim)
        beta = self.beta if self.beta is not None else median_heuristic_beta(
            train_samples, seed=self.seed)
        if self.kind is DesignKind.GAUSSIAN_FULL:
            return KernelDesign(self.kind, dim, beta, train_samples.copy())
        m = min(self.n_landmarks, train_samples.shape[0])
        return KernelDesign(self.kind, dim, beta, select_landmarks(train_samples, m, self.seed))

    def label(self) -> str:
        if self.kind is DesignKind.DIRECT:
            return "direct"
        parts = [self.kind.value]
        if self.beta is not None:
            parts.append(f"beta={self.beta:.6g}")
        if self.n_landmarks:
            parts.append(f"M={self.n_landmarks}")
        return " ".join(parts)
