"""Tri-factorization ``Y ~ X @ Theta @ A`` with a known covariate matrix A.

X (P x Q) is kept column-stochastic and Theta (Q x R) is free but
non-negative. Both are fitted by multiplicative updates that decrease the
squared Frobenius loss monotonically. The same solver serves the forward
problem (Y holds measurements, A holds group indicators) and the inverse,
label-matrix problem (Y holds class-membership columns, A holds features or
kernel similarities).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans

from .matcore import DEFAULT_EPS, ShapeError, _column_normalize, _sq_loss, as_nonneg

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised for an invalid solver configuration."""


class InitMode(str, enum.Enum):
    IDENTITY = "identity"
    KMEANS = "kmeans"
    RANDOM = "random"


@dataclass(frozen=True)
class TriNmfConfig:
    """Solver settings.

    ``seed`` drives both the ``random`` initialization and the k-means run
    used by the ``kmeans`` initialization.
    """

    rank_q: int
    max_iter: int = 5000
    rel_tol: float = 1e-6
    eps: float = DEFAULT_EPS
    init_mode: InitMode = InitMode.IDENTITY
    seed: int = 0
    record_trajectory: bool = True
    kmeans_max_iter: int = 100

    def __post_init__(self):
        object.__setattr__(self, "init_mode", InitMode(self.init_mode))
        if self.rank_q < 1:
            raise ConfigError(f"rank_q must be >= 1, got {self.rank_q}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.rel_tol > 0:
            raise ConfigError(f"rel_tol must be > 0, got {self.rel_tol}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")


@dataclass
class FitReport:
    """Trajectory of a fit.

    ``losses[0]`` is the loss at the initial factors and ``losses[t]`` the
    loss after iteration ``t``; when trajectories are not recorded only the
    first and last values are kept.
    """

    losses: list[float]
    iterations_run: int
    converged: bool
    final_loss: float
    b_column_sums: np.ndarray


@dataclass(frozen=True)
class TriNmfModel:
    """Fitted basis ``x`` and parameter matrix ``theta``.

    ``design`` describes how covariate columns are built for new samples
    (see :class:`nmflab.kernel.KernelDesign`); ``None`` means the caller
    supplies covariate columns directly.
    """

    x: np.ndarray
    theta: np.ndarray
    design: Optional[object] = None
    class_names: Optional[tuple[str, ...]] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.theta.shape[0] != self.x.shape[1]:
            raise ShapeError(
                f"theta has {self.theta.shape[0]} rows but x has {self.x.shape[1]} columns"
            )
        if not np.allclose(self.x.sum(axis=0), 1.0, rtol=0, atol=1e-9):
            raise ValueError("x must be column-stochastic")
        dim = getattr(self.design, "n_covariates", None)
        if dim is not None and dim != self.theta.shape[1]:
            raise ShapeError(
                f"design yields {dim} covariates but theta has {self.theta.shape[1]} columns"
            )

    @property
    def rank(self) -> int:
        return self.x.shape[1]

    def covariates(self, samples) -> np.ndarray:
        """Covariate matrix (R x n) for raw feature rows ``samples``."""
        if self.design is None:
            raise ValueError("model has no covariate design; pass covariate columns directly")
        return self.design.build(samples)


def _check_problem(y, a, cfg: TriNmfConfig) -> tuple[np.ndarray, np.ndarray]:
    y = as_nonneg(y, "y")
    a = as_nonneg(a, "a")
    if y.shape[1] != a.shape[1]:
        raise ShapeError(f"y has {y.shape[1]} samples but a has {a.shape[1]}")
    if cfg.rank_q > min(y.shape):
        raise ConfigError(f"rank_q={cfg.rank_q} exceeds min(P, N)={min(y.shape)}")
    return y, a


def init_factors(y, a, cfg: TriNmfConfig) -> tuple[np.ndarray, np.ndarray]:
    """Starting ``(x0, theta0)``.

    ``x0`` depends on ``cfg.init_mode``: the identity (requires Q == P),
    column-normalized k-means centroids of Y's columns, or seeded uniform
    noise. ``theta0`` is the constant ``1 / (Q * R)`` rescaled so that the
    mean of ``x0 @ theta0 @ a`` equals the mean of ``y``.
    """
    y, a = _check_problem(y, a, cfg)
    p, q, r = y.shape[0], cfg.rank_q, a.shape[0]
    mode = cfg.init_mode
    if mode is InitMode.IDENTITY:
        if q != p:
            raise ConfigError(f"identity initialization needs rank_q == P ({p}), got {q}")
        x0 = np.eye(p)
    elif mode is InitMode.KMEANS:
        km = KMeans(
            n_clusters=q,
            init="k-means++",
            n_init=1,
            max_iter=cfg.kmeans_max_iter,
            random_state=cfg.seed,
        ).fit(y.T)
        x0, _ = _column_normalize(np.clip(km.cluster_centers_.T, 0.0, None))
    else:
        rng = np.random.default_rng(cfg.seed)
        x0, _ = _column_normalize(rng.uniform(0.0, 1.0, size=(p, q)))

    theta0 = np.full((q, r), 1.0 / (q * r))
    fitted_mean = (x0 @ theta0 @ a).mean()
    if fitted_mean > 0:
        theta0 *= y.mean() / fitted_mean
    return x0, theta0


def _update(y, yhat, x, theta, a, eps):
    # X step with B = Theta A held fixed.
    b = theta @ a
    x = x * ((y @ b.T) / (yhat @ b.T + eps))
    # Column scale moves into Theta so the product (and the loss) is unchanged.
    x, sums = _column_normalize(x)
    theta = theta * sums[:, None]
    yhat = x @ theta @ a
    # Theta step with the normalized X.
    ya = y @ a.T
    yha = yhat @ a.T
    theta = theta * ((x.T @ ya) / (x.T @ yha + eps))
    return x, theta


def update_step(y, yhat, x, theta, a, eps: float = DEFAULT_EPS):
    """One multiplicative sweep: X update, column normalization, Theta update.

    ``yhat`` must equal ``x @ theta @ a``. Normalizing X divides each column
    by its sum and multiplies the matching row of Theta by the same sum, so
    the reconstruction is untouched by the normalization itself.
    """
    y = as_nonneg(y, "y")
    yhat = as_nonneg(yhat, "yhat")
    x = as_nonneg(x, "x")
    theta = as_nonneg(theta, "theta")
    a = as_nonneg(a, "a")
    p, n = y.shape
    if yhat.shape != (p, n) or x.shape[0] != p or theta.shape[0] != x.shape[1] \
            or theta.shape[1] != a.shape[0] or a.shape[1] != n:
        raise ShapeError(
            f"inconsistent shapes y{y.shape} yhat{yhat.shape} x{x.shape} "
            f"theta{theta.shape} a{a.shape}"
        )
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps!r}")
    return _update(y, yhat, x, theta, a, eps)


def fit(
    y,
    a,
    cfg: TriNmfConfig,
    *,
    design=None,
    class_names: Optional[Sequence[str]] = None,
    init: Optional[tuple[np.ndarray, np.ndarray]] = None,
    callback: Optional[Callable[[int, np.ndarray, np.ndarray, float], None]] = None,
) -> tuple[TriNmfModel, FitReport]:
    """Fit ``y ~ x @ theta @ a`` by multiplicative updates.

    Parameters
    ----------
    y : (P, N) array
        Observations, one sample per column.
    a : (R, N) array
        Known covariates for the same samples.
    cfg : TriNmfConfig
        Rank, stopping rule and initialization.
    design : KernelDesign, optional
        Stored on the model so it can build covariates for new samples.
    class_names : sequence of str, optional
        Row names of ``y`` when it is a label matrix.
    init : (x0, theta0), optional
        Explicit starting factors; overrides ``cfg.init_mode``.
    callback : callable, optional
        Called as ``callback(t, x, theta, loss)`` after every iteration.

    Returns
    -------
    model : TriNmfModel
    report : FitReport

    Iteration stops when ``|L[t-1] - L[t]| / max(L[t-1], 1e-30)`` falls below
    ``cfg.rel_tol`` or after ``cfg.max_iter`` sweeps.
    """
    y, a = _check_problem(y, a, cfg)
    if init is None:
        x, theta = init_factors(y, a, cfg)
    else:
        x = as_nonneg(init[0], "x0").copy()
        theta = as_nonneg(init[1], "theta0").copy()
        if x.shape != (y.shape[0], cfg.rank_q) or theta.shape != (cfg.rank_q, a.shape[0]):
            raise ShapeError(f"initial factors have shapes {x.shape} and {theta.shape}")
        x, sums = _column_normalize(x)
        theta = theta * sums[:, None]

    yhat = x @ theta @ a
    loss = _sq_loss(y, yhat)
    losses = [loss]
    converged = False
    t = 0
    for t in range(1, cfg.max_iter + 1):
        x, theta = _update(y, yhat, x, theta, a, cfg.eps)
        yhat = x @ theta @ a
        prev, loss = loss, _sq_loss(y, yhat)
        if cfg.record_trajectory:
            losses.append(loss)
        if callback is not None:
            callback(t, x, theta, loss)
        if abs(prev - loss) / max(prev, 1e-30) < cfg.rel_tol:
            converged = True
            break
    if not cfg.record_trajectory:
        losses.append(loss)
    if not converged:
        logger.info("tri-NMF stopped at max_iter=%d (loss %.6g)", cfg.max_iter, loss)

    report = FitReport(
        losses=losses,
        iterations_run=t,
        converged=converged,
        final_loss=loss,
        b_column_sums=(theta @ a).sum(axis=0),
    )
    model = TriNmfModel(
        x=x,
        theta=theta,
        design=design,
        class_names=None if class_names is None else tuple(class_names),
        meta={"final_loss": loss, "iterations": t, "seed": cfg.seed},
    )
    return model, report


def reconstruct(model: TriNmfModel, a) -> np.ndarray:
    """Return ``model.x @ model.theta @ a``."""
    a = as_nonneg(a, "a")
    if a.shape[0] != model.theta.shape[1]:
        raise ShapeError(f"a has {a.shape[0]} rows, model expects {model.theta.shape[1]}")
    return model.x @ model.theta @ a
