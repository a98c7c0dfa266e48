"""Non-negative tri-factorization with known covariates, for regression-style
fits and for classification by factorizing the label matrix."""

from .classify import (
    LabelEncoding,
    ProbPrediction,
    confusion_matrix,
    encode_hard,
    encode_soft,
    encode_unlabeled,
    membership_probabilities,
    predict_samples,
)
from .kernel import (
    DesignKind,
    DesignSpec,
    KernelDesign,
    beta_grid,
    build_covariates,
    gaussian_kernel,
    median_heuristic_beta,
    nystrom_design,
    select_landmarks,
)
from .trinmf import FitReport, InitMode, TriNmfConfig, TriNmfModel, fit, reconstruct

__version__ = "0.1.0"
