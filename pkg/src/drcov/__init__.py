"""Distributionally robust covariance shrinkage.

The robust estimator keeps the eigenvectors of a nominal covariance matrix
and shrinks its eigenvalues through a divergence-specific map, with the
shrinkage intensity set so that the estimate sits at divergence ``epsilon``
from the nominal.

>>> import numpy as np
>>> from drcov import estimate
>>> sol = estimate(np.diag([1.0, 2.0, 3.0]), "wasserstein", 1.0)
>>> bool(np.all(sol.shrunk_eigenvalues < [1.0, 2.0, 3.0]))
True
"""

__version__ = "0.1.0"

from .applications import (
    LinearShrinkageEstimator,
    Method,
    RobustEstimator,
    SampleEstimator,
    accuracy,
    fit_classifier,
    min_variance_weights,
    predict,
    rolling_backtest,
)
from .baselines import Centering, SampleSet, linear_shrinkage, sample_covariance
from .calibration import CrossValidate, FiniteSample, Fixed, RootN, TernarySearch, schedule_from_config
from .divergences import ALL_KINDS, DivergenceSpec, Kind, epsilon_max, gen_value, get_spec, matrix_divergence
from .errors import DrcovError, NumericalError, ValidationError
from .lambertw import lambert_w0
from .shrinkage import ShrinkageSolution, eigenvalue_map, estimate, solve_gamma
from .spectral import SpectralDecomposition, condition_number, eigendecompose

__all__ = [
    "ALL_KINDS",
    "Centering",
    "CrossValidate",
    "DivergenceSpec",
    "DrcovError",
    "FiniteSample",
    "Fixed",
    "Kind",
    "LinearShrinkageEstimator",
    "Method",
    "NumericalError",
    "RobustEstimator",
    "RootN",
    "SampleEstimator",
    "SampleSet",
    "ShrinkageSolution",
    "SpectralDecomposition",
    "TernarySearch",
    "ValidationError",
    "accuracy",
    "condition_number",
    "eigendecompose",
    "eigenvalue_map",
    "epsilon_max",
    "estimate",
    "fit_classifier",
    "gen_value",
    "get_spec",
    "lambert_w0",
    "linear_shrinkage",
    "matrix_divergence",
    "min_variance_weights",
    "predict",
    "rolling_backtest",
    "sample_covariance",
    "schedule_from_config",
    "solve_gamma",
]
