"""Reference estimators: sample covariance and linear shrinkage."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import BadAlpha, DimensionMismatch, InsufficientData, NonFinite
from .spectral import SpectralDecomposition, sym_matrix


class Centering(enum.Enum):
    ZERO_MEAN = "zero-mean"
    SAMPLE_MEAN = "sample-mean"


@dataclass(frozen=True)
class SampleSet:
    """``n`` observations of a ``p``-dimensional vector, one per row."""

    samples: np.ndarray
    centering: Centering = Centering.SAMPLE_MEAN

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DimensionMismatch(f"samples must be a non-empty n x p array, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NonFinite("samples contain NaN or Inf")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "centering", Centering(self.centering))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def p(self) -> int:
        return self.samples.shape[1]

    def subset(self, rows) -> "SampleSet":
        return SampleSet(self.samples[rows], self.centering)


def sample_covariance(data: SampleSet) -> np.ndarray:
    """Second-moment matrix (divisor ``n``) or debiased covariance (divisor ``n - 1``)."""
    x = data.samples
    if data.centering is Centering.ZERO_MEAN:
        return sym_matrix(x.T @ x / data.n)
    if data.n < 2:
        raise InsufficientData("sample-mean centering needs at least two observations")
    z = x - x.mean(axis=0)
    return sym_matrix(z.T @ z / (data.n - 1))


def linear_shrinkage(nominal, alpha: float) -> np.ndarray:
    """Convex combination ``(1 - alpha) S + alpha (tr S / p) I``; the trace is unchanged."""
    if not 0.0 <= alpha <= 1.0:
        raise BadAlpha(f"mixing weight must lie in [0, 1], got {alpha}")
    S = sym_matrix(nominal)
    p = S.shape[0]
    mu = np.trace(S) / p
    out = (1.0 - alpha) * S
    out[np.diag_indices(p)] += alpha * mu
    return out


def linear_shrinkage_spectrum(nominal: SpectralDecomposition, alpha: float) -> SpectralDecomposition:
    """Linear shrinkage applied to an eigendecomposition; eigenvectors are unchanged."""
    if not 0.0 <= alpha <= 1.0:
        raise BadAlpha(f"mixing weight must lie in [0, 1], got {alpha}")
    e = nominal.eigenvalues
    return SpectralDecomposition((1.0 - alpha) * e + alpha * e.mean(), nominal.eigenvectors)
