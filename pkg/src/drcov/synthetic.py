"""Seeded synthetic data: structured population covariances and Gaussian samples.

Normal draws use the Box-Muller transform on uniforms from numpy's PCG64
generator, then the spectral square-root factor of the population matrix.
The generator name is recorded in run metadata.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .spectral import eigendecompose, sym_matrix

RNG_NAME = "numpy.random.PCG64 + Box-Muller"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal array of the given shape."""
    size = int(np.prod(shape))
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1], keeps the log finite
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:size]
    return z.reshape(shape)


def spectral_factor(cov) -> np.ndarray:
    """``L`` with ``L L^T = cov``, built from the eigendecomposition."""
    d = eigendecompose(cov)
    if d.eigenvalues[0] < 0:
        raise DomainError("population covariance must be positive semidefinite")
    return d.eigenvectors * np.sqrt(d.eigenvalues)


def gaussian_samples(cov, n: int, rng: np.random.Generator, factor: np.ndarray | None = None) -> np.ndarray:
    """``n`` zero-mean normal draws with covariance ``cov``, one per row."""
    L = spectral_factor(cov) if factor is None else factor
    return box_muller(rng, (n, L.shape[0])) @ L.T


def spiked_covariance(p: int, spikes: int, magnitude: float) -> np.ndarray:
    """Diagonal matrix with ``p - spikes`` unit eigenvalues and ``spikes`` equal to ``magnitude``."""
    if not 0 <= spikes <= p:
        raise DomainError(f"cannot place {spikes} spikes in dimension {p}")
    e = np.ones(p)
    e[p - spikes :] = magnitude
    return np.diag(e)


def banded_covariance(p: int, diagonal: float = 1.0, off: float = 0.5) -> np.ndarray:
    """Tridiagonal Toeplitz matrix with ``diagonal`` on the diagonal and ``off`` beside it.

    Its eigenvalues are ``diagonal + 2 off cos(k pi / (p + 1))``, so it is
    positive definite whenever ``|off| <= diagonal / 2``.
    """
    out = diagonal * np.eye(p)
    idx = np.arange(p - 1)
    out[idx, idx + 1] = off
    out[idx + 1, idx] = off
    return sym_matrix(out)
