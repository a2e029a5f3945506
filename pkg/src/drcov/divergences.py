"""Spectral divergences between covariance matrices.

Each divergence ``D(S, N)`` between a candidate ``S`` and a nominal ``N`` is
spectral: for commuting arguments it is the sum of a scalar generator
``d(a, b)`` over paired eigenvalues. This module carries the seven generators,
their first and second derivatives in ``a``, and the matrix formulas.

Values outside a generator's domain are ``math.inf`` (plain float infinity);
sums saturate at ``+inf`` the usual IEEE way.

The Kullback-Leibler convention here includes the factor 1/2, so that
``D_KL(S, N)`` equals the KL divergence from ``N(0, S)`` to ``N(0, N)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError
from .spectral import eigendecompose, sym_matrix

PD_TOL = 1e-12


class Kind(enum.Enum):
    KULLBACK_LEIBLER = "kl"
    WASSERSTEIN = "wasserstein"
    FISHER_RAO = "fisher-rao"
    INVERSE_STEIN = "inverse-stein"
    SYMMETRIZED_STEIN = "symmetrized-stein"
    QUADRATIC = "quadratic"
    WEIGHTED_QUADRATIC = "weighted-quadratic"


_ZERO_A = {Kind.WASSERSTEIN, Kind.QUADRATIC, Kind.WEIGHTED_QUADRATIC}
_ZERO_PAIR = {Kind.WASSERSTEIN, Kind.QUADRATIC}


@dataclass(frozen=True)
class DivergenceSpec:
    kind: Kind

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def allows_zero_a(self) -> bool:
        """Whether ``(0, b)`` lies in the generator domain for ``b > 0``."""
        return self.kind in _ZERO_A

    @property
    def allows_zero_pair(self) -> bool:
        return self.kind in _ZERO_PAIR

    @property
    def requires_pd_nominal(self) -> bool:
        return self.kind not in _ZERO_PAIR

    def __str__(self) -> str:
        return self.name


ALL_KINDS = tuple(DivergenceSpec(k) for k in Kind)


def get_spec(name) -> DivergenceSpec:
    """Look up a divergence by its command-line name (``kl``, ``fisher-rao``, ...)."""
    if isinstance(name, DivergenceSpec):
        return name
    if isinstance(name, Kind):
        return DivergenceSpec(name)
    try:
        return DivergenceSpec(Kind(str(name).strip().lower()))
    except ValueError:
        names = ", ".join(k.value for k in Kind)
        raise DomainError(f"unknown divergence {name!r}; expected one of {names}") from None


def _unwrap(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------- generators


def _minus_log_excess(r):
    """``r - 1 - log r`` for ``r > 0``; log1p near 1 where the terms cancel."""
    r = np.asarray(r, dtype=float)
    u = r - 1.0
    near = np.abs(u) < 0.5
    return np.where(near, u - np.log1p(np.where(near, u, 0.0)), u - np.log(np.where(near, 1.0, r)))


def _value_interior(kind: Kind, a, b):
    """Generator value for ``a > 0, b > 0`` in forms that avoid cancellation."""
    if kind is Kind.KULLBACK_LEIBLER:
        return 0.5 * _minus_log_excess(a / b)
    if kind is Kind.WASSERSTEIN:
        return (np.sqrt(a) - np.sqrt(b)) ** 2
    if kind is Kind.FISHER_RAO:
        return np.log(a / b) ** 2
    if kind is Kind.INVERSE_STEIN:
        return 0.5 * _minus_log_excess(b / a)
    if kind is Kind.SYMMETRIZED_STEIN:
        return (a - b) ** 2 / (2.0 * a * b)
    if kind is Kind.QUADRATIC:
        return (a - b) ** 2
    return (a - b) ** 2 / b


def gen_value(spec: DivergenceSpec, a, b):
    """Generator ``d(a, b)``; ``inf`` wherever ``(a, b)`` is outside its domain.

    Accepts scalars or broadcastable arrays.
    """
    kind = get_spec(spec).kind
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.full(a.shape, np.inf)
    interior = (a > 0) & (b > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[interior] = _value_interior(kind, a[interior], b[interior])
    if kind in _ZERO_A:
        edge = (a == 0) & (b > 0)
        out[edge] = b[edge] if kind is not Kind.QUADRATIC else b[edge] ** 2
    if kind in _ZERO_PAIR:
        bottom = (b == 0) & (a >= 0)
        # d(a, 0) = a for Wasserstein and a^2 for quadratic
        out[bottom] = a[bottom] if kind is Kind.WASSERSTEIN else a[bottom] ** 2
    return _unwrap(out)


def _positive_pair(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if not (np.all(a > 0) and np.all(b > 0)):
        raise DomainError("generator derivatives need a > 0 and b > 0")
    return a, b


def gen_deriv(spec: DivergenceSpec, a, b):
    """Partial derivative of ``d(a, b)`` in ``a``."""
    kind = get_spec(spec).kind
    a, b = _positive_pair(a, b)
    if kind is Kind.KULLBACK_LEIBLER:
        out = 0.5 * (a - b) / (a * b)
    elif kind is Kind.WASSERSTEIN:
        out = 1.0 - np.sqrt(b / a)
    elif kind is Kind.FISHER_RAO:
        out = 2.0 * np.log(a / b) / a
    elif kind is Kind.INVERSE_STEIN:
        out = 0.5 * (a - b) / (a * a)
    elif kind is Kind.SYMMETRIZED_STEIN:
        out = 0.5 * (a - b) * (a + b) / (a * a * b)
    elif kind is Kind.QUADRATIC:
        out = 2.0 * (a - b)
    else:
        out = 2.0 * (a - b) / b
    return _unwrap(out)


def gen_curv(spec: DivergenceSpec, a, b):
    """Second partial derivative of ``d(a, b)`` in ``a``."""
    kind = get_spec(spec).kind
    a, b = _positive_pair(a, b)
    if kind is Kind.KULLBACK_LEIBLER:
        out = 0.5 / (a * a)
    elif kind is Kind.WASSERSTEIN:
        out = 0.5 * np.sqrt(b) / a**1.5
    elif kind is Kind.FISHER_RAO:
        out = 2.0 * (1.0 - np.log(a / b)) / (a * a)
    elif kind is Kind.INVERSE_STEIN:
        out = (2.0 * b - a) / (2.0 * a**3)
    elif kind is Kind.SYMMETRIZED_STEIN:
        out = b / a**3
    elif kind is Kind.QUADRATIC:
        out = np.full(a.shape, 2.0)
    else:
        out = 2.0 / b
    return _unwrap(out)


def cross_deriv_numeric(spec: DivergenceSpec, a, b, rel_step: float = 1e-5):
    """Mixed partial ``d^2 d / da db`` by central differences of :func:`gen_deriv` in ``b``."""
    a, b = _positive_pair(a, b)
    h = rel_step * b
    return _unwrap((np.asarray(gen_deriv(spec, a, b + h)) - np.asarray(gen_deriv(spec, a, b - h))) / (2.0 * h))


def epsilon_max(spec: DivergenceSpec, eigenvalues) -> float:
    """Largest admissible radius: the sum of ``d(0, x_i)`` over the nominal spectrum."""
    e = np.asarray(eigenvalues, dtype=float)
    if e.size == 0:
        return 0.0
    return float(np.sum(gen_value(spec, np.zeros_like(e), e)))


# ---------------------------------------------------------- matrix versions


def _spectrum(m: np.ndarray):
    d = eigendecompose(m)
    return d.eigenvalues, d.eigenvectors, float(np.linalg.norm(m))


def _is_pd(e: np.ndarray, scale: float) -> bool:
    return bool(e[0] > PD_TOL * scale)


def _is_psd(e: np.ndarray, scale: float) -> bool:
    return bool(e[0] >= -PD_TOL * scale)


def _apply(e, V, fn):
    return (V * fn(e)) @ V.T


def matrix_divergence(spec: DivergenceSpec, s1, s2) -> float:
    """Matrix divergence ``D(s1, s2)`` of a candidate ``s1`` from a nominal ``s2``.

    Evaluated through spectral calculus. Returns ``inf`` when either argument
    leaves the divergence's domain. A matrix counts as positive definite when
    its smallest eigenvalue exceeds ``1e-12`` times its Frobenius norm.
    """
    kind = get_spec(spec).kind
    S1 = sym_matrix(s1)
    S2 = sym_matrix(s2)
    if S1.shape != S2.shape:
        raise DimensionMismatch(f"shapes {S1.shape} and {S2.shape} differ")
    p = S1.shape[0]

    if kind is Kind.QUADRATIC:
        e1, _, n1 = _spectrum(S1)
        e2, _, n2 = _spectrum(S2)
        if not (_is_psd(e1, n1) and _is_psd(e2, n2)):
            return math.inf
        return float(np.sum((S1 - S2) ** 2))

    e2, V2, n2 = _spectrum(S2)
    e1, V1, n1 = _spectrum(S1)

    if kind is Kind.WASSERSTEIN:
        if not (_is_psd(e1, n1) and _is_psd(e2, n2)):
            return math.inf
        root2 = _apply(e2, V2, lambda e: np.sqrt(np.maximum(e, 0.0)))
        inner = eigendecompose(root2 @ S1 @ root2).eigenvalues
        return float(np.trace(S1) + np.trace(S2) - 2.0 * np.sum(np.sqrt(np.maximum(inner, 0.0))))

    if kind is Kind.WEIGHTED_QUADRATIC:
        if not (_is_psd(e1, n1) and _is_pd(e2, n2)):
            return math.inf
        diff = S1 - S2
        inv2 = _apply(e2, V2, lambda e: 1.0 / e)
        return float(np.trace(diff @ diff @ inv2))

    if not (_is_pd(e1, n1) and _is_pd(e2, n2)):
        return math.inf
    logdet1 = float(np.sum(np.log(e1)))
    logdet2 = float(np.sum(np.log(e2)))

    if kind is Kind.KULLBACK_LEIBLER:
        inv2 = _apply(e2, V2, lambda e: 1.0 / e)
        return 0.5 * (float(np.trace(inv2 @ S1)) - p + logdet2 - logdet1)
    if kind is Kind.INVERSE_STEIN:
        inv1 = _apply(e1, V1, lambda e: 1.0 / e)
        return 0.5 * (float(np.trace(inv1 @ S2)) - p + logdet1 - logdet2)
    if kind is Kind.SYMMETRIZED_STEIN:
        inv1 = _apply(e1, V1, lambda e: 1.0 / e)
        inv2 = _apply(e2, V2, lambda e: 1.0 / e)
        return 0.5 * (float(np.trace(S1 @ inv2) + np.trace(S2 @ inv1)) - 2 * p)
    # Fisher-Rao: squared Frobenius norm of log(s2^{-1/2} s1 s2^{-1/2})
    isqrt2 = _apply(e2, V2, lambda e: 1.0 / np.sqrt(e))
    whitened = eigendecompose(isqrt2 @ S1 @ isqrt2).eigenvalues
    if whitened[0] <= 0.0:
        return math.inf
    return float(np.sum(np.log(whitened) ** 2))
