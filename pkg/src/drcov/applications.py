"""Downstream uses of a covariance estimate: minimum-variance portfolios and
Gaussian discriminant analysis."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import Centering, SampleSet, linear_shrinkage_spectrum, sample_covariance
from .calibration import (
    DEFAULT_ALPHA_RANGE,
    CrossValidate,
    Fixed,
    RadiusSchedule,
    cross_validate,
    default_radius_grid,
    describe_schedule,
    linear_fit,
    log_grid,
)
from .divergences import DivergenceSpec, epsilon_max, get_spec
from .errors import (
    DegenerateClass,
    DimensionMismatch,
    DomainError,
    EmptyGrid,
    InsufficientHistory,
    NonFinite,
    SingularEstimator,
)
from .shrinkage import DEFAULT_TOL, estimate
from .spectral import SpectralDecomposition, eigendecompose
from .synthetic import make_rng

PD_FLOOR = 1e-12
ROUNDOFF_SPREAD = 1e-12


def _spectral(est) -> SpectralDecomposition:
    return est if isinstance(est, SpectralDecomposition) else eigendecompose(est)


def _require_pd(d: SpectralDecomposition) -> None:
    e = d.eigenvalues
    scale = float(np.sqrt(np.sum(e * e)))
    if not (scale > 0 and e[0] > PD_FLOOR * scale):
        raise SingularEstimator(f"estimator is not positive definite (eigenvalues in [{e[0]:.3e}, {e[-1]:.3e}])")


def min_variance_weights(est) -> np.ndarray:
    """Weights ``S^{-1} 1 / (1^T S^{-1} 1)`` via the spectral inverse.

    ``est`` is a covariance matrix or its :class:`SpectralDecomposition`.
    """
    d = _spectral(est)
    _require_pd(d)
    V = d.eigenvectors
    w = V @ ((V.T @ np.ones(V.shape[0])) / d.eigenvalues)
    total = w.sum()
    if not (math.isfinite(total) and total != 0.0):
        raise SingularEstimator("minimum-variance weights are undefined for this estimator")
    return w / total


# ----------------------------------------------------------------- estimators


@dataclass(frozen=True)
class SampleEstimator:
    """The nominal covariance itself."""

    def fit(self, data: SampleSet) -> SpectralDecomposition:
        return eigendecompose(sample_covariance(data))

    def describe(self) -> dict:
        return {"estimator": "sample"}


@dataclass(frozen=True)
class LinearShrinkageEstimator:
    """Linear shrinkage toward the scaled identity; ``alpha=None`` calibrates it by cross-validation."""

    alpha: float | None = None
    grid: tuple[float, ...] = tuple(log_grid(*DEFAULT_ALPHA_RANGE))
    folds: int | str | None = None
    score: str = "portfolio-variance"
    seed: int = 0

    def fit(self, data: SampleSet) -> SpectralDecomposition:
        alpha = self.alpha
        if alpha is None:
            alpha = cross_validate(data, self.grid, linear_fit, self.folds, self.score, self.seed)[0]
        return linear_shrinkage_spectrum(eigendecompose(sample_covariance(data)), alpha)

    def describe(self) -> dict:
        if self.alpha is not None:
            return {"estimator": "linear", "alpha": self.alpha}
        return {"estimator": "linear", "alpha": "cross_validate", "grid": list(self.grid), "folds": self.folds, "score": self.score, "seed": self.seed}


@dataclass(frozen=True)
class RobustEstimator:
    """Distributionally robust shrinkage of the sample covariance."""

    spec: DivergenceSpec
    schedule: RadiusSchedule = field(default_factory=lambda: Fixed(0.1))
    tol: float = DEFAULT_TOL

    def radius(self, data: SampleSet, nominal: SpectralDecomposition) -> float:
        return self.schedule.resolve(data, get_spec(self.spec), epsilon_max(self.spec, nominal.eigenvalues))

    def fit(self, data: SampleSet) -> SpectralDecomposition:
        d = eigendecompose(sample_covariance(data))
        eps = self.radius(data, d)
        return estimate(None, self.spec, eps, tol=self.tol, decomposition=d).decomposition

    def describe(self) -> dict:
        return {"estimator": get_spec(self.spec).name, "radius": describe_schedule(self.schedule)}


Estimator = SampleEstimator | LinearShrinkageEstimator | RobustEstimator


def estimator_from_name(name: str, schedule: RadiusSchedule | None = None, alpha: float | None = None, **cv) -> Estimator:
    """``sample``, ``linear`` or a divergence name."""
    if name == "sample":
        return SampleEstimator()
    if name == "linear":
        return LinearShrinkageEstimator(alpha, **cv)
    spec = get_spec(name)
    return RobustEstimator(spec, schedule if schedule is not None else CrossValidate(tuple(default_radius_grid(spec))))


# ------------------------------------------------------------------ backtest


@dataclass(frozen=True)
class BacktestReport:
    period_returns: np.ndarray
    mean_return: float
    std_return: float
    sharpe: float
    window: int
    holding: int
    estimator: dict
    block_starts: tuple[int, ...]
    block_weights: tuple[np.ndarray, ...] = field(repr=False)

    def summary(self) -> dict:
        return {
            "mean_return": self.mean_return,
            "std_return": self.std_return,
            "sharpe": self.sharpe,
            "periods": int(self.period_returns.size),
            "window": self.window,
            "holding": self.holding,
            "estimator": self.estimator,
        }


def sharpe_ratio(mean: float, std: float) -> float:
    """Per-period ratio; a zero spread yields a signed infinity (NaN for a zero mean)."""
    if std > 0:
        return mean / std
    if mean == 0:
        return math.nan
    return math.copysign(math.inf, mean)


def rolling_backtest(
    returns,
    estimator: Estimator,
    window: int = 50,
    holding: int = 1,
    centering: Centering = Centering.SAMPLE_MEAN,
) -> BacktestReport:
    """Minimum-variance portfolio rebalanced every ``holding`` periods.

    Each block's weights are fitted on the ``window`` rows just before it and
    held for ``holding`` rows. Blocks do not overlap; a trailing partial block
    is dropped.
    """
    r = np.asarray(returns, dtype=float)
    if r.ndim != 2:
        raise DimensionMismatch(f"returns must be a T x p array, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise NonFinite("returns contain NaN or Inf")
    if window < 1 or holding < 1:
        raise InsufficientHistory("window and holding period must be positive")
    if r.shape[0] < window + holding:
        raise InsufficientHistory(f"{r.shape[0]} rows cannot fill a {window}-row window plus {holding} holding rows")

    starts = tuple(range(window, r.shape[0] - holding + 1, holding))
    realized, weights = [], []
    for start in starts:
        fitted = estimator.fit(SampleSet(r[start - window : start], centering))
        w = min_variance_weights(fitted)
        weights.append(w)
        realized.append(r[start : start + holding] @ w)
    period = np.concatenate(realized)
    mean = float(period.mean())
    std = float(period.std(ddof=1)) if period.size > 1 else 0.0
    # weights sum to one only up to rounding, so a constant panel leaves a spread of a few ulps
    if std <= ROUNDOFF_SPREAD * abs(mean):
        std = 0.0
    return BacktestReport(
        period_returns=period,
        mean_return=mean,
        std_return=std,
        sharpe=sharpe_ratio(mean, std),
        window=window,
        holding=holding,
        estimator=estimator.describe(),
        block_starts=starts,
        block_weights=tuple(weights),
    )


# ---------------------------------------------------------------- classifier


class Method(enum.Enum):
    LDA = "lda"
    QDA = "qda"


@dataclass(frozen=True)
class ClassifierModel:
    labels: np.ndarray
    priors: np.ndarray
    means: np.ndarray
    covariances: tuple[SpectralDecomposition, ...]
    method: Method
    # per-class inverse covariance and log-determinant
    inverses: tuple[np.ndarray, ...] = field(repr=False)
    logdets: np.ndarray = field(repr=False)

    def covariance_for(self, k: int) -> SpectralDecomposition:
        return self.covariances[0 if self.method is Method.LDA else k]


def fit_classifier(features, labels, method: Method | str = Method.LDA, estimator: Estimator | None = None) -> ClassifierModel:
    """Gaussian plug-in classifier.

    LDA shrinks one pooled within-class covariance (divisor ``n - K``); QDA
    shrinks each class's debiased sample covariance separately.
    """
    method = Method(method)
    estimator = estimator or SampleEstimator()
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise DimensionMismatch(f"features {x.shape} and labels {y.shape} do not line up")
    if not np.all(np.isfinite(x)):
        raise NonFinite("features contain NaN or Inf")
    classes, y_idx, counts = np.unique(y, return_inverse=True, return_counts=True)
    if classes.size < 2:
        raise DegenerateClass("need at least two classes")
    if counts.min() < 2:
        raise DegenerateClass(f"class {classes[np.argmin(counts)]!r} has fewer than two samples")

    n = x.shape[0]
    k = classes.size
    means = np.stack([x[y_idx == c].mean(axis=0) for c in range(k)])
    if method is Method.LDA:
        if n - k < 1:
            raise DegenerateClass("too few samples to pool class covariances")
        # residuals rescaled so that their second moment is the pooled covariance
        resid = (x - means[y_idx]) * math.sqrt(n / (n - k))
        covs = (estimator.fit(SampleSet(resid, Centering.ZERO_MEAN)),)
    else:
        covs = tuple(estimator.fit(SampleSet(x[y_idx == c], Centering.SAMPLE_MEAN)) for c in range(k))

    inverses, logdets = [], []
    for d in covs:
        try:
            _require_pd(d)
        except SingularEstimator as exc:
            raise DegenerateClass(f"class covariance is singular: {exc}") from None
        V = d.eigenvectors
        inverses.append((V / d.eigenvalues) @ V.T)
        logdets.append(float(np.sum(np.log(d.eigenvalues))))
    return ClassifierModel(
        labels=classes,
        priors=counts / n,
        means=means,
        covariances=covs,
        method=method,
        inverses=tuple(inverses),
        logdets=np.array(logdets),
    )


def discriminant_scores(model: ClassifierModel, z) -> np.ndarray:
    """``(z - mu)^T S^{-1} (z - mu) + log det S - 2 log prior`` per class; shape ``(m, K)``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != model.means.shape[1]:
        raise DimensionMismatch(f"expected {model.means.shape[1]} features, got {z.shape[1]}")
    out = np.empty((z.shape[0], model.labels.size))
    for c in range(model.labels.size):
        j = 0 if model.method is Method.LDA else c
        diff = z - model.means[c]
        out[:, c] = np.einsum("ij,jk,ik->i", diff, model.inverses[j], diff) + model.logdets[j] - 2.0 * math.log(model.priors[c])
    return out


def predict(model: ClassifierModel, z):
    """Label with the smallest score; ties go to the smaller label."""
    z = np.asarray(z, dtype=float)
    picks = model.labels[np.argmin(discriminant_scores(model, z), axis=1)]
    return picks[0] if z.ndim == 1 else picks


def accuracy(model: ClassifierModel, features, labels) -> float:
    return float(np.mean(predict(model, np.atleast_2d(features)) == np.asarray(labels)))


# ------------------------------------------------------------ model selection


def stratified_split(labels, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays ``(held, rest)`` with about ``fraction`` of every class in ``held``.

    Each class keeps at least two rows in ``rest`` (so it can still be fitted)
    and contributes at least one row to ``held``.
    """
    if not 0.0 < fraction < 1.0:
        raise DomainError(f"split fraction must lie in (0, 1), got {fraction}")
    y = np.asarray(labels)
    held, rest = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < 3:
            raise DegenerateClass(f"class {c!r} has {idx.size} rows; a split needs at least three")
        idx = idx[rng.permutation(idx.size)]
        k = min(max(1, int(round(fraction * idx.size))), idx.size - 2)
        held.append(idx[:k])
        rest.append(idx[k:])
    return np.sort(np.concatenate(held)), np.sort(np.concatenate(rest))


def holdout_select(
    features,
    labels,
    method: Method | str,
    make_estimator,
    grid,
    validation_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Grid value whose classifier scores best on a stratified validation split.

    ``make_estimator`` maps a grid value to an estimator. Values whose fitted
    covariances are singular score ``-inf``. Ties go to the first grid entry.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise EmptyGrid("hyperparameter grid is empty")
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    val, fit = stratified_split(y, validation_fraction, make_rng(seed))
    scores = np.full(len(grid), -np.inf)
    for i, g in enumerate(grid):
        try:
            model = fit_classifier(x[fit], y[fit], method, make_estimator(g))
        except (DegenerateClass, SingularEstimator):
            continue
        scores[i] = accuracy(model, x[val], y[val])
    if not np.any(np.isfinite(scores)):
        raise DegenerateClass("no grid value gives a non-singular classifier")
    return grid[int(np.argmax(scores))], scores
