"""Radius selection.

Schedules turn data into a radius ``eps``. All of them return a positive
radius and, given the nominal spectrum, clip it just below the divergence's
cap ``sum_i d(0, x_i)``.
"""

from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .baselines import Centering, SampleSet, linear_shrinkage_spectrum, sample_covariance
from .divergences import DivergenceSpec, Kind, epsilon_max, get_spec
from .errors import (
    BadConfidence,
    ConfigError,
    DomainError,
    DrcovError,
    EmptyGrid,
    InsufficientData,
    RadiusNonPositive,
    SingularEstimator,
    SingularNominal,
)
from .shrinkage import estimate, shrink_spectra, shrink_spectra_many
from .spectral import SpectralDecomposition, assemble, eigendecompose, eigendecompose_many

CLIP_FACTOR = 1.0 - 1e-9
SCORES = ("portfolio-variance", "frobenius-holdout", "quadratic")
LOO = "loo"


class PlugInWarning(UserWarning):
    """A population quantity was replaced by its sample estimate."""


class SingularFoldWarning(UserWarning):
    """A training fold's covariance is singular and the divergence needs it invertible."""


class DegenerateFoldWarning(UserWarning):
    """A validation fold carried no variance and was left out of the average."""


def clip_radius(epsilon: float, cap: float) -> float:
    """Keep a radius strictly inside ``(0, cap)``."""
    if not epsilon > 0:
        raise RadiusNonPositive(f"radius must be positive, got {epsilon}")
    if math.isfinite(cap) and epsilon >= cap * CLIP_FACTOR:
        return cap * CLIP_FACTOR
    return float(epsilon)


# ------------------------------------------------------------------ formulas


def radius_root_n(c: float, n: int) -> float:
    """Consistency schedule ``c / sqrt(n)``."""
    if not c > 0:
        raise RadiusNonPositive(f"schedule constant must be positive, got {c}")
    if n < 1:
        raise InsufficientData(f"sample size must be at least 1, got {n}")
    return c / math.sqrt(n)


def operator_norm_tail(c0: float, sigma2: float, p: int, n: int, eta: float) -> float:
    """High-probability bound ``rho`` on the spectral error of the sample covariance."""
    if not 0.0 < eta < 1.0:
        raise BadConfidence(f"confidence parameter must lie in (0, 1), got {eta}")
    if not (c0 > 0 and sigma2 > 0 and p >= 1 and n >= 1):
        raise DomainError("c0, sigma2, p and n must be positive")
    ratio = (p + math.log(1.0 / eta)) / n
    return c0 * sigma2 * (ratio + math.sqrt(ratio))


def divergence_constant(spec: DivergenceSpec, p: int, lambda_min: float) -> float:
    """Factor ``c`` with ``D(S0, S_n) <= c * ||S0 - S_n||`` on the high-probability event."""
    kind = get_spec(spec).kind
    if kind is Kind.QUADRATIC:
        return float(p)
    if not lambda_min > 0:
        raise SingularNominal("the finite-sample radius needs a positive smallest eigenvalue")
    if kind is Kind.SYMMETRIZED_STEIN:
        return p / lambda_min
    if kind is Kind.WASSERSTEIN:
        return 4.0 * p / (9.0 * lambda_min**2)
    # KL and inverse Stein sit inside twice the symmetrized Stein ball; the
    # weighted quadratic and Fisher-Rao bounds also carry the factor two
    return 2.0 * p / lambda_min


def radius_finite_sample(
    c0: float,
    sigma2: float,
    lambda_min: float,
    p: int,
    n: int,
    eta: float,
    spec: DivergenceSpec,
) -> float:
    """Radius whose ball holds the population covariance with probability ``1 - eta``.

    The universal constant ``c0`` has no known numeric value and is left to the
    caller, so the result certifies only the shape of the bound.
    """
    return divergence_constant(spec, p, lambda_min) * operator_norm_tail(c0, sigma2, p, n, eta)


def ternary_search_radius(loss: Callable[[float], float], lo: float, hi: float, iters: int = 60) -> float:
    """Minimize a unimodal ``loss`` on ``[lo, hi]``; unimodality is assumed, not checked.

    Each step keeps two thirds of the interval; the midpoint of the final
    interval is returned.
    """
    if not lo < hi:
        raise DomainError(f"ternary search needs lo < hi, got [{lo}, {hi}]")
    if iters < 1:
        raise DomainError("ternary search needs at least one iteration")
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if loss(m1) <= loss(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


# ------------------------------------------------------------ cross-validation


def fold_labels(n: int, folds, seed: int = 0) -> np.ndarray:
    """Fold index per observation.

    ``folds`` is a fold count, ``"loo"``, or an explicit label array. Counts
    are assigned round-robin over a seeded permutation.
    """
    if isinstance(folds, str):
        if folds.lower() != LOO:
            raise ConfigError(f"unknown fold scheme {folds!r}")
        return np.arange(n)
    if np.ndim(folds) == 1:
        labels = np.asarray(folds)
        if labels.shape[0] != n:
            raise InsufficientData(f"{labels.shape[0]} fold labels for {n} observations")
        _, labels = np.unique(labels, return_inverse=True)
        if labels.max(initial=0) < 1:
            raise InsufficientData("cross-validation needs at least two folds")
        _require_fold_sizes(labels)
        return labels
    k = int(folds)
    if k < 2:
        raise InsufficientData(f"cross-validation needs at least two folds, got {k}")
    labels = np.empty(n, dtype=int)
    labels[np.random.default_rng(seed).permutation(n)] = np.arange(n) % k
    _require_fold_sizes(labels)
    return labels


def _require_fold_sizes(labels: np.ndarray) -> None:
    sizes = np.bincount(labels)
    if sizes.min() < 2 or labels.size - sizes.max() < 2:
        raise InsufficientData(f"every fold and its complement need two observations (fold sizes {sizes.tolist()})")


def default_folds(n: int):
    return LOO if n <= 100 else 5


def _validation_moment(train: SampleSet, validation: SampleSet) -> tuple[np.ndarray, np.ndarray]:
    """Validation rows centered like the training data, and their second moment."""
    z = validation.samples
    if train.centering is Centering.SAMPLE_MEAN:
        z = z - train.samples.mean(axis=0)
    return z, z.T @ z / z.shape[0]


def validation_score(score: str, estimator, train: SampleSet, validation: SampleSet) -> float:
    """Out-of-sample loss of ``estimator`` (a matrix or its decomposition); lower is better."""
    z, moment = _validation_moment(train, validation)
    if score != "portfolio-variance" and isinstance(estimator, SpectralDecomposition):
        estimator = assemble(estimator.eigenvalues, estimator.eigenvectors)
    if score == "portfolio-variance":
        from .applications import min_variance_weights

        try:
            w = min_variance_weights(estimator)
        except SingularEstimator:
            return math.inf
        return float(np.mean((z @ w) ** 2))
    if score == "frobenius-holdout":
        return float(np.sum((estimator - moment) ** 2))
    if score == "quadratic":
        return float(np.sum(estimator * estimator) - 2.0 * np.sum(moment * estimator))
    raise ConfigError(f"unknown score {score!r}; expected one of {', '.join(SCORES)}")


def _grid_estimators(make, grid):
    many = getattr(make, "many", None)
    return many(grid) if many is not None else [make(g) for g in grid]


def score_grid(
    grid: Sequence[float],
    fit: Callable[[SampleSet], Callable[[float], SpectralDecomposition | np.ndarray]],
    train: SampleSet,
    validation: SampleSet,
    score: str,
) -> np.ndarray:
    """Scores of every grid value for one train/validation split.

    ``fit(train)`` returns a map from grid value to estimator, so per-split
    work (covariance, eigendecomposition) happens once. A ``many`` attribute
    on that map, when present, builds all grid estimators in one call.
    """
    estimators = _grid_estimators(fit(train), grid)
    return np.array([validation_score(score, est, train, validation) for est in estimators])


FOLD_CACHE_SIZE = 8
_fold_cache: OrderedDict = OrderedDict()


def fold_decompositions(data: SampleSet, labels: np.ndarray) -> list[SpectralDecomposition]:
    """Eigendecompositions of every training fold's sample covariance.

    The folds are rotated together, starting from the eigenbasis of the full
    sample, and the result is memoized for the last few ``(data, labels)``
    pairs so that calibrating several divergences on one window decomposes
    each fold once.
    """
    labels = np.asarray(labels)
    key = (data.samples.shape, data.samples.tobytes(), data.centering, labels.tobytes())
    hit = _fold_cache.get(key)
    if hit is not None:
        _fold_cache.move_to_end(key)
        return hit
    basis = eigendecompose(sample_covariance(data)).eigenvectors
    covs = [sample_covariance(data.subset(labels != k)) for k in range(labels.max() + 1)]
    out = eigendecompose_many(covs, basis=basis)
    _fold_cache[key] = out
    if len(_fold_cache) > FOLD_CACHE_SIZE:
        _fold_cache.popitem(last=False)
    return out


def cross_validate(
    data: SampleSet,
    grid: Sequence[float],
    fit: Callable[[SampleSet], Callable[[float], SpectralDecomposition | np.ndarray]],
    folds=None,
    score: str = "portfolio-variance",
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Return the grid value with the lowest mean validation score and all mean scores.

    Ties go to the earliest grid entry. Folds whose scores are zero for every
    grid value carry no information and are skipped with a warning, as are
    folds the fitter cannot handle (see :func:`robust_fit`).

    A fitter with an ``over_folds(trains, decompositions, grid)`` attribute
    builds the estimators of all folds in one call from the batched fold
    decompositions; it returns one list of estimators per fold, or ``None``
    for a fold it skips.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise EmptyGrid("cross-validation grid is empty")
    if score not in SCORES:
        raise ConfigError(f"unknown score {score!r}; expected one of {', '.join(SCORES)}")
    labels = fold_labels(data.n, default_folds(data.n) if folds is None else folds, seed)
    count = labels.max() + 1
    trains = [data.subset(labels != k) for k in range(count)]
    if min(t.n for t in trains) < 2:
        raise InsufficientData("a training fold has fewer than two observations")
    over = getattr(fit, "over_folds", None)
    if over is not None:
        per_fold = over(trains, fold_decompositions(data, labels), grid)
    else:
        per_fold = [_grid_estimators(fit(t), grid) for t in trains]

    total = np.zeros(len(grid))
    used = 0
    for k, (train, estimators) in enumerate(zip(trains, per_fold)):
        if estimators is None:
            warnings.warn(f"fold {k} has a singular training covariance; skipped", SingularFoldWarning, stacklevel=2)
            continue
        validation = data.subset(labels == k)
        scores = np.array([validation_score(score, est, train, validation) for est in estimators])
        if score == "portfolio-variance" and np.all(scores == 0.0):
            warnings.warn(f"fold {k} has zero validation variance; skipped", DegenerateFoldWarning, stacklevel=2)
            continue
        total += scores
        used += 1
    if used == 0:
        raise InsufficientData("every validation fold was degenerate")
    mean = total / used
    return grid[int(np.argmin(mean))], mean


def robust_fit(spec: DivergenceSpec, tol: float = 1e-10):
    """Fitter for :func:`cross_validate` over radii of one divergence.

    Within :func:`cross_validate`, folds whose training covariance is
    singular are skipped for divergences that need an invertible nominal.
    """
    spec = get_spec(spec)

    def fit(train: SampleSet):
        nominal = sample_covariance(train)
        d = eigendecompose(nominal)
        cap = epsilon_max(spec, d.eigenvalues)

        def at(eps: float) -> SpectralDecomposition:
            return estimate(nominal, spec, clip_radius(eps, cap), tol=tol, decomposition=d).decomposition

        def many(grid) -> list[SpectralDecomposition]:
            radii = [clip_radius(float(g), cap) for g in grid]
            _, shrunk = shrink_spectra(spec, d.eigenvalues, radii, tol)
            return [SpectralDecomposition(row, d.eigenvectors) for row in shrunk]

        at.many = many
        return at

    def over_folds(trains, decompositions, grid):
        usable = [k for k, d in enumerate(decompositions) if not (spec.requires_pd_nominal and d.eigenvalues[0] <= 0)]
        out = [None] * len(decompositions)
        if not usable:
            return out
        nominals = [decompositions[k].eigenvalues for k in usable]
        radii = [[clip_radius(float(g), epsilon_max(spec, e)) for g in grid] for e in nominals]
        shrunk = shrink_spectra_many(spec, nominals, radii, tol)
        for k, rows in zip(usable, shrunk):
            out[k] = [SpectralDecomposition(row, decompositions[k].eigenvectors) for row in rows]
        return out

    fit.over_folds = over_folds
    return fit


def linear_fit(train: SampleSet):
    """Fitter for :func:`cross_validate` over linear shrinkage weights."""
    d = eigendecompose(sample_covariance(train))
    return lambda alpha: linear_shrinkage_spectrum(d, alpha)


linear_fit.over_folds = lambda trains, decompositions, grid: [
    [linear_shrinkage_spectrum(d, a) for a in grid] for d in decompositions
]


def cross_validate_radius(
    data: SampleSet,
    spec: DivergenceSpec,
    grid: Sequence[float],
    folds=None,
    score: str = "portfolio-variance",
    seed: int = 0,
) -> float:
    """Radius from ``grid`` with the best mean validation score (ties to the smaller radius)."""
    grid = sorted(float(g) for g in grid)
    return cross_validate(data, grid, robust_fit(spec), folds, score, seed)[0]


def log_grid(lo: float, hi: float, num: int = 50) -> np.ndarray:
    if not (0 < lo <= hi) or num < 1:
        raise EmptyGrid(f"bad grid [{lo}, {hi}] with {num} points")
    return np.geomspace(lo, hi, num)


# Search ranges used for in-window calibration of each estimator family.
DEFAULT_RADIUS_RANGES = {
    Kind.KULLBACK_LEIBLER: (1e-5, 1e2),
    Kind.FISHER_RAO: (1e-10, 1e4),
    Kind.WASSERSTEIN: (1e-10, 1e8),
}
DEFAULT_ALPHA_RANGE = (1e-5, 1.0)


def default_radius_grid(spec: DivergenceSpec, num: int = 50) -> np.ndarray:
    lo, hi = DEFAULT_RADIUS_RANGES.get(get_spec(spec).kind, (1e-5, 1e2))
    return log_grid(lo, hi, num)


# ----------------------------------------------------------------- schedules


@dataclass(frozen=True)
class Fixed:
    epsilon: float

    def resolve(self, data: SampleSet, spec: DivergenceSpec, cap: float = math.inf) -> float:
        return clip_radius(self.epsilon, cap)


@dataclass(frozen=True)
class RootN:
    c: float

    def resolve(self, data: SampleSet, spec: DivergenceSpec, cap: float = math.inf) -> float:
        return clip_radius(radius_root_n(self.c, data.n), cap)


@dataclass(frozen=True)
class FiniteSample:
    """Certificate radius; ``sigma2`` and ``lambda_min`` default to sample plug-ins."""

    c0: float = 1.0
    sigma2: float | None = None
    lambda_min: float | None = None
    eta: float = 0.05

    def resolve(self, data: SampleSet, spec: DivergenceSpec, cap: float = math.inf) -> float:
        sigma2, lambda_min = self.sigma2, self.lambda_min
        if sigma2 is None or lambda_min is None:
            e = eigendecompose(sample_covariance(data)).eigenvalues
            if sigma2 is None:
                sigma2 = float(e[-1])
                warnings.warn(f"sigma2 replaced by the largest sample eigenvalue {sigma2!r}", PlugInWarning, stacklevel=2)
            if lambda_min is None:
                lambda_min = float(e[0])
                warnings.warn(f"lambda_min replaced by the smallest sample eigenvalue {lambda_min!r}", PlugInWarning, stacklevel=2)
        eps = radius_finite_sample(self.c0, sigma2, lambda_min, data.p, data.n, self.eta, spec)
        return clip_radius(eps, cap)


@dataclass(frozen=True)
class TernarySearch:
    """Oracle radius minimizing a supplied loss; needs ``loss`` at resolve time."""

    lo: float
    hi: float
    iters: int = 60
    trials: int = 10

    def resolve(self, data: SampleSet, spec: DivergenceSpec, cap: float = math.inf, loss=None) -> float:
        if loss is None:
            raise ConfigError("ternary search needs a loss function (available in synthetic experiments only)")
        hi = min(self.hi, cap * CLIP_FACTOR) if math.isfinite(cap) else self.hi
        return clip_radius(ternary_search_radius(loss, self.lo, hi, self.iters), cap)


@dataclass(frozen=True)
class CrossValidate:
    grid: tuple[float, ...]
    folds: int | str | None = None
    score: str = "portfolio-variance"
    seed: int = 0

    def resolve(self, data: SampleSet, spec: DivergenceSpec, cap: float = math.inf) -> float:
        eps = cross_validate_radius(data, spec, self.grid, self.folds, self.score, self.seed)
        return clip_radius(eps, cap)


RadiusSchedule = Fixed | RootN | FiniteSample | TernarySearch | CrossValidate


def _grid_from(value, spec) -> tuple[float, ...]:
    if value is None:
        return tuple(default_radius_grid(spec))
    if isinstance(value, dict):
        extra = set(value) - {"lo", "hi", "num"}
        if extra:
            raise ConfigError(f"unknown grid keys {sorted(extra)}")
        return tuple(log_grid(float(value["lo"]), float(value["hi"]), int(value.get("num", 50))))
    grid = tuple(float(v) for v in value)
    if not grid:
        raise EmptyGrid("radius grid is empty")
    return grid


_POLICY_KEYS = {
    "fixed": {"epsilon"},
    "root_n": {"c"},
    "finite_sample": {"c0", "sigma2", "lambda_min", "eta"},
    "ternary_search": {"lo", "hi", "iters", "trials"},
    "cross_validate": {"grid", "folds", "score", "seed"},
}


def schedule_from_config(cfg: dict, spec: DivergenceSpec | None = None) -> RadiusSchedule:
    """Build a schedule from e.g. ``{"policy": "root_n", "c": 5.0}``."""
    if not isinstance(cfg, dict) or "policy" not in cfg:
        raise ConfigError("radius config needs a 'policy' key")
    policy = cfg["policy"]
    if policy not in _POLICY_KEYS:
        raise ConfigError(f"unknown radius policy {policy!r}; expected one of {sorted(_POLICY_KEYS)}")
    extra = set(cfg) - _POLICY_KEYS[policy] - {"policy"}
    if extra:
        raise ConfigError(f"unknown keys for policy {policy!r}: {sorted(extra)}")
    try:
        if policy == "fixed":
            sched = Fixed(float(cfg["epsilon"]))
            clip_radius(sched.epsilon, math.inf)
            return sched
        if policy == "root_n":
            sched = RootN(float(cfg["c"]))
            radius_root_n(sched.c, 1)
            return sched
        if policy == "finite_sample":
            sched = FiniteSample(
                c0=float(cfg.get("c0", 1.0)),
                sigma2=None if cfg.get("sigma2") is None else float(cfg["sigma2"]),
                lambda_min=None if cfg.get("lambda_min") is None else float(cfg["lambda_min"]),
                eta=float(cfg.get("eta", 0.05)),
            )
            if not 0.0 < sched.eta < 1.0:
                raise BadConfidence(f"confidence parameter must lie in (0, 1), got {sched.eta}")
            if sched.c0 <= 0 or (sched.sigma2 is not None and sched.sigma2 <= 0):
                raise ConfigError("c0 and sigma2 must be positive")
            return sched
        if policy == "ternary_search":
            sched = TernarySearch(float(cfg["lo"]), float(cfg["hi"]), int(cfg.get("iters", 60)), int(cfg.get("trials", 10)))
            if not (0 < sched.lo < sched.hi) or sched.iters < 1 or sched.trials < 1:
                raise ConfigError("ternary search needs 0 < lo < hi and positive iters/trials")
            return sched
        folds = cfg.get("folds")
        if folds is not None and not (isinstance(folds, str) and folds.lower() == LOO):
            folds = int(folds)
            if folds < 2:
                raise ConfigError("folds must be at least 2 or 'loo'")
        score = cfg.get("score", "portfolio-variance")
        if score not in SCORES:
            raise ConfigError(f"unknown score {score!r}")
        return CrossValidate(_grid_from(cfg.get("grid"), spec or get_spec("kl")), folds, score, int(cfg.get("seed", 0)))
    except DrcovError:
        raise
    except KeyError as exc:
        raise ConfigError(f"radius policy {policy!r} is missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in radius config: {exc}") from None


def describe_schedule(schedule: RadiusSchedule) -> dict:
    """JSON-friendly echo of a schedule."""
    name = {Fixed: "fixed", RootN: "root_n", FiniteSample: "finite_sample", TernarySearch: "ternary_search", CrossValidate: "cross_validate"}
    out = {"policy": name[type(schedule)]}
    for key, value in schedule.__dict__.items():
        out[key] = list(value) if isinstance(value, tuple) else value
    return out
