"""Experiment drivers that produce long-format result tables.

Every driver is a pure function of its arguments and a base seed. Trial ``t``
draws from its own generator seeded with ``seed + t``, so trials can be
reordered or split across processes without changing any number. Rows are
sorted before they are returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baselines import Centering, SampleSet, linear_shrinkage_spectrum, sample_covariance
from .calibration import (
    DEFAULT_ALPHA_RANGE,
    clip_radius,
    default_radius_grid,
    log_grid,
    radius_root_n,
    ternary_search_radius,
)
from .divergences import epsilon_max, get_spec
from .errors import DomainError, EmptyGrid
from .shrinkage import DEFAULT_TOL, estimate, shrink_spectra
from .spectral import SpectralDecomposition, assemble, condition_number, eigendecompose
from .synthetic import banded_covariance, gaussian_samples, make_rng, spectral_factor, spiked_covariance

DEFAULT_KINDS = ("kl", "wasserstein", "fisher-rao")


def _sort_key(row):
    # numbers before strings, so mixed columns still order deterministically
    return tuple((0, v, "") if isinstance(v, (int, float)) else (1, 0.0, str(v)) for v in row)


@dataclass(frozen=True)
class ExperimentResult:
    """A long-format table plus an optional aggregate table."""

    experiment: str
    columns: tuple[str, ...]
    rows: list[tuple]
    summary_columns: tuple[str, ...] = ()
    summary: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "rows", sorted(self.rows, key=_sort_key))
        object.__setattr__(self, "summary", sorted(self.summary, key=_sort_key))

    def column(self, name: str, table: str = "rows") -> list:
        cols = self.columns if table == "rows" else self.summary_columns
        i = cols.index(name)
        return [r[i] for r in getattr(self, table)]

    def select(self, table: str = "rows", **match) -> list[dict]:
        """Rows of ``table`` as dicts, filtered by exact column values."""
        cols = self.columns if table == "rows" else self.summary_columns
        out = []
        for r in getattr(self, table):
            rec = dict(zip(cols, r))
            if all(rec[k] == v for k, v in match.items()):
                out.append(rec)
        return out


def frobenius_loss(estimate_, truth: np.ndarray) -> float:
    m = assemble(estimate_.eigenvalues, estimate_.eigenvectors) if isinstance(estimate_, SpectralDecomposition) else estimate_
    return float(np.linalg.norm(m - truth))


def loglog_fit(x, y) -> tuple[float, float]:
    """Least-squares slope and R^2 of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if lx.size < 2:
        raise EmptyGrid("a slope needs at least two points")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    total = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2)) / float(total) if total > 0 else math.nan
    return float(slope), r2


def _summarize(groups: dict, key_prefix: tuple, metrics=("mean", "std")) -> list[tuple]:
    out = []
    for key, vals in groups.items():
        v = np.asarray(vals, dtype=float)
        stats = {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0}
        for m in metrics:
            out.append(key_prefix + key + (m, stats[m]))
    return out


# ---------------------------------------------------------------------- sweep


def radius_sweep(
    eigenvalues: Sequence[float] = (1.0, 2.0, 3.0),
    kinds: Sequence[str] = DEFAULT_KINDS,
    grid: Sequence[float] | None = None,
    num: int = 50,
    tol: float = DEFAULT_TOL,
) -> ExperimentResult:
    """Shrunk eigenvalues and condition number along a radius grid.

    Without an explicit ``grid`` each kind gets ``num`` points spread evenly
    over ``(0, eps_bar)`` when ``eps_bar`` is finite (the last point sits a
    relative ``1e-6`` below it), and over ``(0, 10]`` otherwise. Points at or
    beyond ``eps_bar`` are clipped just below it.
    """
    e = np.sort(np.asarray(eigenvalues, dtype=float))
    if e.ndim != 1 or e.size == 0:
        raise DomainError("sweep needs a non-empty spectrum")
    nominal = SpectralDecomposition(e, np.eye(e.size))
    rows = []
    for name in kinds:
        spec = get_spec(name)
        cap = epsilon_max(spec, e)
        if grid is not None:
            points = [float(g) for g in grid]
        else:
            top = cap * (1.0 - 1e-6) if math.isfinite(cap) else 10.0
            points = list(np.linspace(top / num, top, num))
        for eps in points:
            eff = clip_radius(eps, cap)
            sol = estimate(None, spec, eff, tol=tol, decomposition=nominal)
            kappa = condition_number(SpectralDecomposition(np.sort(sol.shrunk_eigenvalues), np.eye(e.size)))
            for i, x in enumerate(sol.shrunk_eigenvalues, start=1):
                rows.append((spec.name, eff, i, float(x), kappa))
    return ExperimentResult("sweep", ("kind", "epsilon", "index", "shrunk_eigenvalue", "condition_number"), rows)


# ------------------------------------------------------------ synthetic risk


def synthetic_risk(
    p: int = 100,
    spikes: int = 10,
    magnitudes: Sequence[float] = (10.0, 100.0, 500.0),
    sizes: Sequence[int] = (100, 200, 500),
    trials: int = 10,
    seed: int = 0,
    kinds: Sequence[str] = DEFAULT_KINDS,
    num_radii: int = 50,
    alphas: Sequence[float] | None = None,
    centering: Centering = Centering.ZERO_MEAN,
    tol: float = DEFAULT_TOL,
) -> ExperimentResult:
    """Frobenius loss of each estimator against a spiked population covariance.

    The radius grid for each kind is its default log grid; requested radii at
    or above ``eps_bar`` of a given draw are clipped just below it, and the
    clipped value is reported as the ``effective_radius`` metric.
    """
    alphas = tuple(log_grid(*DEFAULT_ALPHA_RANGE)) if alphas is None else tuple(float(a) for a in alphas)
    specs = [get_spec(k) for k in kinds]
    grids = {s.name: default_radius_grid(s, num_radii) for s in specs}
    rows = []
    groups: dict[tuple, list[float]] = {}

    def add(trial, M, n, est, hyper, value, metric, loss):
        rows.append((seed + trial, M, n, est, hyper, value, metric, loss))
        if metric == "frobenius_loss":
            groups.setdefault((M, n, est, hyper, value), []).append(loss)

    for M in magnitudes:
        truth = spiked_covariance(p, spikes, M)
        factor = spectral_factor(truth)
        for n in sizes:
            for t in range(trials):
                x = gaussian_samples(truth, n, make_rng(seed + t), factor)
                nominal = eigendecompose(sample_covariance(SampleSet(x, centering)))
                add(t, M, n, "sample", "none", 0.0, "frobenius_loss", frobenius_loss(nominal, truth))
                for a in alphas:
                    add(t, M, n, "linear", "alpha", a, "frobenius_loss", frobenius_loss(linear_shrinkage_spectrum(nominal, a), truth))
                for spec in specs:
                    cap = epsilon_max(spec, nominal.eigenvalues)
                    effs = [clip_radius(float(eps), cap) for eps in grids[spec.name]]
                    _, shrunk = shrink_spectra(spec, nominal.eigenvalues, effs, tol)
                    for eps, eff, s in zip(grids[spec.name], effs, shrunk):
                        est = SpectralDecomposition(s, nominal.eigenvectors)
                        add(t, M, n, spec.name, "epsilon", float(eps), "frobenius_loss", frobenius_loss(est, truth))
                        if eff != eps:
                            add(t, M, n, spec.name, "epsilon", float(eps), "effective_radius", eff)
    cols = ("seed", "M", "n", "estimator", "hyperparameter", "hyperparameter_value", "metric", "value")
    summary_cols = ("M", "n", "estimator", "hyperparameter", "hyperparameter_value", "statistic", "frobenius_loss")
    return ExperimentResult("synthetic-risk", cols, rows, summary_cols, _summarize(groups, ()))


# --------------------------------------------------------------- consistency


def _population(name: str, p: int) -> np.ndarray:
    if name == "identity":
        return np.eye(p)
    if name == "banded":
        return banded_covariance(p)
    raise DomainError(f"unknown population covariance {name!r}; expected identity or banded")


def consistency(
    p: int = 10,
    sizes: Sequence[int] = tuple(64 * 2**i for i in range(7)),
    c: float = 5.0,
    populations: Sequence[str] = ("identity", "banded"),
    trials: int = 10,
    seed: int = 0,
    kinds: Sequence[str] = DEFAULT_KINDS,
    centering: Centering = Centering.ZERO_MEAN,
    tol: float = DEFAULT_TOL,
) -> ExperimentResult:
    """Frobenius loss against ``n`` with radius ``c / sqrt(n)``.

    The summary holds mean and standard deviation per ``(population,
    estimator, n)`` and, under ``n = "all"``, the log-log slope and R^2 of the
    mean loss against ``n``.
    """
    specs = [get_spec(k) for k in kinds]
    sizes = sorted(int(n) for n in sizes)
    rows = []
    groups: dict[tuple, list[float]] = {}
    for pop in populations:
        truth = _population(pop, p)
        factor = spectral_factor(truth)
        for t in range(trials):
            rng = make_rng(seed + t)
            for n in sizes:
                x = gaussian_samples(truth, n, rng, factor)
                nominal = eigendecompose(sample_covariance(SampleSet(x, centering)))
                losses = [("sample", frobenius_loss(nominal, truth))]
                eps_n = radius_root_n(c, n)
                for spec in specs:
                    eff = clip_radius(eps_n, epsilon_max(spec, nominal.eigenvalues))
                    losses.append((spec.name, frobenius_loss(estimate(None, spec, eff, tol=tol, decomposition=nominal).estimator, truth)))
                for est, loss in losses:
                    rows.append((seed + t, pop, est, n, "frobenius_loss", loss))
                    groups.setdefault((pop, est, n), []).append(loss)
    summary = _summarize(groups, ())
    for pop in populations:
        for est in ["sample"] + [s.name for s in specs]:
            means = [float(np.mean(groups[(pop, est, n)])) for n in sizes]
            slope, r2 = loglog_fit(sizes, means)
            summary += [(pop, est, "all", "loglog_slope", slope), (pop, est, "all", "loglog_r2", r2)]
    return ExperimentResult(
        "consistency",
        ("seed", "population", "estimator", "n", "metric", "value"),
        rows,
        ("population", "estimator", "n", "statistic", "value"),
        summary,
    )


def optimal_radius_growth(
    sizes: Sequence[int] = (20, 40, 80, 160),
    ratio: float = 0.8,
    populations: Sequence[str] = ("banded",),
    trials: int = 10,
    seed: int = 0,
    kinds: Sequence[str] = DEFAULT_KINDS,
    log_range: tuple[float, float] = (1e-4, 1e4),
    iters: int = 40,
    centering: Centering = Centering.ZERO_MEAN,
    tol: float = DEFAULT_TOL,
) -> ExperimentResult:
    """Empirically optimal radius when the dimension grows as ``p = ratio * n``.

    For each ``n`` a ternary search over ``log(eps)`` minimizes the mean
    Frobenius loss across trials. Reported per ``(estimator, n)``: the optimal
    radius and the normalized loss ``||X - S0||_F / ||S0||_F``; the sample
    covariance's normalized loss is reported alongside. The summary fits
    ``log(optimal radius)`` against ``log(n)``.
    """
    specs = [get_spec(k) for k in kinds]
    sizes = sorted(int(n) for n in sizes)
    rows = []
    summary = []
    for pop in populations:
        fits: dict[str, list[float]] = {}
        for n in sizes:
            p = max(1, int(round(ratio * n)))
            truth = _population(pop, p)
            scale = float(np.linalg.norm(truth))
            factor = spectral_factor(truth)
            nominals = [
                eigendecompose(sample_covariance(SampleSet(gaussian_samples(truth, n, make_rng(seed + t), factor), centering)))
                for t in range(trials)
            ]
            sample_loss = float(np.mean([frobenius_loss(d, truth) for d in nominals])) / scale
            rows.append((pop, "sample", n, p, "normalized_loss", sample_loss))
            for spec in specs:
                caps = [epsilon_max(spec, d.eigenvalues) for d in nominals]

                def mean_loss(eps, spec=spec, caps=caps, nominals=nominals, truth=truth):
                    return float(np.mean([
                        frobenius_loss(estimate(None, spec, clip_radius(eps, cap), tol=tol, decomposition=d).estimator, truth)
                        for d, cap in zip(nominals, caps)
                    ]))

                lo, hi = (math.log(v) for v in log_range)
                if math.isfinite(min(caps)):
                    hi = min(hi, math.log(min(caps)))
                best = math.exp(ternary_search_radius(lambda t: mean_loss(math.exp(t)), lo, hi, iters))
                rows.append((pop, spec.name, n, p, "optimal_radius", best))
                rows.append((pop, spec.name, n, p, "normalized_loss", mean_loss(best) / scale))
                fits.setdefault(spec.name, []).append(best)
        for name, radii in fits.items():
            slope, r2 = loglog_fit(sizes, radii)
            summary += [(pop, name, "radius_loglog_slope", slope), (pop, name, "radius_loglog_r2", r2)]
    return ExperimentResult(
        "optimal-radius",
        ("population", "estimator", "n", "p", "metric", "value"),
        rows,
        ("population", "estimator", "statistic", "value"),
        summary,
    )


# ------------------------------------------------------------ classification


def _classifier_family(name: str):
    """``(grid or None, value -> estimator)`` for an estimator name."""
    from .applications import LinearShrinkageEstimator, RobustEstimator, SampleEstimator
    from .calibration import Fixed

    if name == "sample":
        return None, lambda _: SampleEstimator()
    if name == "linear":
        return tuple(log_grid(*DEFAULT_ALPHA_RANGE)), lambda a: LinearShrinkageEstimator(alpha=a)
    spec = get_spec(name)
    return tuple(default_radius_grid(spec)), lambda eps: RobustEstimator(spec, Fixed(eps))


def classification(
    features,
    labels,
    methods: Sequence[str] = ("lda", "qda"),
    estimators: Sequence[str] = ("sample", "linear") + DEFAULT_KINDS,
    permutations: int = 10,
    train_fraction: float = 0.5,
    validation_fraction: float = 0.2,
    seed: int = 0,
    grids: dict | None = None,
) -> ExperimentResult:
    """Test accuracy of LDA/QDA over random stratified train/test splits.

    Split ``t`` uses seed ``seed + t``. Hyperparameters are chosen on a
    holdout carved from the training part, then the classifier is refitted on
    the whole training part. The summary reports the mean accuracy and its
    standard error over splits.
    """
    from .applications import accuracy, fit_classifier, holdout_select, stratified_split

    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    grids = grids or {}
    rows = []
    groups: dict[tuple, list[float]] = {}
    for t in range(permutations):
        test, train = stratified_split(y, 1.0 - train_fraction, make_rng(seed + t))
        for method in methods:
            for name in estimators:
                grid, make = _classifier_family(name)
                grid = tuple(grids.get(name, grid)) if grid is not None else None
                if grid is None:
                    chosen = math.nan
                    est = make(None)
                else:
                    chosen, _ = holdout_select(x[train], y[train], method, make, grid, validation_fraction, seed + t)
                    est = make(chosen)
                acc = accuracy(fit_classifier(x[train], y[train], method, est), x[test], y[test])
                rows.append((seed + t, method, name, "accuracy", acc))
                if grid is not None:
                    rows.append((seed + t, method, name, "hyperparameter", chosen))
                groups.setdefault((method, name), []).append(acc)
    summary = []
    for key, accs in groups.items():
        a = np.asarray(accs)
        stderr = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
        summary += [key + ("mean", float(a.mean())), key + ("stderr", stderr)]
    return ExperimentResult(
        "classify",
        ("seed", "method", "estimator", "metric", "value"),
        rows,
        ("method", "estimator", "statistic", "accuracy"),
        summary,
    )
