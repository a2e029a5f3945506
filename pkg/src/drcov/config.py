"""Run configuration for the command-line tool.

A run is described by one flat JSON object: the global keys ``seed``,
``tol`` and ``out`` plus the keys of the chosen command. Values are checked
when the config is built, and unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .calibration import SCORES, schedule_from_config
from .divergences import get_spec
from .errors import ConfigError, DrcovError, MissingInput, RadiusNonPositive
from .experiments import DEFAULT_KINDS
from .shrinkage import DEFAULT_TOL

CENTERINGS = ("zero-mean", "sample-mean")
POPULATIONS = ("identity", "banded")
REGIMES = ("fixed-dimension", "proportional")
METHODS = ("lda", "qda")
MAX_SEED = 2**64 - 1


# ------------------------------------------------------------------ coercion


def _int(name, v, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            raise ConfigError(f"{name} must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{name} must be at least {lo}, got {v}")
    return v


def _float(name, v, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{name} must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{name} must be positive, got {v}")
    return v


def _fraction(name, v):
    v = _float(name, v)
    if not 0.0 < v < 1.0:
        raise ConfigError(f"{name} must lie in (0, 1), got {v}")
    return v


def _list(name, v, item, nonempty=True):
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"{name} must be a list, got {v!r}")
    if nonempty and not v:
        raise ConfigError(f"{name} must not be empty")
    return [item(f"{name}[{i}]", x) for i, x in enumerate(v)]


def _choice(name, v, choices):
    if v not in choices:
        raise ConfigError(f"{name} must be one of {list(choices)}, got {v!r}")
    return v


def _kind(name, v):
    if not isinstance(v, str):
        raise ConfigError(f"{name} must be a divergence name, got {v!r}")
    return get_spec(v).name


def _estimator_name(name, v):
    if v in ("sample", "linear"):
        return v
    return _kind(name, v)


def _path(name, v):
    if v is None:
        return None
    if not isinstance(v, str) or not v:
        raise ConfigError(f"{name} must be a file path, got {v!r}")
    return v


def _folds(v):
    if v is None or v == "loo":
        return v
    return _int("folds", v, lo=2)


def _radius(v, kind=None):
    if v is None:
        return None
    if not isinstance(v, dict):
        raise ConfigError(f"radius must be an object such as {{'policy': 'root_n', 'c': 5.0}}, got {v!r}")
    schedule_from_config(v, get_spec(kind) if kind else None)
    return dict(v)


# --------------------------------------------------------------- base class


@dataclass
class _Config:
    seed: int = 0
    tol: float = DEFAULT_TOL
    out: str = "drcov-out"

    def _check_globals(self):
        self.seed = _int("seed", self.seed, lo=0)
        if self.seed > MAX_SEED:
            raise ConfigError("seed must fit in 64 bits")
        self.tol = _float("tol", self.tol, positive=True)
        if not isinstance(self.out, str) or not self.out:
            raise ConfigError("out must be a directory path")

    @classmethod
    def from_mapping(cls, raw: dict):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(raw) - known)
        if extra:
            raise ConfigError(f"unknown config keys {extra}; allowed: {sorted(known)}")
        cfg = cls(**raw)
        cfg._check_globals()
        try:
            cfg.check()
        except DrcovError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def check(self):
        pass

    def echo(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class EstimateConfig(_Config):
    input: str | None = None
    samples: str | None = None
    centering: str = "sample-mean"
    divergence: str | None = None
    epsilon: float | None = None
    radius: dict | None = None
    polish: bool = False

    def check(self):
        self.input = _path("input", self.input)
        self.samples = _path("samples", self.samples)
        if (self.input is None) == (self.samples is None):
            raise ConfigError("give exactly one of input (covariance CSV) or samples (observations CSV)")
        self.centering = _choice("centering", self.centering, CENTERINGS)
        if self.divergence is None:
            raise ConfigError("divergence is required")
        self.divergence = _kind("divergence", self.divergence)
        if (self.epsilon is None) == (self.radius is None):
            raise ConfigError("give exactly one of epsilon or radius")
        if self.epsilon is not None:
            self.epsilon = _float("epsilon", self.epsilon)
            if self.epsilon <= 0:
                raise RadiusNonPositive(f"radius must be positive, got {self.epsilon}")
        self.radius = _radius(self.radius, self.divergence)
        if self.radius is not None and self.input is not None and self.radius["policy"] != "fixed":
            raise ConfigError("data-driven radius policies need samples, not a covariance matrix")
        if not isinstance(self.polish, bool):
            raise ConfigError("polish must be true or false")


@dataclass
class SweepConfig(_Config):
    eigenvalues: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    kinds: list = field(default_factory=lambda: list(DEFAULT_KINDS))
    grid: list | None = None
    num: int = 50

    def check(self):
        self.eigenvalues = _list("eigenvalues", self.eigenvalues, _float)
        if min(self.eigenvalues) < 0:
            raise ConfigError("eigenvalues must be non-negative")
        self.kinds = _list("kinds", self.kinds, _kind)
        if self.grid is not None:
            self.grid = _list("grid", self.grid, _float)
            if min(self.grid) <= 0:
                raise RadiusNonPositive("grid radii must be positive")
        self.num = _int("num", self.num, lo=1)


@dataclass
class SyntheticRiskConfig(_Config):
    p: int = 100
    spikes: int = 10
    magnitudes: list = field(default_factory=lambda: [10.0, 100.0, 500.0])
    sizes: list = field(default_factory=lambda: [100, 200, 500])
    trials: int = 10
    kinds: list = field(default_factory=lambda: list(DEFAULT_KINDS))
    num_radii: int = 50
    alphas: list | None = None
    centering: str = "zero-mean"

    def check(self):
        self.p = _int("p", self.p, lo=1)
        self.spikes = _int("spikes", self.spikes, lo=0)
        if self.spikes > self.p:
            raise ConfigError("spikes cannot exceed p")
        self.magnitudes = _list("magnitudes", self.magnitudes, lambda n, v: _float(n, v, positive=True))
        self.sizes = _list("sizes", self.sizes, lambda n, v: _int(n, v, lo=2))
        self.trials = _int("trials", self.trials, lo=1)
        self.kinds = _list("kinds", self.kinds, _kind)
        self.num_radii = _int("num_radii", self.num_radii, lo=2)
        if self.alphas is not None:
            self.alphas = _list("alphas", self.alphas, _float)
            if not all(0.0 <= a <= 1.0 for a in self.alphas):
                raise ConfigError("alphas must lie in [0, 1]")
        self.centering = _choice("centering", self.centering, CENTERINGS)


@dataclass
class ConsistencyConfig(_Config):
    regime: str = "fixed-dimension"
    p: int = 10
    sizes: list | None = None
    c: float = 5.0
    populations: list = field(default_factory=lambda: list(POPULATIONS))
    trials: int = 10
    kinds: list = field(default_factory=lambda: list(DEFAULT_KINDS))
    centering: str = "zero-mean"
    ratio: float = 0.8
    iters: int = 40
    log_range: list = field(default_factory=lambda: [1e-4, 1e4])

    def check(self):
        self.regime = _choice("regime", self.regime, REGIMES)
        self.p = _int("p", self.p, lo=1)
        if self.sizes is None:
            self.sizes = [64 * 2**i for i in range(7)] if self.regime == "fixed-dimension" else [20, 40, 80, 160]
        self.sizes = _list("sizes", self.sizes, lambda n, v: _int(n, v, lo=2))
        if len(self.sizes) < 2:
            raise ConfigError("a slope fit needs at least two sample sizes")
        self.c = _float("c", self.c, positive=True)
        self.populations = _list("populations", self.populations, lambda n, v: _choice(n, v, POPULATIONS))
        self.trials = _int("trials", self.trials, lo=1)
        self.kinds = _list("kinds", self.kinds, _kind)
        self.centering = _choice("centering", self.centering, CENTERINGS)
        self.ratio = _float("ratio", self.ratio, positive=True)
        self.iters = _int("iters", self.iters, lo=1)
        self.log_range = _list("log_range", self.log_range, lambda n, v: _float(n, v, positive=True))
        if len(self.log_range) != 2 or not self.log_range[0] < self.log_range[1]:
            raise ConfigError("log_range must be [lo, hi] with 0 < lo < hi")


@dataclass
class PortfolioConfig(_Config):
    returns: str | None = None
    estimator: str = "sample"
    epsilon: float | None = None
    radius: dict | None = None
    alpha: float | None = None
    window: int = 50
    holding: int = 1
    folds: int | str | None = None
    score: str = "portfolio-variance"
    centering: str = "sample-mean"

    def check(self):
        self.returns = _path("returns", self.returns)
        if self.returns is None:
            raise ConfigError("returns (CSV path) is required")
        self.estimator = _estimator_name("estimator", self.estimator)
        if self.epsilon is not None and self.radius is not None:
            raise ConfigError("give at most one of epsilon or radius")
        if self.epsilon is not None:
            self.epsilon = _float("epsilon", self.epsilon)
            if self.epsilon <= 0:
                raise RadiusNonPositive(f"radius must be positive, got {self.epsilon}")
        robust = self.estimator not in ("sample", "linear")
        self.radius = _radius(self.radius, self.estimator if robust else None)
        if self.radius is not None and self.radius["policy"] == "ternary_search":
            raise ConfigError("ternary search needs the population covariance; use it in synthetic experiments")
        if self.alpha is not None:
            self.alpha = _float("alpha", self.alpha)
            if not 0.0 <= self.alpha <= 1.0:
                raise ConfigError("alpha must lie in [0, 1]")
        self.window = _int("window", self.window, lo=2)
        self.holding = _int("holding", self.holding, lo=1)
        self.folds = _folds(self.folds)
        self.score = _choice("score", self.score, SCORES)
        self.centering = _choice("centering", self.centering, CENTERINGS)


@dataclass
class ClassifyConfig(_Config):
    data: str | None = None
    methods: list = field(default_factory=lambda: list(METHODS))
    estimators: list = field(default_factory=lambda: ["sample", "linear", *DEFAULT_KINDS])
    permutations: int = 10
    train_fraction: float = 0.5
    validation_fraction: float = 0.2

    def check(self):
        self.data = _path("data", self.data)
        if self.data is None:
            raise ConfigError("data (labeled CSV path) is required")
        self.methods = _list("methods", self.methods, lambda n, v: _choice(n, v, METHODS))
        self.estimators = _list("estimators", self.estimators, _estimator_name)
        self.permutations = _int("permutations", self.permutations, lo=1)
        self.train_fraction = _fraction("train_fraction", self.train_fraction)
        self.validation_fraction = _fraction("validation_fraction", self.validation_fraction)


CONFIGS = {
    "estimate": EstimateConfig,
    "sweep": SweepConfig,
    "synthetic-risk": SyntheticRiskConfig,
    "consistency": ConsistencyConfig,
    "portfolio": PortfolioConfig,
    "classify": ClassifyConfig,
}


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MissingInput(f"cannot read config file {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc.msg} at line {exc.lineno}", line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return raw


def build_config(command: str, file_values: dict, overrides: dict):
    """Merge file values with flag overrides (flags win) and validate."""
    merged = dict(file_values)
    merged.update(overrides)
    return CONFIGS[command].from_mapping(merged)
