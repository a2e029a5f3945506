import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drcov.baselines import Centering, SampleSet, sample_covariance
from drcov.calibration import (
    CLIP_FACTOR,
    CrossValidate,
    DegenerateFoldWarning,
    FiniteSample,
    SingularFoldWarning,
    Fixed,
    PlugInWarning,
    RootN,
    TernarySearch,
    clip_radius,
    cross_validate,
    cross_validate_radius,
    default_folds,
    default_radius_grid,
    describe_schedule,
    divergence_constant,
    fold_decompositions,
    fold_labels,
    linear_fit,
    log_grid,
    operator_norm_tail,
    radius_finite_sample,
    radius_root_n,
    robust_fit,
    schedule_from_config,
    score_grid,
    ternary_search_radius,
    validation_score,
)
from drcov.divergences import ALL_KINDS, epsilon_max
from drcov.errors import (
    BadConfidence,
    ConfigError,
    DomainError,
    EmptyGrid,
    InsufficientData,
    RadiusNonPositive,
    SingularNominal,
)
from drcov.spectral import eigendecompose
from drcov.synthetic import gaussian_samples, make_rng, spectral_factor, spiked_covariance


def test_root_n_examples():
    assert radius_root_n(5, 100) == 0.5
    assert radius_root_n(5, 25) == 1.0
    assert radius_root_n(1, 1) == 1.0
    assert all(radius_root_n(2, n) > radius_root_n(2, n + 1) for n in range(1, 50))
    with pytest.raises(RadiusNonPositive):
        radius_root_n(0, 4)
    with pytest.raises(InsufficientData):
        radius_root_n(1, 0)


def test_finite_sample_hand_example():
    # rho = (2 + 2)/8 + sqrt(4/8); quadratic constant is p
    eta = math.exp(-2)
    rho = operator_norm_tail(1.0, 1.0, 2, 8, eta)
    assert rho == pytest.approx(0.5 + math.sqrt(0.5), rel=1e-14)
    assert rho == pytest.approx(1.2071, abs=1e-4)
    assert radius_finite_sample(1.0, 1.0, 1.0, 2, 8, eta, "quadratic") == pytest.approx(2.4142, abs=1e-4)


def test_finite_sample_shape():
    kw = dict(c0=1.0, sigma2=2.0, lambda_min=0.5, eta=0.05, spec="kl")
    for n in (200, 400, 800):
        r1 = radius_finite_sample(p=3, n=n, **kw)
        r2 = radius_finite_sample(p=3, n=2 * n, **kw)
        assert 0.5 <= r2 / r1 <= 1 / math.sqrt(2)
        assert radius_finite_sample(p=4, n=n, **kw) > r1
    radii = [radius_finite_sample(1, 1, 1, 3, 50, eta, "kl") for eta in (0.01, 0.1, 0.5, 0.99)]
    assert np.all(np.diff(radii) < 0)


def test_divergence_constants():
    assert divergence_constant("quadratic", 4, 0.0) == 4.0
    assert divergence_constant("symmetrized-stein", 4, 2.0) == 2.0
    assert divergence_constant("kl", 4, 2.0) == 4.0
    assert divergence_constant("wasserstein", 3, 1.0) == pytest.approx(4 * 3 / 9)
    with pytest.raises(SingularNominal):
        divergence_constant("kl", 3, 0.0)


def test_finite_sample_errors():
    with pytest.raises(BadConfidence):
        operator_norm_tail(1, 1, 2, 8, 1.0)
    with pytest.raises(BadConfidence):
        operator_norm_tail(1, 1, 2, 8, 0.0)
    with pytest.raises(DomainError):
        operator_norm_tail(-1, 1, 2, 8, 0.5)


def test_ternary_search_examples():
    assert ternary_search_radius(lambda e: (e - 1) ** 2, 0, 3, 60) == pytest.approx(1.0, abs=1e-9)
    assert 0 <= ternary_search_radius(lambda e: 4.0, 0, 3, 5) <= 3
    with pytest.raises(DomainError):
        ternary_search_radius(lambda e: e, 1, 1)
    with pytest.raises(DomainError):
        ternary_search_radius(lambda e: e, 0, 1, 0)


def test_ternary_interval_shrinks_geometrically():
    calls = []

    def loss(e):
        calls.append(e)
        return abs(e - 0.3)

    ternary_search_radius(loss, 0.0, 1.0, 10)
    last = calls[-2:]
    assert abs(last[1] - last[0]) <= (2 / 3) ** 9 + 1e-12


def test_clip_radius():
    assert clip_radius(0.5, 1.0) == 0.5
    assert clip_radius(2.0, 1.0) == CLIP_FACTOR
    assert clip_radius(2.0, math.inf) == 2.0
    with pytest.raises(RadiusNonPositive):
        clip_radius(0.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(ALL_KINDS), st.floats(1e-6, 1e6), st.integers(2, 500))
def test_every_schedule_respects_cap(spec, value, n):
    data = SampleSet(make_rng(n).standard_normal((max(n, 6), 3)))
    e = np.linalg.eigvalsh(sample_covariance(data))
    cap = epsilon_max(spec, e)
    schedules = [Fixed(value), RootN(value), FiniteSample(c0=value, sigma2=1.0, lambda_min=1.0)]
    for s in schedules:
        eps = s.resolve(data, spec, cap)
        assert 0 < eps < cap


def test_finite_sample_plug_in_warns():
    data = SampleSet(make_rng(1).standard_normal((40, 3)))
    with pytest.warns(PlugInWarning):
        FiniteSample().resolve(data, ALL_KINDS[0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        FiniteSample(sigma2=1.0, lambda_min=0.5).resolve(data, ALL_KINDS[0])


def test_ternary_schedule_needs_loss():
    data = SampleSet(np.ones((3, 2)))
    with pytest.raises(ConfigError):
        TernarySearch(0.1, 1.0).resolve(data, ALL_KINDS[0])
    eps = TernarySearch(0.01, 4.0).resolve(data, ALL_KINDS[0], loss=lambda e: (e - 2.0) ** 2)
    assert eps == pytest.approx(2.0, abs=1e-6)


# ------------------------------------------------------------------- folds


def test_fold_labels():
    assert np.array_equal(fold_labels(5, "loo"), np.arange(5))
    labels = fold_labels(10, 3, seed=4)
    assert sorted(np.bincount(labels).tolist()) == [3, 3, 4]
    assert np.array_equal(labels, fold_labels(10, 3, seed=4))
    assert np.array_equal(fold_labels(4, ["a", "b", "a", "b"]), [0, 1, 0, 1])
    with pytest.raises(InsufficientData):
        fold_labels(3, 2)
    with pytest.raises(InsufficientData):
        fold_labels(10, 1)
    with pytest.raises(ConfigError):
        fold_labels(10, "kfold")
    assert default_folds(100) == "loo" and default_folds(101) == 5


# ---------------------------------------------------------- cross-validation


def _spiked_data(seed, n=60, p=48):
    s0 = spiked_covariance(p, min(5, p - 1), 100.0)
    return SampleSet(gaussian_samples(s0, n, make_rng(seed), spectral_factor(s0)))


def test_single_element_grid():
    data = _spiked_data(0, n=20, p=4)
    assert cross_validate_radius(data, "kl", [0.3], folds=4) == 0.3


def test_empty_grid_rejected():
    with pytest.raises(EmptyGrid):
        cross_validate_radius(_spiked_data(0, n=20, p=4), "kl", [], folds=4)


def test_quadratic_score_in_sample_picks_smallest_radius():
    data = SampleSet(make_rng(3).standard_normal((30, 4)), Centering.ZERO_MEAN)
    grid = log_grid(1e-3, 10, 12)
    scores = score_grid(grid, robust_fit("kl"), data, data, "quadratic")
    assert int(np.argmin(scores)) == 0
    assert np.all(np.diff(scores) > 0)


def test_ties_go_to_smaller_radius():
    data = _spiked_data(1, n=20, p=4)
    fit = lambda train: (lambda g: np.eye(4))
    best, scores = cross_validate(data, [0.5, 0.1, 0.9], fit, folds=4)
    assert best == 0.5 and np.ptp(scores) == 0
    assert cross_validate_radius(data, "kl", [0.9, 0.5], folds=4) in (0.5, 0.9)


def test_batched_grid_matches_pointwise():
    data = _spiked_data(2, n=30, p=6)
    grid = default_radius_grid("wasserstein", 15)
    fit = robust_fit("wasserstein")
    pointwise = lambda train: (lambda g, m=fit(train): m(g))
    a = cross_validate(data, grid, fit, folds=5)[1]
    b = cross_validate(data, grid, pointwise, folds=5)[1]
    assert np.allclose(a, b, rtol=1e-12)


def test_cv_is_permutation_invariant_for_fixed_folds():
    data = _spiked_data(5, n=30, p=6)
    labels = fold_labels(30, 5, seed=9)
    perm = make_rng(11).permutation(30)
    grid = default_radius_grid("kl", 10)
    a = cross_validate(data, grid, robust_fit("kl"), folds=labels)
    b = cross_validate(data.subset(perm), grid, robust_fit("kl"), folds=labels[perm])
    assert a[0] == b[0]
    assert np.allclose(a[1], b[1], rtol=1e-10)


def test_degenerate_fold_is_skipped():
    x = np.zeros((8, 2))
    x[:4] = make_rng(0).standard_normal((4, 2))
    x[4:] = 1.0  # constant rows: zero validation variance once centered on them
    data = SampleSet(x, Centering.ZERO_MEAN)
    fit = lambda train: (lambda g: np.eye(2))
    labels = np.array([0, 0, 1, 1, 2, 2, 2, 2])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cross_validate(data, [1.0], fit, folds=labels)
    assert not caught
    zero = SampleSet(np.vstack([make_rng(0).standard_normal((4, 2)), np.zeros((2, 2))]), Centering.ZERO_MEAN)
    with pytest.warns(DegenerateFoldWarning):
        cross_validate(zero, [1.0], fit, folds=np.array([0, 0, 1, 1, 2, 2]))


def _one_row_off_plane():
    x = make_rng(4).standard_normal((8, 3))
    x[1:, 2] = 0.0
    return SampleSet(x, Centering.ZERO_MEAN)


def test_singular_training_fold_is_skipped_for_pd_kinds():
    data = _one_row_off_plane()
    grid = log_grid(1e-3, 1.0, 5)
    with pytest.warns(SingularFoldWarning, match="fold 0"):
        best, scores = cross_validate(data, grid, robust_fit("kl"), folds="loo")
    assert np.all(np.isfinite(scores))
    # the pointwise route rejects the same fold outright
    pointwise = lambda train: robust_fit("kl")(train)
    with pytest.raises(SingularNominal):
        cross_validate(data, grid, pointwise, folds="loo")
    with warnings.catch_warnings():
        warnings.simplefilter("error", SingularFoldWarning)
        cross_validate(data, grid, robust_fit("wasserstein"), folds="loo")


def test_fold_decompositions_are_shared_and_correct():
    data = _spiked_data(6, n=12, p=5)
    labels = fold_labels(12, 3, seed=1)
    first = fold_decompositions(data, labels)
    assert fold_decompositions(data, labels) is first
    for k, d in enumerate(first):
        direct = eigendecompose(sample_covariance(data.subset(labels != k)))
        assert np.allclose(d.eigenvalues, direct.eigenvalues, rtol=1e-12)
    assert fold_decompositions(data, fold_labels(12, 4, seed=1)) is not first


def test_validation_scores():
    train = SampleSet(np.array([[1.0, 0.0], [-1.0, 0.0]]), Centering.ZERO_MEAN)
    val = SampleSet(np.array([[2.0, 0.0], [0.0, 2.0]]), Centering.ZERO_MEAN)
    # validation second moment is 2 I
    assert validation_score("frobenius-holdout", np.eye(2), train, val) == pytest.approx(2.0)
    assert validation_score("quadratic", np.eye(2), train, val) == pytest.approx(2.0 - 8.0)
    # equal weights: returns are 1 and 1
    assert validation_score("portfolio-variance", np.eye(2), train, val) == pytest.approx(1.0)
    assert validation_score("portfolio-variance", np.zeros((2, 2)), train, val) == math.inf
    with pytest.raises(ConfigError):
        validation_score("likelihood", np.eye(2), train, val)


def test_portfolio_cv_picks_interior_radius_on_spiked_market():
    kinds = ("kl", "wasserstein", "fisher-rao")
    interior = {k: 0 for k in kinds}
    for seed in range(10):
        data = _spiked_data(seed)
        for k in kinds:
            grid = default_radius_grid(k)
            best, _ = cross_validate(data, grid, robust_fit(k), folds=10, seed=seed)
            interior[k] += grid[0] < best < grid[-1]
    assert all(v >= 7 for v in interior.values()), interior


def test_linear_fit_grid():
    data = _spiked_data(0, n=30, p=5)
    best, scores = cross_validate(data, log_grid(1e-5, 1.0, 8), linear_fit, folds=5)
    assert scores.shape == (8,) and 1e-5 <= best <= 1.0


# ----------------------------------------------------------------- configs


def test_schedule_from_config():
    assert schedule_from_config({"policy": "fixed", "epsilon": 0.2}) == Fixed(0.2)
    assert schedule_from_config({"policy": "root_n", "c": 5}) == RootN(5.0)
    fs = schedule_from_config({"policy": "finite_sample", "c0": 2, "eta": 0.1})
    assert fs == FiniteSample(2.0, None, None, 0.1)
    ts = schedule_from_config({"policy": "ternary_search", "lo": 0.01, "hi": 10})
    assert ts.iters == 60
    cv = schedule_from_config({"policy": "cross_validate", "grid": {"lo": 0.1, "hi": 1, "num": 3}, "folds": "loo"})
    assert cv.grid == pytest.approx((0.1, math.sqrt(0.1), 1.0)) and cv.folds == "loo"
    cv = schedule_from_config({"policy": "cross_validate"}, ALL_KINDS[1])
    assert len(cv.grid) == 50 and cv.grid[-1] == pytest.approx(1e8)
    assert describe_schedule(cv)["policy"] == "cross_validate"


@pytest.mark.parametrize(
    "cfg, exc",
    [
        ({"c": 5}, ConfigError),
        ({"policy": "magic"}, ConfigError),
        ({"policy": "fixed"}, ConfigError),
        ({"policy": "fixed", "epsilon": -1}, RadiusNonPositive),
        ({"policy": "fixed", "epsilon": 1, "c": 2}, ConfigError),
        ({"policy": "root_n", "c": 0}, RadiusNonPositive),
        ({"policy": "finite_sample", "eta": 2}, BadConfidence),
        ({"policy": "ternary_search", "lo": 2, "hi": 1}, ConfigError),
        ({"policy": "cross_validate", "folds": 1}, ConfigError),
        ({"policy": "cross_validate", "score": "nll"}, ConfigError),
        ({"policy": "cross_validate", "grid": []}, EmptyGrid),
        ({"policy": "root_n", "c": "abc"}, ConfigError),
    ],
)
def test_schedule_config_errors(cfg, exc):
    with pytest.raises(exc):
        schedule_from_config(cfg)


def test_cross_validate_schedule_resolves_on_grid():
    data = _spiked_data(0, n=24, p=4)
    sched = CrossValidate((0.01, 0.1, 1.0), folds=4)
    assert sched.resolve(data, ALL_KINDS[0]) in (0.01, 0.1, 1.0)
