import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drcov.baselines import Centering, SampleSet, linear_shrinkage, linear_shrinkage_spectrum, sample_covariance
from drcov.errors import BadAlpha, DimensionMismatch, InsufficientData, NonFinite
from drcov.spectral import condition_number, eigendecompose

from conftest import random_orthogonal, random_pd


def test_zero_mean_hand_sum():
    data = SampleSet([[1.0, 0.0], [-1.0, 0.0]], Centering.ZERO_MEAN)
    assert np.array_equal(sample_covariance(data), np.diag([1.0, 0.0]))


def test_identical_samples_give_zero_matrix():
    data = SampleSet(np.tile([1.0, 2.0, 3.0], (5, 1)))
    assert np.array_equal(sample_covariance(data), np.zeros((3, 3)))


def test_divisors():
    x = np.array([[1.0], [2.0], [6.0]])
    assert sample_covariance(SampleSet(x))[0, 0] == pytest.approx(np.var(x, ddof=1))
    assert sample_covariance(SampleSet(x, "zero-mean"))[0, 0] == pytest.approx(np.mean(x**2))


def test_large_sample_is_close_to_truth():
    x = np.random.default_rng(0).standard_normal((10_000, 3))
    assert np.linalg.norm(sample_covariance(SampleSet(x)) - np.eye(3)) <= 0.2


def test_rotation_equivariance(rng):
    x = rng.standard_normal((30, 4))
    r = random_orthogonal(rng, 4)
    for c in Centering:
        a = sample_covariance(SampleSet(x @ r.T, c))
        b = r @ sample_covariance(SampleSet(x, c)) @ r.T
        assert np.allclose(a, b, atol=1e-10)


def test_sample_set_validation():
    assert SampleSet([1.0, 2.0, 3.0]).p == 1
    with pytest.raises(NonFinite):
        SampleSet([[np.nan, 1.0]])
    with pytest.raises(DimensionMismatch):
        SampleSet(np.zeros((0, 3)))
    with pytest.raises(InsufficientData):
        sample_covariance(SampleSet([[1.0, 2.0]]))
    assert sample_covariance(SampleSet([[1.0, 2.0]], Centering.ZERO_MEAN)).shape == (2, 2)
    with pytest.raises(ValueError):
        SampleSet([[1.0]], "demeaned")


def test_linear_shrinkage_examples():
    s = np.diag([1.0, 3.0])
    assert np.array_equal(linear_shrinkage(s, 0.0), s)
    assert np.array_equal(linear_shrinkage(s, 1.0), 2 * np.eye(2))
    half = linear_shrinkage(s, 0.5)
    assert np.allclose(half, np.diag([1.5, 2.5]))
    assert condition_number(eigendecompose(half)) == pytest.approx(5 / 3)
    with pytest.raises(BadAlpha):
        linear_shrinkage(s, 1.5)
    with pytest.raises(BadAlpha):
        linear_shrinkage_spectrum(eigendecompose(s), -0.1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_trace_preserved(seed, alpha):
    s = random_pd(np.random.default_rng(seed), 5, spread=4)
    assert np.trace(linear_shrinkage(s, alpha)) == pytest.approx(np.trace(s), rel=1e-14)


def test_condition_number_non_increasing_in_alpha(rng):
    d = eigendecompose(random_pd(rng, 6, spread=3))
    kappas = [condition_number(linear_shrinkage_spectrum(d, a)) for a in np.linspace(0, 1, 40)]
    assert np.all(np.diff(kappas) <= 1e-12)
    assert kappas[-1] == pytest.approx(1.0)


def test_spectrum_version_matches_matrix_version(rng):
    s = random_pd(rng, 5)
    d = linear_shrinkage_spectrum(eigendecompose(s), 0.3)
    assert np.allclose((d.eigenvectors * d.eigenvalues) @ d.eigenvectors.T, linear_shrinkage(s, 0.3), atol=1e-12)
