import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kanfriction.errors import InvalidArgument
from kanfriction.metrics import FitReport, pearson_correlation, r_squared, relative_error, residual_stats

import oracles

vectors = st.lists(st.floats(-100, 100), min_size=3, max_size=40)


def test_r_squared_examples():
    assert r_squared([1, 2, 3], [1, 2, 3]) == 1
    assert r_squared([1, 2, 3], [2, 2, 2]) == 0
    assert r_squared([1, 2, 3], [1, 2, 4]) == pytest.approx(0.5)
    assert r_squared([5, 5, 5], [5, 5, 5]) == 1
    assert r_squared([5, 5, 5], [4, 5, 6]) == 0
    with pytest.raises(InvalidArgument):
        r_squared([1, 2], [1, 2, 3])
    with pytest.raises(InvalidArgument):
        r_squared([], [])


@settings(max_examples=50, deadline=None)
@given(vectors, st.integers(0, 10**6))
def test_r_squared_permutation_invariant(truth, seed):
    truth = np.array(truth)
    pred = truth + np.random.default_rng(seed).normal(0, 1, truth.size)
    perm = np.random.default_rng(seed + 1).permutation(truth.size)
    a, b = r_squared(truth, pred), r_squared(truth[perm], pred[perm])
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)
    assert a <= 1


def test_relative_error():
    assert relative_error(22, 22) == 0
    assert relative_error(22.0000022, 22) == pytest.approx(1e-7, rel=1e-6)
    assert relative_error(0, 22) == 1
    with pytest.raises(InvalidArgument):
        relative_error(1, 0)


def test_pearson_examples():
    assert pearson_correlation([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-5)
    assert pearson_correlation([1, 2, 3], [1, 2, 4]) == pytest.approx(oracles.pearson([1, 2, 3], [1, 2, 4]))
    a = np.array([0.3, -1.0, 2.0, 5.5])
    assert pearson_correlation(a, a) == pytest.approx(1)
    assert pearson_correlation(a, -a) == pytest.approx(-1)
    with pytest.raises(InvalidArgument, match="second"):
        pearson_correlation(a, np.ones(4))
    with pytest.raises(InvalidArgument):
        pearson_correlation([1.0], [1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_affine_invariance(seed, scale, shift):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=30), rng.normal(size=30)
    r = pearson_correlation(a, b)
    assert abs(r) <= 1
    assert pearson_correlation(scale * a + shift, b) == pytest.approx(r, abs=1e-9)
    assert pearson_correlation(-scale * a, b) == pytest.approx(-r, abs=1e-9)
    assert r == pytest.approx(oracles.pearson(list(a), list(b)), abs=1e-12)


def test_residual_stats():
    s = residual_stats([0, 0, 0, 0], [1, -1, 1, -1])
    assert s == {"mean": 0.0, "std": 1.0, "rmse": 1.0, "max_abs": 1.0}


def test_fit_report():
    with pytest.raises(InvalidArgument):
        FitReport(1.5)
    assert FitReport(0.9, relative_errors={"k1": 1e-6}).to_json()["relative_errors"] == {"k1": 1e-6}
