import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hcpkit.measures import (GridMeasure, delta, from_series, laplace_of_grid, series_compose,
                             series_div, series_exp, series_log, series_mul)
from oracles import naive_series_log

small = arrays(np.float64, st.integers(2, 24), elements=st.floats(0.0, 1.0))


@settings(max_examples=30, deadline=None)
@given(small, small)
def test_series_mul_matches_convolution(a, b):
    n = min(a.shape[0], b.shape[0])
    assert np.allclose(series_mul(a, b, n), np.convolve(a, b)[:n], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(small)
def test_exp_log_inverse(a):
    a = a.copy()
    a[0] = 0.0
    e = series_exp(a, 1.0)
    assert e[0] == 1.0
    assert np.allclose(series_log(e), a, atol=1e-9)


def test_log_matches_naive_recurrence():
    p = np.zeros(40)
    p[0] = 1.0
    p[1:] = -0.5 ** np.arange(1, 40)
    assert np.allclose(series_log(p), naive_series_log(p, 40), atol=1e-13)
    # -log(1 - x) = sum x^k / k
    q = np.zeros(10)
    q[0], q[1] = 1.0, -1.0
    assert np.allclose(series_log(q)[1:], -1.0 / np.arange(1, 10))


def test_div_and_compose():
    num = np.array([1.0, 2.0, 3.0, 0.0, 0.0])
    den = np.array([1.0, -1.0, 0.0, 0.0, 0.0])
    q = series_div(num, den)
    assert np.allclose(np.convolve(q, den)[:5], num)
    # 1 + a + a^2/2 + ... composed with a = x approximates exp(x)
    coef = np.array([0.0, 1.0, 0.5, 1 / 6, 1 / 24])
    a = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
    assert np.allclose(series_compose(coef, a, 5), coef)


def test_laplace_of_geometric_closed_form():
    p = 0.3
    k = np.arange(1, 400)
    mu = GridMeasure(1.0, 1.0, p * (1 - p) ** (k - 1), (1 - p) ** 399)
    s = np.array([0.01, 0.5, 3.0])
    closed = p * np.exp(-s) / (1 - (1 - p) * np.exp(-s))
    val, bound = laplace_of_grid(mu, s, with_bound=True)
    assert np.all(np.abs(val - closed) <= bound + 1e-15)
    assert laplace_of_grid(delta(2.0, 0.5), 1.0) == pytest.approx(np.exp(-2.0))


def test_grid_measure_basics():
    m = from_series(np.array([0.0, 0.25, 0.75]), 0.5, notes={"family": "x"})
    assert np.array_equal(m.sites, [0.5, 1.0])
    assert m.is_probability() and m.mean() == pytest.approx(0.875)
    assert np.array_equal(m.series(), [0.0, 0.25, 0.75])
    m2 = pickle.loads(pickle.dumps(m))
    assert np.array_equal(m2.mass, m.mass) and m2.notes["family"] == "x"
    with pytest.raises(ValueError):
        GridMeasure(0.0, 1.0, np.ones(2))
    with pytest.raises(ValueError):
        laplace_of_grid(m, -1.0)
