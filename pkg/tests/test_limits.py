import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import exp1

from hcpkit.limits import (EULER_GAMMA, LimitLawParams, ein, exp_integral_E1, f_closed,
                           limit_interval_laplace, limit_leftmost_laplace_case_i,
                           limit_leftmost_laplace_case_ii, r_closed)


def test_e1_against_scipy():
    s = np.concatenate([np.geomspace(1e-8, 1.0, 200), np.geomspace(1.0, 700.0, 200)])
    rel = np.abs(exp_integral_E1(s) / exp1(s) - 1.0)
    assert rel.max() < 1e-11
    assert exp_integral_E1(1.0) == pytest.approx(0.21938393439552029, rel=1e-14)
    with pytest.raises(ValueError):
        exp_integral_E1(0.0)


def test_ein_against_quadrature():
    for s in (1e-3, 0.3, 1.0, 2.5, 40.0):
        q, _ = integrate.quad(lambda y: -math.expm1(-s * y) / y, 0.0, 1.0, epsabs=1e-14)
        assert ein(s) == pytest.approx(q, rel=1e-11)
    assert ein(0.0) == 0.0
    assert EULER_GAMMA == pytest.approx(0.5772156649015329, rel=1e-15)


@pytest.mark.parametrize("case,gamma", [("I", 0.0), ("II", 0.0), ("II", 1.0), ("II", 3.5)])
def test_transform_pair_inverse(case, gamma):
    x = np.linspace(0.0, 0.999, 50)
    assert np.allclose(r_closed(case, gamma, f_closed(case, gamma, x)), x, atol=1e-12)
    y = np.array([0.0, 1e-3, 1.0, 50.0, 800.0])
    out = r_closed(case, gamma, y)
    assert np.all(np.isfinite(out)) and np.all((out >= 0) & (out < 1 + 1e-15))


def test_interval_limits_closed_forms():
    s = np.geomspace(0.05, 10, 20)
    e = exp1(s)
    assert np.allclose(limit_interval_laplace(LimitLawParams("II", 0.0, 1.0), s), np.tanh(e / 2), atol=1e-13)
    assert np.allclose(limit_interval_laplace(LimitLawParams("I", 0.0, 1.0), s), 1 - np.exp(-e), atol=1e-13)
    assert np.allclose(limit_interval_laplace(LimitLawParams("I", 0.0, 0.4), s), 1 - np.exp(-0.4 * e),
                       atol=1e-13)
    assert np.all(limit_interval_laplace(LimitLawParams("I", 0.0, 0.0), s) == 0.0)
    assert LimitLawParams("II", 1.0, 0.6).kappa == pytest.approx(0.4)
    with pytest.raises(ValueError):
        LimitLawParams("general")
    with pytest.raises(ValueError):
        LimitLawParams("I", 0.0, 1.5)


def test_leftmost_limits():
    s = np.geomspace(0.05, 10, 20)
    ref = 0.5 * np.exp(-EULER_GAMMA / 2) * np.sqrt((1 - np.tanh(exp1(s) / 2) ** 2) / s)
    assert np.allclose(limit_leftmost_laplace_case_ii(s), ref, rtol=1e-12)
    # a Laplace transform of a probability law: 1 at 0, decreasing
    v = limit_leftmost_laplace_case_ii(np.geomspace(1e-10, 1e-6, 5))
    assert np.all(np.abs(v - 1.0) < 1e-2) and np.all(np.diff(v) < 0)
    quad = np.array([integrate.quad(lambda y: -math.expm1(-x * y) / y, 0, 1)[0] for x in s])
    assert np.allclose(limit_leftmost_laplace_case_i(0.7, 1.0, s), np.exp(-0.35 * quad), rtol=1e-9)
