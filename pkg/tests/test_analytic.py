import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hcpkit.analytic import (c0_estimate, composition_residual, epoch_interval_law, f_coefficients,
                             leftmost_laplace, log_sum_h, m_measure, r_coefficients,
                             recursion_step_laplace, series_coefficients, unscaled)
from hcpkit.measures import GridMeasure, delta, laplace_of_grid
from hcpkit.model import CaseTag, linear_schedule
from hcpkit.spp import IntervalLawPreset, interval_law_preset

CASES = [("I", 0.0), ("II", 0.0), ("II", 1.0), ("II", 2.5)]


def geometric(p=0.5, x_max=2048):
    return interval_law_preset(IntervalLawPreset("geometric", {"p": p}, 1.0, float(x_max)))


@pytest.mark.parametrize("case,gamma", CASES)
def test_series_reversion(case, gamma):
    r = r_coefficients(case, gamma, 20)
    assert composition_residual(case, gamma, r) < 1e-12
    f = f_coefficients(case, gamma, 4)
    assert f[0] == 0.0 and f[1] == pytest.approx(1.0)


@pytest.mark.parametrize("case,gamma", CASES)
def test_stable_and_series_routes_agree(case, gamma):
    # order 20 covers all 14 sites exactly
    mu = geometric(0.7, 14)
    co = series_coefficients(case, gamma, 20)
    a = m_measure(mu, co, method="stable")
    b = m_measure(mu, co, method="series")
    assert np.allclose(a.mass, b.mass, atol=1e-10)
    la = epoch_interval_law(a, 3.0, co, method="stable")
    lb = epoch_interval_law(a, 3.0, co, method="series")
    assert np.allclose(la.mass, lb.mass, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(0.0, 1.0)),
       st.sampled_from(CASES))
def test_first_epoch_is_the_initial_law(w, case):
    if w.sum() <= 0:
        w = np.ones_like(w)
    mu = GridMeasure(1.0, 1.0, w / w.sum())
    co = series_coefficients(*case, 2)
    back = epoch_interval_law(m_measure(mu, co, 60.0), 1.0, co)
    assert np.allclose(back.mass[:mu.mass.shape[0]], mu.mass, atol=1e-11)
    assert np.all(np.abs(back.mass[mu.mass.shape[0]:]) < 1e-11)


@pytest.mark.parametrize("case,gamma", CASES)
def test_epoch_laws_are_probabilities_on_their_range(case, gamma):
    co = series_coefficients(case, gamma, 2)
    m = m_measure(geometric(), co)
    for d in (2.0, 5.0, 16.0):
        law = epoch_interval_law(m, d, co)
        assert law.offset == 1.0 and law.h == pytest.approx(1.0 / d)
        assert law.mass.min() >= 0
        assert law.total() + law.tail_mass == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("case,gamma", CASES)
def test_one_step_recursion(case, gamma):
    co = series_coefficients(case, gamma, 2)
    m = m_measure(geometric(0.4, 3000), co)
    s = np.array([0.02, 0.1, 0.7, 2.0])
    for d, d_next in ((2.0, 3.0), (3.0, 5.0)):
        g = laplace_of_grid(unscaled(epoch_interval_law(m, d, co), d), s)
        g_next = laplace_of_grid(unscaled(epoch_interval_law(m, d_next, co), d_next), s)
        sel = (m.sites >= d) & (m.sites < d_next)
        h = np.exp(-np.multiply.outer(s, m.sites[sel])) @ m.mass[sel]
        assert np.allclose(recursion_step_laplace(g, h, case, gamma), g_next, atol=1e-12)


def test_recursion_domain_checks():
    with pytest.raises(ValueError):
        recursion_step_laplace(np.array([1.0]), np.array([0.0]), "I")
    with pytest.raises(ValueError):
        recursion_step_laplace(np.array([0.5]), np.array([5.0]), "I")
    with pytest.raises(ValueError):
        series_coefficients("general")


def test_degenerate_and_truncation_errors():
    co = series_coefficients("I", 0.0, 2)
    m = m_measure(delta(3.0), co, 10.0)
    with pytest.raises(ValueError, match="lattice"):
        epoch_interval_law(m, 2.5, co)
    with pytest.raises(ValueError):
        epoch_interval_law(m, 2.0, co, z_max=100.0)


def test_leftmost_law_at_first_epoch_and_restrictions():
    mu = geometric()
    s = np.array([0.1, 1.0])
    sch = linear_schedule(8)
    m2 = m_measure(mu, series_coefficients("II", 0.0, 2))
    assert np.all(leftmost_laplace(1, CaseTag("II", 0.0), mu, m2, None, s, sch) == 1.0)
    v = leftmost_laplace(4, CaseTag("II", 0.0), mu, m2, None, s, sch)
    assert np.all((v > 0) & (v < 1))
    with pytest.raises(ValueError):
        leftmost_laplace(3, CaseTag("II", 1.0), mu, m2, None, s, sch)
    with pytest.raises(ValueError):
        leftmost_laplace(3, CaseTag("I", None), mu, m2, None, s, sch)


def test_c0_estimates():
    assert c0_estimate(delta(1.0)).value == pytest.approx(1.0, abs=1e-6)
    assert c0_estimate(geometric()).value == pytest.approx(1.0, abs=0.01)
    zeta = interval_law_preset(IntervalLawPreset("zeta_tail", {"alpha": 0.3}, 1.0, 1e6))
    est = c0_estimate(zeta)
    assert est.value == pytest.approx(0.3, abs=0.02) and est.converged


def test_log_sum_h_is_a_lattice_sum():
    m = GridMeasure(1.0, 1.0, np.array([0.5, 0.25, 0.125]))
    assert log_sum_h(m, 3.0) == pytest.approx(0.75)
    assert log_sum_h(m, 1.0) == 0.0
    with pytest.raises(ValueError):
        log_sum_h(m, 10.0)
