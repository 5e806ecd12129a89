"""Exact epoch laws for lattice interval laws in the two solvable rate families.

With F/R the case-dependent transform pair, the m-measure is the measure
whose Laplace transform is F(g).  The interval law at the start of epoch n is
R applied to m restricted to [d_n, inf), then rescaled by d_n.  Everything is
done on series indexed by x/h, so truncation at x_max is exact below x_max.

Two routes are provided: ``"stable"`` (exp/log/division recursions, all
intermediate series nonnegative or well conditioned) and ``"series"`` (the
literal sum of r_k times convolution powers, which loses precision fast in
case II because R has a finite radius of convergence there).  The second is
kept for cross-checks at small sizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .limits import f_closed, r_closed
from .measures import (GridMeasure, from_series, laplace_of_grid, series_compose,
                       series_div, series_exp, series_log)
from .model import CaseTag, EpochSchedule

NEG_TOL = 1e-10


@dataclass(frozen=True)
class SeriesCoefficients:
    case: str
    gamma: float
    f: np.ndarray
    r: np.ndarray

    @property
    def K(self) -> int:
        return self.f.shape[0] - 1

    @property
    def c(self) -> float:
        return 1.0 if self.case == "I" else (self.gamma + 2.0) / (self.gamma + 1.0)


def _check_case(case, gamma):
    if isinstance(case, CaseTag):
        case, gamma = case.kind, (case.gamma if case.kind == "II" else 0.0)
    if case not in ("I", "II"):
        raise ValueError(f"no transform pair for case {case!r}")
    gamma = 0.0 if gamma is None else float(gamma)
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return case, gamma


def f_coefficients(case, gamma: float = 0.0, K: int = 16) -> np.ndarray:
    """Taylor coefficients of F, index 0 unused (zero)."""
    case, gamma = _check_case(case, gamma)
    if K < 1:
        raise ValueError("K must be at least 1")
    k = np.arange(1, K + 1, dtype=float)
    f = np.zeros(K + 1)
    if case == "I":
        f[1:] = 1.0 / k
    else:
        sign = np.where(k % 2 == 1, 1.0, -1.0)
        f[1:] = (gamma + 1.0) / (gamma + 2.0) / k * (1.0 + sign * (gamma + 1.0) ** (-k))
    return f


def r_coefficients(case, gamma: float = 0.0, K: int = 16) -> np.ndarray:
    """Taylor coefficients of R = F^{-1}.

    Case I is closed form; case II reverts the F series by fixed-point
    iteration R <- x - sum_{k>=2} f_k R^k, which gains one order per pass.
    """
    case, gamma = _check_case(case, gamma)
    n = K + 1
    if case == "I":
        r = np.zeros(n)
        fact = 1.0
        for k in range(1, n):
            fact *= k
            r[k] = (-1.0) ** (k + 1) / fact
    else:
        f = f_coefficients(case, gamma, K)
        tail = f.copy()
        tail[1] = 0.0
        x = np.zeros(n)
        x[1] = 1.0
        r = x.copy()
        for _ in range(K):
            r = x - series_compose(tail, r, n)
    resid = composition_residual(case, gamma, r)
    if resid > 1e-10:
        raise ArithmeticError(f"series reversion residual {resid:.3g} exceeds 1e-10 at order {K}")
    return r


def composition_residual(case, gamma, r) -> float:
    """max |coef of F(R(x)) - x| up to the order of ``r``."""
    n = r.shape[0]
    f = f_coefficients(case, gamma, n - 1)
    comp = series_compose(f, np.asarray(r, dtype=float), n)
    comp[1] -= 1.0
    return float(np.max(np.abs(comp)))


def series_coefficients(case, gamma: float = 0.0, K: int = 16) -> SeriesCoefficients:
    case, gamma = _check_case(case, gamma)
    return SeriesCoefficients(case, gamma, f_coefficients(case, gamma, K), r_coefficients(case, gamma, K))


def _lattice_index(x: float, h: float, what: str) -> int:
    k = x / h
    if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
        raise ValueError(f"{what}={x!r} is not a multiple of the lattice step {h!r}")
    return int(round(k))


def m_measure(mu: GridMeasure, coeffs: SeriesCoefficients, x_max: float | None = None,
              method: str = "stable") -> GridMeasure:
    """The measure with Laplace transform F(g), exact on sites up to ``x_max``."""
    h = mu.h
    if mu.offset < h - 1e-12:
        raise ValueError("mu must not charge 0")
    x_max = mu.x_max if x_max is None else float(x_max)
    if x_max < mu.offset:
        raise ValueError(f"x_max={x_max!r} is below the first lattice site {mu.offset!r}")
    n = _lattice_index(x_max, h, "x_max") + 1
    g = np.zeros(n)
    src = mu.series()[:n]
    g[:src.shape[0]] = src
    g[0] = 0.0
    if method == "series":
        m = series_compose(coeffs.f, g, n)
    elif method == "stable":
        p = -g
        p[0] = 1.0
        if coeffs.case == "I":
            m = -series_log(p)
        else:
            q = g / (coeffs.gamma + 1.0)
            q[0] = 1.0
            m = (series_log(q) - series_log(p)) / coeffs.c
    else:
        raise ValueError(f"unknown method {method!r}")
    low = float(m[1:].min(initial=0.0))
    if low < -NEG_TOL * max(1.0, float(np.abs(m).max())):
        raise ArithmeticError(f"m-measure has negative mass {low:.3g}; rates outside the solvable family?")
    m = np.maximum(m, 0.0)
    return from_series(m, h, 1, math.inf, {"kind": "m", "case": coeffs.case, "gamma": coeffs.gamma})


def _restricted(m: GridMeasure, d_n: float, z_max: float | None):
    h = m.h
    if m.offset != h:
        raise ValueError("m must start at the first lattice site")
    D = _lattice_index(d_n, h, "d_n")
    top = m.mass.shape[0]  # series length = sites 0..top
    if z_max is None:
        kmax = top
    else:
        kmax = int(math.floor(z_max * d_n / h + 1e-9))
        if kmax > top:
            raise ValueError(f"d_n*z_max={d_n * z_max!r} exceeds x_max={m.x_max!r} of m")
    mn = np.zeros(kmax + 1)
    if D <= kmax:
        mn[D:] = m.mass[D - 1:kmax]
    return D, mn


def epoch_interval_law(m: GridMeasure, d_n: float, coeffs: SeriesCoefficients,
                       z_max: float | None = None, method: str = "stable") -> GridMeasure:
    """Law of the rescaled interval X/d_n at the start of the epoch with d_min = d_n."""
    D, mn = _restricted(m, d_n, z_max)
    n = mn.shape[0]
    h_z = m.h / d_n
    if D >= n or not np.any(mn):
        return GridMeasure(h_z, 1.0, np.zeros(max(n - D, 0)), 1.0,
                           {"degenerate": True, "clamp": 0.0})
    if method == "series":
        p = series_compose(coeffs.r, mn, n)
    elif method == "stable":
        if coeffs.case == "I":
            # 1 - exp(-M) = 1 - 1/exp(M); exp(M) has nonnegative coefficients
            e = series_exp(mn, 1.0)
            one = np.zeros(n)
            one[0] = 1.0
            p = -series_div(one, e)
        else:
            # (E - 1)/(E + beta) with E = exp(c M)
            e = series_exp(mn, coeffs.c)
            num = e.copy()
            num[0] -= 1.0
            den = e.copy()
            den[0] += 1.0 / (coeffs.gamma + 1.0)
            p = series_div(num, den)
    else:
        raise ValueError(f"unknown method {method!r}")
    p = p[D:]
    low = float(p.min(initial=0.0))
    if low < -NEG_TOL:
        raise ArithmeticError(f"epoch law has negative mass {low:.3g}: truncation too aggressive "
                              "or rates outside the solvable family")
    clamp = -low if low < 0 else 0.0
    p = np.maximum(p, 0.0)
    tail = max(0.0, 1.0 - math.fsum(p))
    return GridMeasure(h_z, 1.0, p, tail, {"degenerate": False, "clamp": clamp, "d_n": float(d_n)})


def unscaled(law: GridMeasure, d_n: float) -> GridMeasure:
    """Undo the 1/d_n rescaling of an epoch law."""
    return GridMeasure(law.h * d_n, law.offset * d_n, law.mass, law.tail_mass, law.notes)


def recursion_step_laplace(g_n, h_n, case, gamma: float = 0.0):
    """R(F(g_n) - h_n) pointwise: the next epoch's transform at the rescaled argument."""
    case, gamma = _check_case(case, gamma)
    g = np.asarray(g_n, dtype=float)
    h = np.asarray(h_n, dtype=float)
    if np.any(g < 0) or np.any(g >= 1):
        raise ValueError("g_n must lie in [0, 1)")
    y = f_closed(case, gamma, g) - h
    if np.any(y < -1e-12) or np.any(h < -1e-12):
        raise ValueError("h_n outside [0, F(g_n)]: argument outside the domain of R")
    return r_closed(case, gamma, np.maximum(y, 0.0))


def log_sum_h(m: GridMeasure, z: float) -> float:
    """m([first site, z)) as an exact lattice sum."""
    sites = m.sites
    if z > m.x_max + m.h:
        raise ValueError(f"z={z!r} beyond the truncation of m")
    return float(math.fsum(m.mass[sites < z - 1e-9 * m.h]))


def leftmost_laplace(n: int, case_leftmost: CaseTag, mu: GridMeasure, m: GridMeasure,
                     ell_1, s_grid, schedule: EpochSchedule) -> np.ndarray:
    """Laplace transform of the rescaled first point at the start of epoch n.

    ``m`` must be the m-measure of ``mu`` for the interval case.  ``ell_1`` is
    the transform of the first point at epoch 1 (None for a start at 0).
    Case II requires pure annihilation (gamma = 0); case I requires
    lambda_r = gamma * lambda_l with gamma recorded in the tag.
    """
    s = np.asarray(s_grid, dtype=float)
    if case_leftmost.kind == "general":
        raise ValueError("no leftmost formula for general rates")
    d_n = schedule[n]
    base = np.ones_like(s) if ell_1 is None else np.asarray(ell_1(s / d_n), dtype=float)
    if n == 1:
        return base
    if case_leftmost.kind == "II":
        if case_leftmost.gamma != 0.0:
            raise ValueError("leftmost law in case II is available for pure annihilation only")
        if m.notes.get("case") not in (None, "II") or m.notes.get("gamma", 0.0) != 0.0:
            raise ValueError("m must be the case II, gamma = 0 m-measure")
        coeffs = series_coefficients("II", 0.0, 1)
        law = epoch_interval_law(m, d_n, coeffs)
        g_n = laplace_of_grid(law, s)
        g_1 = laplace_of_grid(mu, s / d_n)
        ratio = (1.0 - g_n * g_n) / (1.0 - g_1 * g_1)
        return base * np.sqrt(ratio) * math.exp(-log_sum_h(m, d_n))
    if case_leftmost.gamma is None:
        raise ValueError("leftmost law in case I needs lambda_r = gamma * lambda_l")
    x = m.sites
    sel = x < d_n - 1e-9 * m.h
    ex = np.expm1(-np.multiply.outer(s / d_n, x[sel])) @ m.mass[sel]
    return base * np.exp(ex / (1.0 + case_leftmost.gamma))


@dataclass(frozen=True)
class C0Estimate:
    value: float
    converged: bool
    residual: float
    s: np.ndarray
    raw: np.ndarray


def c0_estimate(mu: GridMeasure, n_points: int = 8, min_sx: float = 40.0, tol: float = 0.05) -> C0Estimate:
    """Limit of -s g'(s)/(1 - g(s)) as s -> 0 from dyadic s, extrapolated.

    Mass beyond the truncation is treated as sitting at infinity, so only s
    with s*x_max >= ``min_sx`` are used when the tail is nonzero.  The sequence is extrapolated with
    second-order Richardson steps; ``converged`` is False when successive
    differences fail to shrink (oscillation), in which case the limit may not
    exist.
    """
    x = mu.sites
    p = mu.mass
    if mu.tail_mass > 0:
        j_max = int(math.floor(math.log2(mu.x_max / min_sx)))
    else:
        # nothing at infinity: any small s is usable, start well below 1/mean
        j_max = int(math.ceil(math.log2(64.0 * max(mu.mean(), mu.h)))) + n_points - 1
    js = np.arange(j_max - n_points + 1, j_max + 1)
    s = 2.0 ** (-js.astype(float))
    raw = np.empty(s.shape[0])
    for i, si in enumerate(s):
        e = np.exp(-si * x)
        num = si * np.dot(x * e, p)
        den = np.dot(-np.expm1(-si * x), p) + mu.tail_mass
        raw[i] = num / den
    # Richardson with dyadic steps, error ~ a s + b s^2
    r1 = 2.0 * raw[1:] - raw[:-1]
    r2 = (4.0 * r1[1:] - r1[:-1]) / 3.0
    diffs = np.abs(np.diff(r2))
    converged = bool(diffs.size < 2 or diffs[-1] <= max(diffs[0], 1e-12) + 1e-12) and bool(
        np.abs(r2[-1] - r2[-2]) <= tol)
    est = float(np.clip(r2[-1], 0.0, 1.0))
    return C0Estimate(est, converged, float(abs(r2[-1] - r2[-2])), s, raw)
