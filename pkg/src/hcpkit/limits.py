"""Limit laws of the rescaled interval and leftmost-point variables."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.577215664901532860606512090082  # 30 digits

_SERIES_TERMS = 40
_CF_LEVELS = 60


def _e1_series(s: float) -> float:
    # E1(s) = -gamma - ln s - sum_{n>=1} (-s)^n / (n n!)
    return -EULER_GAMMA - math.log(s) + _ein_series(s)


def _ein_series(s: float) -> float:
    """Ein(s) = sum_{n>=1} (-1)^(n+1) s^n / (n n!), fine for s <= 1."""
    term = 1.0
    acc = 0.0
    for n in range(1, _SERIES_TERMS + 1):
        term *= -s / n
        acc -= term / n
    return acc


def _e1_cf(s: float) -> float:
    # modified Lentz on the even form e^{-s} / (s+1 - 1/(s+3 - 4/(s+5 - ...)))
    tiny = 1e-300
    b = s + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _CF_LEVELS + 1):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-s)


def exp_integral_E1(s):
    """E1(s) = int_s^inf e^{-t}/t dt for s > 0 (scalar or array)."""
    arr = np.asarray(s, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("E1 is defined here only for s > 0")
    if arr.ndim == 0:
        x = float(arr)
        return _e1_series(x) if x <= 1.0 else _e1_cf(x)
    return np.array([_e1_series(x) if x <= 1.0 else _e1_cf(x) for x in arr.ravel()]).reshape(arr.shape)


def ein(s):
    """int_0^1 (1 - e^{-s y}) / y dy, equal to gamma + ln s + E1(s) for s > 0."""
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0):
        raise ValueError("Ein needs s >= 0")

    def one(x):
        if x == 0.0:
            return 0.0
        if x <= 1.0:
            return _ein_series(x)
        return EULER_GAMMA + math.log(x) + _e1_cf(x)

    if arr.ndim == 0:
        return one(float(arr))
    return np.array([one(x) for x in arr.ravel()]).reshape(arr.shape)


@dataclass(frozen=True)
class LimitLawParams:
    case: str  # 'I' or 'II'
    gamma: float = 0.0
    c0: float = 1.0

    def __post_init__(self):
        if self.case not in ("I", "II"):
            raise ValueError("limit laws exist only for case I and case II")
        if not 0.0 <= self.c0 <= 1.0:
            raise ValueError("c0 must lie in [0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    @property
    def kappa(self) -> float:
        if self.case == "I":
            return self.c0
        return (self.gamma + 1.0) / (self.gamma + 2.0) * self.c0


def r_closed(case: str, gamma: float, y):
    """Closed form of the inverse transform R (maps [0, inf) into [0, 1))."""
    y = np.asarray(y, dtype=float)
    if case == "I":
        return -np.expm1(-y)
    c = (gamma + 2.0) / (gamma + 1.0)
    beta = 1.0 / (gamma + 1.0)
    # (e^{cy} - 1)/(e^{cy} + beta), rewritten to avoid overflow
    e = np.exp(-c * y)
    return (1.0 - e) / (1.0 + beta * e)


def f_closed(case: str, gamma: float, x):
    """Closed form of F, the inverse of R, on [0, 1)."""
    x = np.asarray(x, dtype=float)
    if case == "I":
        return -np.log1p(-x)
    c = (gamma + 2.0) / (gamma + 1.0)
    return (np.log1p(x / (gamma + 1.0)) - np.log1p(-x)) / c


def limit_interval_laplace(params: LimitLawParams, s):
    """Laplace transform R(kappa E1(s)) of the limiting rescaled interval."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(~(s_arr > 0)):
        raise ValueError("need s > 0")
    if params.c0 == 0.0:
        return np.zeros_like(s_arr) if s_arr.ndim else 0.0
    out = r_closed(params.case, params.gamma, params.kappa * exp_integral_E1(s_arr))
    return float(out) if s_arr.ndim == 0 else out


def limit_leftmost_laplace_case_i(c0: float, gamma: float, s):
    """exp(-(c0/(1+gamma)) Ein(s)) for the leftmost point under lambda_a = 0."""
    out = np.exp(-(c0 / (1.0 + gamma)) * ein(s))
    return float(out) if np.ndim(out) == 0 else out


def limit_leftmost_laplace_case_ii(s):
    """(e^{-gamma/2}/2) sqrt(sech^2(E1(s)/2)/s) for the leftmost point, pure annihilation."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(~(s_arr > 0)):
        raise ValueError("need s > 0")
    # sech form: 1 - tanh^2 cancels badly once E1(s)/2 is large
    sech = 1.0 / np.cosh(exp_integral_E1(s_arr) / 2.0)
    out = 0.5 * math.exp(-EULER_GAMMA / 2.0) * sech / np.sqrt(s_arr)
    return float(out) if s_arr.ndim == 0 else out
