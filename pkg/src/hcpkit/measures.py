"""Measures on a lattice {offset + k h} and exact power-series arithmetic.

Series arrays are indexed by site number x/h starting at 0, so a convolution
of two measures is a product of series.  All kernels are direct O(N^2)
summation with a fixed loop order, which keeps results bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType

import numba
import numpy as np


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Masses at sites ``offset + k*h``, k = 0..len(mass)-1.

    ``tail_mass`` is the mass beyond the last site (``inf`` for measures of
    unbounded total mass such as the m-measure).  ``notes`` carries
    diagnostics and family metadata.
    """

    h: float
    offset: float
    mass: np.ndarray
    tail_mass: float = 0.0
    notes: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        m = np.ascontiguousarray(self.mass, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)
        if not isinstance(self.notes, MappingProxyType):
            object.__setattr__(self, "notes", MappingProxyType(dict(self.notes)))
        if not self.h > 0:
            raise ValueError("lattice step must be positive")
        if m.ndim != 1:
            raise ValueError("mass must be a vector")
        if not np.all(np.isfinite(m)):
            raise ValueError("masses must be finite")

    def __reduce__(self):
        # the read-only notes view does not pickle; rebuild from a plain dict
        return (GridMeasure, (self.h, self.offset, np.array(self.mass), self.tail_mass, dict(self.notes)))

    @property
    def sites(self) -> np.ndarray:
        return self.offset + self.h * np.arange(self.mass.shape[0])

    @property
    def x_max(self) -> float:
        return self.offset + self.h * (self.mass.shape[0] - 1)

    def total(self) -> float:
        return float(math.fsum(self.mass))

    def is_probability(self, tol: float = 1e-12) -> bool:
        return bool(self.mass.min(initial=0.0) >= 0 and math.isfinite(self.tail_mass)
                    and abs(self.total() + self.tail_mass - 1.0) <= tol)

    def mean(self) -> float:
        return float(np.dot(self.sites, self.mass))

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.mass)

    def with_notes(self, **kw) -> "GridMeasure":
        notes = dict(self.notes)
        notes.update(kw)
        return GridMeasure(self.h, self.offset, self.mass, self.tail_mass, notes)

    def series(self) -> np.ndarray:
        """Masses as a series indexed by x/h (zeros below the offset)."""
        k0 = self.offset / self.h
        if abs(k0 - round(k0)) > 1e-9:
            raise ValueError("offset is not a lattice multiple of h")
        k0 = int(round(k0))
        out = np.zeros(k0 + self.mass.shape[0])
        out[k0:] = self.mass
        return out


def from_series(series: np.ndarray, h: float, first: int = 1, tail_mass: float = 0.0,
                notes=None) -> GridMeasure:
    """Inverse of :meth:`GridMeasure.series`, keeping indices >= ``first``."""
    return GridMeasure(h, first * h, np.array(series[first:], dtype=float), tail_mass,
                       notes or {})


def delta(x: float, h: float = 1.0) -> GridMeasure:
    k = x / h
    if abs(k - round(k)) > 1e-12 or k < 1:
        raise ValueError(f"{x} is not a positive lattice site for h={h}")
    m = np.zeros(int(round(k)))
    m[-1] = 1.0
    return GridMeasure(h, h, m)


def laplace_of_grid(measure: GridMeasure, s, with_bound: bool = False):
    """Sum of e^{-s x} mass(x); optionally also the truncation error bound.

    The bound is tail_mass * e^{-s x_max}, the most the mass beyond the last
    site can contribute.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("s must be nonnegative")
    x = measure.sites
    vals = np.exp(-np.multiply.outer(s_arr, x)) @ measure.mass
    if s_arr.ndim == 0:
        vals = float(vals)
    if not with_bound:
        return vals
    bound = measure.tail_mass * np.exp(-s_arr * measure.x_max) if measure.tail_mass else 0.0 * s_arr
    return vals, bound


# --------------------------------------------------------------------------
# series kernels (index 0 is the constant term)
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def series_mul(a, b, n):
    out = np.zeros(n)
    na = min(a.shape[0], n)
    for i in range(na):
        ai = a[i]
        if ai == 0.0:
            continue
        for j in range(min(b.shape[0], n - i)):
            out[i + j] += ai * b[j]
    return out


@numba.njit(cache=True)
def series_exp(a, c):
    """exp(c * a) for a series with a[0] == 0."""
    n = a.shape[0]
    e = np.zeros(n)
    e[0] = 1.0
    ja = np.empty(n)
    for j in range(n):
        ja[j] = j * a[j]
    for x in range(1, n):
        acc = 0.0
        for j in range(1, x + 1):
            acc += ja[j] * e[x - j]
        e[x] = c * acc / x
    return e


@numba.njit(cache=True)
def series_log(p):
    """log(p) for a series with p[0] == 1."""
    n = p.shape[0]
    out = np.zeros(n)
    for x in range(1, n):
        acc = x * p[x]
        for j in range(1, x):
            acc -= j * out[j] * p[x - j]
        out[x] = acc / x
    return out


@numba.njit(cache=True)
def series_div(num, den):
    """num / den for series with den[0] != 0."""
    n = num.shape[0]
    q = np.zeros(n)
    for x in range(n):
        acc = num[x]
        for j in range(1, min(x, den.shape[0] - 1) + 1):
            acc -= den[j] * q[x - j]
        q[x] = acc / den[0]
    return q


@numba.njit(cache=True)
def series_compose(coef, a, n):
    """sum_k coef[k] a^k (coef[0] ignored) by Horner, for a[0] == 0."""
    out = np.zeros(n)
    kmax = coef.shape[0] - 1
    for k in range(kmax, 0, -1):
        out = series_mul(out, a, n)
        out[0] += coef[k]
    return series_mul(out, a, n)
