"""Renewal point-process samplers and standard interval laws.

Gap k of a configuration is drawn from the counter ``(TAG_GAP, k)`` of the
replica stream, so the first W gaps of a long sample coincide with a sample of
W gaps.  Draws use an alias table built once per measure.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .measures import GridMeasure
from .model import Configuration, HalfLine, Torus, Window
from .rng import TAG_GAP, TAG_GAP_LEFT, TAG_RESAMPLE, TAG_STRADDLE, CounterRNG, uniform_pair

log = logging.getLogger(__name__)

DEFAULT_X_MAX = 4096


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IntervalLawPreset:
    """kind is one of delta, geometric, zeta_tail, truncated_pareto, custom.

    params: delta {d0}; geometric {p}; zeta_tail {alpha}; truncated_pareto
    {alpha}; custom {measure: GridMeasure}.
    """

    kind: str
    params: dict = field(default_factory=dict)
    h: float = 1.0
    x_max: float = DEFAULT_X_MAX


PRESET_KINDS = ("delta", "geometric", "zeta_tail", "truncated_pareto", "custom")


def _n_sites(x_max, h):
    k = x_max / h
    if abs(k - round(k)) > 1e-9 * k:
        raise ValueError("x_max must be a multiple of h")
    return int(round(k))


def interval_law_preset(preset: IntervalLawPreset) -> GridMeasure:
    """Normalized lattice law on sites h, 2h, ..., x_max with tail mass recorded."""
    kind, par, h = preset.kind, dict(preset.params), float(preset.h)
    if kind == "custom":
        mu = par["measure"]
        if not mu.is_probability():
            raise ValueError("custom interval law must be a probability measure")
        return mu
    if kind == "delta":
        d0 = float(par.get("d0", 1.0))
        if d0 < 1:
            raise ValueError("interval laws live on [1, inf)")
        k = _n_sites(d0, h)
        m = np.zeros(k)
        m[-1] = 1.0
        return GridMeasure(h, h, m, 0.0, {"family": "delta", "mean_finite": True})
    n = _n_sites(preset.x_max, h)
    if kind == "geometric":
        p = float(par["p"])
        if not 0 < p < 1:
            raise ValueError("geometric parameter p must lie in (0, 1)")
        if h != 1.0:
            raise ValueError("geometric law is defined on the integers (h = 1)")
        k = np.arange(1, n + 1)
        m = p * (1.0 - p) ** (k - 1)
        tail = (1.0 - p) ** n
        return GridMeasure(h, h, m, tail, {"family": "geometric", "mean_finite": True})
    if kind == "zeta_tail":
        a = float(par["alpha"])
        if not 0 <= a <= 1:
            raise ValueError(f"zeta_tail needs alpha in [0, 1], got {a}")
        if h != 1.0:
            raise ValueError("zeta_tail is defined on the integers (h = 1)")
        # P(X > x) = floor(x)^(-alpha) for x >= 1
        k = np.arange(1, n + 1, dtype=float)
        surv = k ** (-a)
        m = np.empty(n)
        m[0] = 0.0
        m[1:] = surv[:-1] - surv[1:]
        return GridMeasure(h, h, m, float(surv[-1]), {"family": "zeta_tail", "mean_finite": False,
                                                       "alpha": a})
    if kind == "truncated_pareto":
        a = float(par["alpha"])
        if not a > 0:
            raise ValueError("truncated_pareto needs alpha > 0")
        x_max = float(preset.x_max)
        if x_max <= 1:
            raise ValueError("truncated_pareto needs x_max > 1")
        k0 = _n_sites(1.0, h)

        def cdf(x):
            return (1.0 - x ** (-a)) / (1.0 - x_max ** (-a))

        # mass of [kh, (k+1)h) lands on site kh
        lo = h * np.arange(k0, n + 1, dtype=float)
        hi = np.minimum(lo + h, x_max)
        m = np.zeros(n)
        m[k0 - 1:] = cdf(hi) - cdf(lo)
        m[m < 0] = 0.0
        m /= math.fsum(m)
        return GridMeasure(h, h, m, 0.0, {"family": "truncated_pareto", "mean_finite": True,
                                          "alpha": a})
    raise ValueError(f"unknown interval law kind {kind!r}; choose from {PRESET_KINDS}")


# --------------------------------------------------------------------------
# alias sampling
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AliasTable:
    prob: np.ndarray
    alias: np.ndarray
    h: float
    offset: float


def _normalized(mu: GridMeasure) -> np.ndarray:
    if not mu.is_probability():
        raise ValueError("interval law is not normalized (total + tail_mass != 1)")
    if mu.mass.min() < 0:
        raise ValueError("interval law has negative mass")
    if mu.offset < 1.0 - 1e-12:
        raise ValueError("interval law must live on [1, inf)")
    if mu.tail_mass > 1e-9:
        log.warning("sampling conditions on x <= %g (tail mass %.3g dropped)", mu.x_max, mu.tail_mass)
    return mu.mass / math.fsum(mu.mass)


def build_alias(weights: np.ndarray, h: float, offset: float) -> AliasTable:
    """Vose's alias method; deterministic given ``weights``."""
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    scaled = w * (n / w.sum())
    prob = np.zeros(n)
    alias = np.zeros(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        lg = large.pop()
        prob[s] = scaled[s]
        alias[s] = lg
        scaled[lg] = (scaled[lg] + scaled[s]) - 1.0
        (small if scaled[lg] < 1.0 else large).append(lg)
    for i in large + small:
        prob[i] = 1.0
        alias[i] = i
    return AliasTable(prob, alias, float(h), float(offset))


def alias_for(mu: GridMeasure) -> AliasTable:
    return build_alias(_normalized(mu), mu.h, mu.offset)


@numba.njit(cache=True)
def alias_draw(u, v, prob, alias):
    n = prob.shape[0]
    col = int(u * n)
    if col >= n:
        col = n - 1
    return col if v < prob[col] else alias[col]


@numba.njit(cache=True)
def _draw_sites(k0, k1, stream, tag, start, count, prob, alias, out):
    for i in range(count):
        u, v = uniform_pair(k0, k1, stream, tag, start + i)
        out[i] = alias_draw(u, v, prob, alias)


def draw_gaps(table: AliasTable, rng: CounterRNG, tag: int, start: int, count: int) -> np.ndarray:
    """``count`` gaps addressed by counters start..start+count-1."""
    k0, k1 = rng.key
    idx = np.empty(count, dtype=np.int64)
    _draw_sites(k0, k1, rng.stream, tag, start, count, table.prob, table.alias, idx)
    return table.offset + table.h * idx


# --------------------------------------------------------------------------
# samplers
# --------------------------------------------------------------------------

def sample_ren_delta0(mu: GridMeasure, n_intervals: int, rng: CounterRNG,
                      table: AliasTable | None = None) -> Configuration:
    """Renewal configuration on the half-line with a point at 0 and n_intervals gaps."""
    n_intervals = int(n_intervals)
    if n_intervals < 1:
        raise ValueError("need at least one interval")
    table = table or alias_for(mu)
    gaps = draw_gaps(table, rng, TAG_GAP, 0, n_intervals)
    pts = np.empty(n_intervals + 1)
    pts[0] = 0.0
    np.cumsum(gaps, out=pts[1:])
    return Configuration(pts, HalfLine(), frontier=n_intervals)


def _require_finite_mean(mu: GridMeasure):
    if not mu.notes.get("mean_finite", True):
        raise ValueError("stationary renewal sampling needs an interval law with finite mean; "
                         "an infinite-mean stationary renewal process does not exist")


def sample_ren_stationary(mu: GridMeasure, window_or_torus, rng: CounterRNG,
                          max_resample: int = 1000) -> Configuration:
    """Approximately stationary renewal configuration on a torus or window.

    Torus: gaps fill [0, L) from a point at 0; when the closing gap would be
    shorter than the first site of mu, the last gap is redrawn (up to
    ``max_resample`` times, then dropped).  This conditioning biases the
    law by O(1/number of points).
    Window: a size-biased straddling interval covers 0 with the origin placed
    uniformly inside it, then independent gaps extend both ways.
    """
    _require_finite_mean(mu)
    w = _normalized(mu)
    table = build_alias(w, mu.h, mu.offset)
    dmin = mu.offset
    topo = window_or_torus
    if isinstance(topo, Torus):
        L = topo.L
        mean = float(np.dot(mu.sites, w))
        batch = int(L / mean * 1.1) + 16
        gaps = draw_gaps(table, rng, TAG_GAP, 0, batch)
        pos = np.cumsum(gaps)
        start = batch
        while pos[-1] < L:
            more = draw_gaps(table, rng, TAG_GAP, start, batch)
            pos = np.concatenate([pos, pos[-1] + np.cumsum(more)])
            start += batch
        # points strictly inside (0, L)
        k = int(np.searchsorted(pos, L, side="left"))
        pts = np.concatenate([[0.0], pos[:k]])
        attempt = 0
        while pts.size > 1 and L - pts[-1] < dmin:
            if attempt >= max_resample:
                pts = pts[:-1]
                attempt = 0
                continue
            g = draw_gaps(table, rng, TAG_RESAMPLE, pts.size * max_resample + attempt, 1)[0]
            attempt += 1
            cand = pts[-2] + g
            if cand <= L - dmin:
                pts[-1] = cand
            elif cand >= L:
                pts = pts[:-1]
                attempt = 0
        return Configuration(pts, topo)
    if isinstance(topo, Window):
        sizes = mu.sites * w
        straddle = build_alias(sizes / sizes.sum(), mu.h, mu.offset)
        u, v = rng.uniforms(TAG_STRADDLE, np.array([0], dtype=np.int64))
        d_star = mu.offset + mu.h * alias_draw(u[0], v[0], straddle.prob, straddle.alias)
        u2, _ = rng.uniforms(TAG_STRADDLE, np.array([1], dtype=np.int64))
        x0 = -u2[0] * d_star
        right = _extend(table, rng, TAG_GAP, x0 + d_star, topo.b, +1)
        left = _extend(table, rng, TAG_GAP_LEFT, x0, topo.a, -1)
        pts = np.concatenate([left[::-1], [x0, x0 + d_star], right])
        pts = pts[(pts >= topo.a) & (pts <= topo.b)]
        return Configuration(pts, topo)
    raise TypeError("sample_ren_stationary needs a Torus or a Window")


def _extend(table, rng, tag, start, edge, direction):
    """Points start + direction * cumsum(gaps) until ``edge`` is passed (start excluded)."""
    out = []
    pos = start
    idx = 0
    batch = 1024
    while (edge - pos) * direction > 0:
        gaps = draw_gaps(table, rng, tag, idx, batch)
        idx += batch
        steps = pos + direction * np.cumsum(gaps)
        out.append(steps)
        pos = steps[-1]
    if not out:
        return np.empty(0)
    return np.concatenate(out)


def sample_ren_z(mu: GridMeasure, window: Window, rng: CounterRNG) -> Configuration:
    """Integer-lattice stationary renewal configuration restricted to ``window``."""
    sites = mu.sites
    if not (abs(mu.h - round(mu.h)) < 1e-12 and np.all(np.abs(sites[mu.mass > 0] - np.round(sites[mu.mass > 0])) < 1e-12)):
        raise ValueError("sample_ren_z needs an interval law supported on the positive integers")
    _require_finite_mean(mu)
    w = _normalized(mu)
    table = build_alias(w, mu.h, mu.offset)
    sizes = sites * w
    straddle = build_alias(sizes / sizes.sum(), mu.h, mu.offset)
    u, v = rng.uniforms(TAG_STRADDLE, np.array([0, 1], dtype=np.int64))
    d_star = int(round(mu.offset + mu.h * alias_draw(u[0], v[0], straddle.prob, straddle.alias)))
    shift = min(int(u[1] * d_star), d_star - 1)
    x0 = float(-shift)
    right = _extend(table, rng, TAG_GAP, x0 + d_star, window.b, +1)
    left = _extend(table, rng, TAG_GAP_LEFT, x0, window.a, -1)
    pts = np.concatenate([left[::-1], [x0, x0 + d_star], right])
    pts = pts[(pts >= window.a) & (pts <= window.b)]
    return Configuration(pts, window)
