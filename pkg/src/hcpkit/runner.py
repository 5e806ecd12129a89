"""Chaining epochs and collecting rescaled statistics."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import EpochTrace, run_epoch
from .measures import GridMeasure
from .model import Configuration, EpochSchedule, HalfLine, RateSpec, Torus
from .rng import CounterRNG
from .spp import AliasTable, alias_for, sample_ren_delta0

DEFAULT_BIN_WIDTH = 1e-2


def default_s_grid(n: int = 64, lo: float = 0.05, hi: float = 10.0) -> np.ndarray:
    return np.geomspace(lo, hi, n)


@dataclass
class EmpiricalSummary:
    """Counts and Laplace accumulators of a rescaled variable.

    Histogram bins are [k w, (k+1) w); on lattice runs w = h/d_n and k is the
    lattice site index, so bins are exact.
    """

    epoch: int
    s_grid: np.ndarray
    bin_width: float
    count: int = 0
    bins: dict = field(default_factory=dict)
    laplace_acc: np.ndarray | None = None
    laplace_acc2: np.ndarray | None = None
    total: float = 0.0
    total2: float = 0.0
    lattice: bool = False

    def __post_init__(self):
        self.s_grid = np.asarray(self.s_grid, dtype=float)
        if self.laplace_acc is None:
            self.laplace_acc = np.zeros_like(self.s_grid)
            self.laplace_acc2 = np.zeros_like(self.s_grid)

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def second_moment(self) -> float:
        return self.total2 / self.count if self.count else math.nan

    def add(self, values) -> "EmpiricalSummary":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return self
        uniq, cnt = np.unique(v, return_counts=True)
        e = np.exp(-np.multiply.outer(self.s_grid, uniq))
        self.laplace_acc = self.laplace_acc + e @ cnt
        self.laplace_acc2 = self.laplace_acc2 + (e * e) @ cnt
        self.total += float(np.dot(uniq, cnt))
        self.total2 += float(np.dot(uniq * uniq, cnt))
        self.count += int(v.size)
        u = uniq / self.bin_width
        k = np.rint(u) if self.lattice else np.floor(u + 1e-9)
        kb, kc = np.unique(k.astype(np.int64), return_inverse=True)
        sums = np.bincount(kc, weights=cnt).astype(np.int64)
        for b, c in zip(kb.tolist(), sums.tolist()):
            self.bins[b] = self.bins.get(b, 0) + c
        return self

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        """(bin indices, counts) sorted by bin."""
        if not self.bins:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        k = np.array(sorted(self.bins), dtype=np.int64)
        return k, np.array([self.bins[i] for i in k.tolist()], dtype=np.int64)

    def stderr(self) -> np.ndarray:
        if self.count == 0:
            raise ValueError("empty summary")
        m = self.laplace_acc / self.count
        var = np.maximum(self.laplace_acc2 / self.count - m * m, 0.0)
        return np.sqrt(var / self.count)


def empirical_laplace(summary: EmpiricalSummary, s_grid=None) -> np.ndarray:
    """Sample mean of e^{-sZ} on the summary's grid (``s_grid`` must match it if given)."""
    if summary.count == 0:
        raise ValueError("empty summary")
    if s_grid is not None and not np.array_equal(np.asarray(s_grid, dtype=float), summary.s_grid):
        raise ValueError("s-grid differs from the one the summary was accumulated on")
    return summary.laplace_acc / summary.count


def merge_summaries(a: EmpiricalSummary, b: EmpiricalSummary) -> EmpiricalSummary:
    if a.epoch != b.epoch:
        raise ValueError("cannot merge summaries of different epochs")
    if not np.array_equal(a.s_grid, b.s_grid) or a.bin_width != b.bin_width or a.lattice != b.lattice:
        raise ValueError("cannot merge summaries on different s-grids or bins")
    bins = dict(a.bins)
    for k, c in b.bins.items():
        bins[k] = bins.get(k, 0) + c
    return EmpiricalSummary(a.epoch, a.s_grid, a.bin_width, a.count + b.count, bins,
                            a.laplace_acc + b.laplace_acc, a.laplace_acc2 + b.laplace_acc2,
                            a.total + b.total, a.total2 + b.total2, a.lattice)


def observed_gaps(config: Configuration) -> np.ndarray:
    """Gaps that count as exact statistics for this configuration."""
    pts = config.points
    if isinstance(config.topology, Torus):
        g = config.gaps()
        return g[:-1] if len(config) < 3 else g
    if isinstance(config.topology, HalfLine) and config.frontier is not None:
        return np.diff(pts[:config.frontier])
    return np.diff(pts)


@dataclass
class EpochRecord:
    epoch: int
    summary: EmpiricalSummary
    y: float | None
    trace: EpochTrace | None


@dataclass
class HCPRun:
    records: list
    truncated: bool
    final: Configuration

    def __iter__(self):
        return iter((r.epoch, r.summary, r.y) for r in self.records)


def run_hcp(initial: Configuration, schedule: EpochSchedule, rate_factory: Callable[[int], RateSpec],
            n_epochs: int, rng: CounterRNG, s_grid=None, lattice_h: float | None = None,
            log_every: int = 0) -> HCPRun:
    """Statistics at the start of epochs 1..n_epochs (simulating epochs 1..n_epochs-1).

    ``lattice_h`` switches to exact lattice bins of width h/d_n.
    """
    s_grid = default_s_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    config = initial
    config.check_membership(schedule[1])
    records = []
    truncated = False
    for n in range(1, n_epochs + 1):
        d_n = schedule[n]
        width = lattice_h / d_n if lattice_h else DEFAULT_BIN_WIDTH
        summ = EmpiricalSummary(n, s_grid, width, lattice=bool(lattice_h))
        summ.add(observed_gaps(config) / d_n)
        y = None
        if isinstance(config.topology, HalfLine) and (config.frontier is None or config.frontier > 0):
            y = float(config.points[0] / d_n)
        trace = None
        records.append(EpochRecord(n, summ, y, trace))
        if n == n_epochs:
            break
        if len(config) <= 1:
            truncated = True
            break
        spec = rate_factory(n)
        if spec.d_min != d_n or spec.d_max != schedule[n + 1]:
            raise ValueError(f"rate factory gave [{spec.d_min}, {spec.d_max}) for epoch {n}")
        config, trace = run_epoch(config, spec, rng, epoch=n, log_every=log_every)
        records[-1].trace = trace
    return HCPRun(records, truncated, config)


# --------------------------------------------------------------------------
# leftmost point on the half-line
# --------------------------------------------------------------------------

@dataclass
class LeftmostSample:
    epochs: tuple
    y: np.ndarray          # replicas x epochs, NaN where not exact
    prefix: np.ndarray     # intervals materialized per replica
    capped: int            # replicas that hit n_max with the first point untrusted


def _leftmost_one(mu_table: AliasTable, mu, schedule, rate_factory, epochs, seed, stream, w0, n_max):
    rng = CounterRNG(seed, stream)
    last = max(epochs)
    w = min(w0, n_max)
    while True:
        config = sample_ren_delta0(mu, w, rng, mu_table)
        ys = {}
        ok = True
        for n in range(1, last + 1):
            if n in epochs:
                if config.frontier == 0:
                    ok = False
                    break
                ys[n] = config.points[0] / schedule[n]
            if n == last:
                break
            config, _ = run_epoch(config, rate_factory(n), rng, epoch=n)
        if ok or w >= n_max:
            out = np.array([ys.get(n, np.nan) for n in epochs])
            return out, w, not ok
        w = min(2 * w, n_max)


def _leftmost_chunk(args):
    mu, schedule, rate_factory, epochs, seed, streams, w0, n_max = args
    table = alias_for(mu)
    res = [_leftmost_one(table, mu, schedule, rate_factory, epochs, seed, s, w0, n_max) for s in streams]
    return res


def run_leftmost(mu: GridMeasure, schedule: EpochSchedule, rate_factory, epochs, seed: int,
                 replicas: int, n_max: int = 10**6, w0: int = 1024, workers: int = 1,
                 first_stream: int = 0) -> LeftmostSample:
    """Rescaled first point at the start of the given epochs, one replica per stream.

    Each replica is the half-line process with ``n_max`` initial intervals.
    Only a prefix of w intervals is materialized; w doubles while the frontier
    reaches the first point.  Draws are addressed by point identity, so the
    exact part of a prefix run coincides with the n_max run.
    """
    epochs = tuple(sorted(int(e) for e in epochs))
    streams = np.arange(first_stream, first_stream + replicas)
    chunks = np.array_split(streams, max(1, min(workers * 4, replicas))) if workers > 1 else [streams]
    args = [(mu, schedule, rate_factory, epochs, seed, c.tolist(), w0, n_max) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_leftmost_chunk, args))
    else:
        parts = [_leftmost_chunk(a) for a in args]
    flat = [r for p in parts for r in p]
    y = np.array([r[0] for r in flat]).reshape(replicas, len(epochs))
    return LeftmostSample(epochs, y, np.array([r[1] for r in flat]), int(sum(r[2] for r in flat)))
