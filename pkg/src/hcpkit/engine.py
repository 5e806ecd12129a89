"""One epoch of the coalescence dynamics, run to absorption.

Each active domain gets one exponential clock with its total rate and a
categorical split into left / right / both.  Because 2 d_min >= d_max, a
merged domain is never active, so no clock is ever rescheduled: sorting the
initial clocks once replaces a priority queue, and a clock whose domain has
been modified is skipped (lazy deletion).  The domain keyed by point k is
[x_k, x_next(k)]; ties in time are broken by k.

Half-line runs are truncated on the right.  The frontier F is the first
array index whose neighbourhood may differ from the untruncated system;
points with index < F and domains with both ends < F are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .model import Configuration, HalfLine, RateSpec, Torus, rate_at
from .rng import CounterRNG, clock_tag, uniform_pair

EV_LEFT, EV_RIGHT, EV_BOTH = 0, 1, 2


@dataclass
class EpochTrace:
    n_active: int
    n_events: int
    total_time: float
    merges: dict
    frontier_in: int | None = None
    frontier_out: int | None = None
    log: np.ndarray | None = field(default=None, repr=False)


@numba.njit(cache=True)
def _domain_length(k, pos, nxt, torus, L):
    j = nxt[k]
    if j < 0:
        return np.inf
    d = pos[j] - pos[k]
    if torus and j <= k:
        d += L
    return d


@numba.njit(cache=True)
def _unlink(x, nxt, prv):
    a = prv[x]
    b = nxt[x]
    if a >= 0:
        nxt[a] = b
    if b >= 0:
        prv[b] = a


@numba.njit(cache=True)
def _epoch_kernel(pos, uid, torus, L, use_frontier, frontier, g0, gstep, tl, tr, ta,
                  dmin, dmax, k0, k1, stream, tag, log_every, alive, counts, logbuf):
    """Runs one epoch in place on ``alive``.

    counts = [n_active, n_events, n_left, n_right, n_both, n_logged];
    returns (new frontier (old indexing), time of last event).
    """
    n = pos.shape[0]
    nxt = np.empty(n, np.int64)
    prv = np.empty(n, np.int64)
    for i in range(n):
        nxt[i] = i + 1
        prv[i] = i - 1
        alive[i] = True
    if n > 0:
        if torus:
            nxt[n - 1] = 0
            prv[0] = n - 1
        else:
            nxt[n - 1] = -1

    keys = np.empty(n, np.int64)
    times = np.empty(n)
    split_l = np.empty(n)
    split_r = np.empty(n)
    na = 0
    if not (torus and n < 2):
        for k in range(n):
            d = _domain_length(k, pos, nxt, torus, L)
            if d >= dmin and d < dmax:
                ll = rate_at(d, g0, gstep, tl)
                lr = rate_at(d, g0, gstep, tr)
                la = rate_at(d, g0, gstep, ta)
                lam = ll + lr + la
                if lam > 0.0:
                    u1, u2 = uniform_pair(k0, k1, stream, tag, uid[k])
                    keys[na] = k
                    times[na] = -math.log1p(-u1) / lam
                    x = u2 * lam
                    split_l[na] = x - ll
                    split_r[na] = x - ll - lr
                    na += 1
    counts[0] = na
    order = np.argsort(times[:na], kind="mergesort")
    changed = np.zeros(n, np.bool_)
    n_alive = n
    F = frontier
    t_last = 0.0
    n_ev = 0
    for oi in range(na):
        e = order[oi]
        k = keys[e]
        if use_frontier and k < F and alive[k]:
            j = nxt[k]
            if j < 0 or j >= F:
                F = k
        if not alive[k] or changed[k] or n_alive < 2:
            continue
        j = nxt[k]
        if split_l[e] < 0.0:
            kind = 0
        elif split_r[e] < 0.0:
            kind = 1
        else:
            kind = 2
        if kind == 0:
            p = prv[k]
            _unlink(k, nxt, prv)
            alive[k] = False
            n_alive -= 1
            if p >= 0:
                changed[p] = True
        elif kind == 1:
            _unlink(j, nxt, prv)
            alive[j] = False
            n_alive -= 1
            changed[k] = True
        else:
            p = prv[k]
            _unlink(k, nxt, prv)
            alive[k] = False
            n_alive -= 1
            if alive[j]:
                _unlink(j, nxt, prv)
                alive[j] = False
                n_alive -= 1
            if p >= 0 and alive[p]:
                changed[p] = True
        counts[2 + kind] += 1
        n_ev += 1
        t_last = times[e]
        if log_every > 0 and n_ev % log_every == 0 and counts[5] < logbuf.shape[0]:
            r = counts[5]
            logbuf[r, 0] = times[e]
            logbuf[r, 1] = uid[k]
            logbuf[r, 2] = kind
            counts[5] += 1
    counts[1] = n_ev
    return F, t_last


def _check_inputs(config: Configuration, spec: RateSpec):
    if not spec.satisfies_a2():
        raise ValueError(f"rates violate (A2): 2*d_min={2 * spec.d_min!r} < d_max={spec.d_max!r}; "
                         "a merged domain could be active")
    config.check_membership(spec.d_min)


def _kernel_args(config: Configuration, spec: RateSpec):
    topo = config.topology
    torus = isinstance(topo, Torus)
    L = topo.L if torus else 0.0
    use_f = isinstance(topo, HalfLine) and config.frontier is not None
    F = config.frontier if use_f else len(config)
    return torus, L, use_f, F, (spec.d_min, spec.step, spec.table_left, spec.table_right,
                                spec.table_ann, spec.d_min, spec.d_max)


def run_epoch(config: Configuration, spec: RateSpec, rng: CounterRNG, epoch: int = 1,
              log_every: int = 0, log_capacity: int = 100_000) -> tuple[Configuration, EpochTrace]:
    """Run one epoch to absorption; returns the surviving configuration and a trace.

    Clock draws are addressed by (epoch, point uid), so replaying an epoch on
    a truncated or extended configuration gives the same clocks to shared
    points.
    """
    _check_inputs(config, spec)
    torus, L, use_f, F, rates = _kernel_args(config, spec)
    n = len(config)
    alive = np.empty(n, dtype=np.bool_)
    counts = np.zeros(6, dtype=np.int64)
    logbuf = np.zeros((log_capacity if log_every > 0 else 0, 3))
    k0, k1 = rng.key
    F_new, t_last = _epoch_kernel(config.points, config.uid, torus, L, use_f, F, *rates,
                                  k0, k1, rng.stream, clock_tag(epoch), log_every, alive,
                                  counts, logbuf)
    pts = config.points[alive]
    uid = config.uid[alive]
    frontier = None
    if use_f:
        frontier = int(np.count_nonzero(alive[:F_new]))
        frontier = min(frontier, len(pts) - 1)
    out = Configuration(pts, config.topology, frontier, uid)
    trace = EpochTrace(int(counts[0]), int(counts[1]), float(t_last),
                       {"left": int(counts[2]), "right": int(counts[3]), "both": int(counts[4])},
                       config.frontier, frontier,
                       logbuf[:counts[5]].copy() if log_every > 0 else None)
    return out, trace


@numba.njit(cache=True)
def _batch_kernel(pos, uid, torus, L, g0, gstep, tl, tr, ta, dmin, dmax, k0, k1,
                  streams, tag, out):
    n = pos.shape[0]
    alive = np.empty(n, np.bool_)
    counts = np.zeros(6, np.int64)
    logbuf = np.zeros((0, 3))
    for r in range(streams.shape[0]):
        counts[:] = 0
        _epoch_kernel(pos, uid, torus, L, False, n, g0, gstep, tl, tr, ta, dmin, dmax,
                      k0, k1, streams[r], tag, 0, alive, counts, logbuf)
        out[r, :] = alive


def final_states(config: Configuration, spec: RateSpec, seed: int, streams, epoch: int = 1) -> np.ndarray:
    """Survivor masks (replicas x points) of one epoch over many RNG streams."""
    _check_inputs(config, spec)
    torus, L, _, _, rates = _kernel_args(config, spec)
    streams = np.ascontiguousarray(streams, dtype=np.int64)
    out = np.empty((streams.shape[0], len(config)), dtype=np.bool_)
    k0, k1 = CounterRNG(seed).key
    _batch_kernel(config.points, config.uid, torus, L, *rates, k0, k1, streams, clock_tag(epoch), out)
    return out


def active_domains(config: Configuration, spec: RateSpec) -> np.ndarray:
    """Indices of domains with length in [d_min, d_max); domain i starts at point i."""
    pts = config.points
    n = pts.shape[0]
    if isinstance(config.topology, Torus):
        if n < 2:
            return np.empty(0, dtype=np.int64)
    g = config.gaps()
    return np.flatnonzero((g >= spec.d_min) & (g < spec.d_max)).astype(np.int64)
