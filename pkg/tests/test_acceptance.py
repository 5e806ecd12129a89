"""Acceptance criteria, each at its stated tolerance.

One PASS/FAIL line per criterion is printed and repeated in the terminal
summary.  Reference values come from independent routes: scipy special
functions and quadrature, the exhaustive race oracle in ``oracles.py`` and
the exact lattice recursions.
"""
import itertools
import math
import os
import time

import numpy as np
from scipy.special import exp1
from scipy.stats import norm

from conftest import record
from hcpkit.analytic import (c0_estimate, epoch_interval_law, leftmost_laplace, log_sum_h,
                             m_measure, series_coefficients)
from hcpkit.engine import final_states, run_epoch
from hcpkit.measures import GridMeasure, laplace_of_grid
from hcpkit.model import (CaseTag, Configuration, PresetRates, Torus, east_schedule,
                          linear_schedule, make_rate_spec, rate_spec_from)
from hcpkit.ode import evolve_epoch_ode, invariant_drift
from hcpkit.report import dkw_band, ks_distance
from hcpkit.rng import CounterRNG
from hcpkit.runner import EmpiricalSummary, default_s_grid, run_leftmost
from hcpkit.spp import IntervalLawPreset, interval_law_preset, sample_ren_stationary
from oracles import race_final_law

EULER = 0.57721566490153286
S_LIMIT = np.linspace(0.1, 5.0, 99)


def law(kind, x_max=4096, **params):
    return interval_law_preset(IntervalLawPreset(kind, params, 1.0, float(x_max)))


# ---------------------------------------------------------------------------
# 1. transformation round trip
# ---------------------------------------------------------------------------

def test_c1_round_trip():
    worst, slowest = 0.0, 0.0
    for mu in (law("delta", d0=1), law("geometric", p=0.5), law("zeta_tail", alpha=0.7)):
        for case, gamma in (("I", 0.0), ("II", 0.0), ("II", 1.0)):
            t = time.perf_counter()
            co = series_coefficients(case, gamma, 2)
            back = epoch_interval_law(m_measure(mu, co), 1.0, co)
            n = min(back.mass.shape[0], mu.mass.shape[0])
            tv = 0.5 * (np.abs(back.mass[:n] - mu.mass[:n]).sum() + back.mass[n:].sum() + mu.mass[n:].sum())
            worst = max(worst, tv)
            slowest = max(slowest, time.perf_counter() - t)
    ok = worst <= 1e-10 and slowest < 1.0
    record(1, ok, f"round-trip TV max {worst:.2e} (<= 1e-10), slowest {slowest:.2f}s (< 1s)")
    assert ok


# ---------------------------------------------------------------------------
# 2. three routes at epoch 2
# ---------------------------------------------------------------------------

def test_c2_three_routes():
    t0 = time.perf_counter()
    sch = linear_schedule(8)
    mu = law("delta", d0=1)
    spec = make_rate_spec("ising_t0", 1, sch)
    co = series_coefficients("II", 0.0, 2)
    oracle = epoch_interval_law(m_measure(mu, co, 400.0), 2.0, co)

    # (a) Monte Carlo, 10^6 initial intervals on the torus
    N = 10**6
    rng = CounterRNG(2024, 0)
    config = sample_ren_stationary(mu, Torus(float(N)), rng)
    assert len(config) == N
    after, _ = run_epoch(config, spec, rng, epoch=1)
    summ = EmpiricalSummary(2, default_s_grid(), 0.5, lattice=True).add(after.gaps() / 2.0)
    ks = ks_distance(summ, oracle)
    band = dkw_band(summ.count)

    # (c) ODE endpoint; the retained sites are exact below x_max
    tr = evolve_epoch_ode(mu, None, spec, 30.0, 1e-2, x_max=200.0, record_every=100)
    ref = np.zeros(tr.mu.shape[1])
    k = np.rint(oracle.sites * 2.0).astype(int)
    keep = k < ref.shape[0]
    ref[k[keep]] = oracle.mass[keep]
    tv = 0.5 * float(np.abs(tr.mu[-1] - ref).sum())
    elapsed = time.perf_counter() - t0
    ok = ks <= 0.005 and tv <= 1e-5 and elapsed < 120
    record(2, ok, f"KS(MC, oracle) {ks:.2e} (<= 5e-3; DKW99 {band:.2e}, n={summ.count}), "
                  f"TV(oracle, ODE) {tv:.2e} (<= 1e-5), {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 3-5. interval-law limits
# ---------------------------------------------------------------------------

def _limit_distances(mu, case, gamma, target, epochs, x_max):
    co = series_coefficients(case, gamma, 2)
    m = m_measure(mu, co, x_max)
    out = {}
    for n in epochs:
        g = laplace_of_grid(epoch_interval_law(m, float(n), co), S_LIMIT)
        out[n] = float(np.max(np.abs(g - target)))
    return out


def test_c3_case_ii_limit():
    t = time.perf_counter()
    target = np.tanh(0.5 * exp1(S_LIMIT))
    d = _limit_distances(law("geometric", 16384, p=0.5), "II", 0.0, target, (8, 64, 128), 16384.0)
    ok = d[64] < d[8] and d[64] <= 0.02
    record(3, ok, f"sup|g - tanh(E1/2)|: n=8 {d[8]:.4f}, n=64 {d[64]:.4f} (<= 0.02), "
                  f"n=128 {d[128]:.4f} (calibration), {time.perf_counter() - t:.0f}s")
    assert ok


def test_c4_case_i_limit():
    t = time.perf_counter()
    target = 1.0 - np.exp(-exp1(S_LIMIT))
    d = _limit_distances(law("geometric", 16384, p=0.5), "I", 0.0, target, (8, 64, 128), 16384.0)
    ok = d[64] < d[8] and d[64] <= 0.02
    record(4, ok, f"sup|g - (1 - exp(-E1))|: n=8 {d[8]:.4f}, n=64 {d[64]:.4f} (<= 0.02), "
                  f"n=128 {d[128]:.4f} (calibration), {time.perf_counter() - t:.0f}s")
    assert ok


def test_c5_heavy_tail():
    est = c0_estimate(law("zeta_tail", 10**6, alpha=0.5))
    target = 1.0 - np.exp(-0.5 * exp1(S_LIMIT))
    d = _limit_distances(law("zeta_tail", 12800, alpha=0.5), "I", 0.0, target, (64,), 12800.0)
    ok = abs(est.value - 0.5) <= 0.02 and d[64] <= 0.03
    record(5, ok, f"c0 estimate {est.value:.4f} (0.5 +- 0.02), "
                  f"n=64 sup|g - (1 - exp(-E1/2))| {d[64]:.4f} (<= 0.03)")
    assert ok


# ---------------------------------------------------------------------------
# 6. conserved functionals along the ODE
# ---------------------------------------------------------------------------

def test_c6_conserved_functionals():
    t0 = time.perf_counter()
    sch = linear_schedule(8)
    mu = law("geometric", 256, p=0.5)
    nu0 = GridMeasure(1.0, 0.0, np.array([1.0]))
    s = np.geomspace(0.1, 5.0, 32)
    cases = {
        "I (paste-all)": make_rate_spec("paste_all", 1, sch),
        "II gamma=0 (Ising)": make_rate_spec("ising_t0", 1, sch),
        "II gamma=1": rate_spec_from(0.5, 0.5, 1.0, 1.0, 2.0),
    }
    parts, ok = [], True
    for name, spec in cases.items():
        tag = spec.case_tag
        tr = evolve_epoch_ode(mu, nu0, spec, 10.0, 1e-3, s_grid=s, record_every=100)
        drift = invariant_drift(tr, tag)
        if tag.kind == "I" or tag.gamma == 0.0:
            drift = max(drift, invariant_drift(tr, tag, which="leftmost"))
        coarse = [invariant_drift(evolve_epoch_ode(mu, None, spec, 10.0, dt, s_grid=s, record_every=1), tag)
                  for dt in (0.05, 0.025)]
        ratio = coarse[0] / coarse[1]
        good = drift <= 1e-6 and 8.0 <= ratio <= 32.0
        ok &= good
        parts.append(f"{name}: drift {drift:.1e}, halving ratio {ratio:.1f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    record(6, ok, "; ".join(parts) + f" (<= 1e-6, ratio in [8, 32]), {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 7. leftmost point, pure annihilation
# ---------------------------------------------------------------------------

def _leftmost_limit(s):
    return 0.5 * math.exp(-EULER / 2) * np.sqrt((1.0 - np.tanh(exp1(s) / 2) ** 2) / s)


def test_c7_leftmost_point():
    t0 = time.perf_counter()
    sch = east_schedule(16)
    mu = law("geometric", 4096, p=0.5)
    rates = PresetRates("ising_t0", sch)
    s = default_s_grid()
    ref = _leftmost_limit(s)
    runs = {}
    for n_max in (10**6, 2 * 10**6):
        ls = run_leftmost(mu, sch, rates, (4, 12), seed=2024, replicas=10**4, n_max=n_max, w0=8192)
        runs[n_max] = ls
    ls = runs[10**6]
    e = np.exp(-np.multiply.outer(ls.y, s))       # replicas x epochs x s
    g = e.mean(axis=0)
    se = e.std(axis=0, ddof=1) / math.sqrt(ls.y.shape[0])
    d4, d12 = (float(np.max(np.abs(g[j] - ref))) for j in range(2))
    g2 = np.exp(-np.multiply.outer(runs[2 * 10**6].y, s)).mean(axis=0)
    shift = float(np.max(np.abs(g2 - g)))
    band = 3.0 * float(se.max())

    # the linear schedule converges much more slowly: exact law only, for information
    lin = linear_schedule(16)
    co = series_coefficients("II", 0.0, 2)
    m = m_measure(mu, co)
    lin12 = float(np.max(np.abs(leftmost_laplace(12, CaseTag("II", 0.0), mu, m, None, s, lin) - ref)))
    elapsed = time.perf_counter() - t0

    ok = d12 <= 0.03 and d12 <= d4 and shift < band and ls.capped == 0
    record(7, ok, f"East schedule, 10^4 replicas: sup dist n=4 {d4:.4f}, n=12 {d12:.4f} (<= 0.03, <= n=4); "
                  f"N -> 2N shift {shift:.1e} (< 3 stderr {band:.1e}); capped {ls.capped}; {elapsed:.0f}s")
    record(7, True, f"[info] linear schedule, exact law at n=12: sup dist {lin12:.3f} (not a check)")
    assert ok


# ---------------------------------------------------------------------------
# 8. constant in the growth of m
# ---------------------------------------------------------------------------

def test_c8_log_sum_constant():
    t = time.perf_counter()
    mu = law("geometric", 10**4, p=0.5)
    co = series_coefficients("II", 0.0, 2)
    m = m_measure(mu, co, 1e4)
    z = 1e4
    mean = 2.0
    const = 0.5 * math.log(2) + EULER / 2 - 0.5 * math.log(mean)
    err = abs(log_sum_h(m, z) - 0.5 * math.log(z) - const)
    elapsed = time.perf_counter() - t
    ok = err <= 0.02 and elapsed < 10
    record(8, ok, f"|log_sum_h - ln(z)/2 - const| = {err:.2e} (<= 0.02), {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 9. small tori against the exhaustive race
# ---------------------------------------------------------------------------

TABLES = {
    "case I": (lambda d: d, lambda d: 2.0 - d, lambda d: 0.0 * d),
    "case II gamma=1": (lambda d: 0.25 * d, lambda d: 0.75 * d, lambda d: d),
}
SMALL_TORI = list(itertools.product((1.0, 1.5, 2.5), repeat=3)) + [(1.0,) * 4, (1.5,) * 4]


def test_c9_small_instances():
    R = 10**5
    zs = []
    stream = 0
    for name, (left, right, ann) in TABLES.items():
        spec = rate_spec_from(left, right, ann, 1.0, 2.0)
        assert spec.case_tag.kind == ("I" if name == "case I" else "II")
        for lens in SMALL_TORI:
            pts = np.concatenate([[0.0], np.cumsum(lens)[:-1]])
            config = Configuration(pts, Torus(float(sum(lens))))
            exact = race_final_law(lens, 1.0, 2.0, left, right, ann)
            states = final_states(config, spec, 2024, np.arange(stream, stream + R))
            stream += R
            codes = states.astype(np.int64) @ (1 << np.arange(len(lens)))
            freq = np.bincount(codes, minlength=1 << len(lens)) / R
            for code in range(1 << len(lens)):
                key = frozenset(i for i in range(len(lens)) if code >> i & 1)
                p = exact.get(key, 0.0)
                if p in (0.0, 1.0):
                    zs.append(0.0 if freq[code] == p else math.inf)
                else:
                    zs.append(abs(freq[code] - p) / math.sqrt(p * (1 - p) / R))
    zs = np.array(zs)
    k = len(zs)
    # per-comparison level so the whole table has the false-alarm rate of one 3 sigma test
    alpha = 2 * norm.sf(3.0)
    z_fw = float(norm.isf((1 - (1 - alpha) ** (1 / k)) / 2))
    beyond = int(np.sum(zs > 3.0))
    ok = bool(np.all(np.isfinite(zs))) and float(zs.max()) <= z_fw
    record(9, ok, f"{k} outcome frequencies, max |z| {zs.max():.2f} (family-wise 3 sigma bound {z_fw:.2f}); "
                  f"{beyond} beyond 3 sigma individually, {k * alpha:.2f} expected by chance")
    assert ok


# ---------------------------------------------------------------------------
# 10. determinism
# ---------------------------------------------------------------------------

CONFIG = """\
model: {preset: ising_t0}
initial_law: {kind: geometric, params: {p: 0.5}}
schedule: {kind: linear}
topology: {kind: torus, size: 20000}
epochs: 3
replicas: 3
seed: 31337
outputs: [interval_law, oracle, limit_compare, ode_check]
"""


def test_c10_determinism(tmp_path):
    from hcpkit.experiment import run_experiment

    cfg = tmp_path / "c.yaml"
    cfg.write_text(CONFIG)
    outs = []
    for i, workers in enumerate((1, 1, 2)):
        out = tmp_path / f"run{i}"
        run_experiment(cfg, out=str(out), workers=workers)
        outs.append(out)
    names = sorted(p for p in os.listdir(outs[0]) if p.endswith(".csv"))
    same = all((outs[0] / n).read_bytes() == (o / n).read_bytes() for o in outs[1:] for n in names)
    ok = same and len(names) >= 3
    record(10, ok, f"{len(names)} CSV files byte-identical across 2 runs and 1 vs 2 workers "
                   "(single platform here)")
    assert ok
