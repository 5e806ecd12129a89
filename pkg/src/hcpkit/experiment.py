"""Config-driven experiments: simulate, compute references, write the report bundle."""
from __future__ import annotations

import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .analytic import (c0_estimate, epoch_interval_law, leftmost_laplace, m_measure,
                       series_coefficients)
from .config import ConfigError, ExperimentConfig, load_config
from .limits import (LimitLawParams, limit_interval_laplace, limit_leftmost_laplace_case_i,
                     limit_leftmost_laplace_case_ii)
from .measures import GridMeasure, laplace_of_grid
from .model import CaseTag, Configuration, EpochSchedule, Torus, make_rate_spec
from .ode import endpoint_check, evolve_epoch_ode, invariant_drift
from .report import (INTERVAL_HEADER, LAPLACE_HEADER, compare_report, interval_rows,
                     laplace_rows, write_csv)
from .rng import CounterRNG
from .runner import EmpiricalSummary, default_s_grid, merge_summaries, run_hcp, run_leftmost
from .spp import IntervalLawPreset, interval_law_preset, sample_ren_delta0, sample_ren_stationary

REPORT_SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


class _Rescaled:
    """Rate table over the rescaled length u = d / d_n."""

    def __init__(self, table, d_n):
        t = np.asarray(table, dtype=float)
        if t.ndim != 2 or t.shape[1] != 2:
            raise ValueError("a rate table must be a list of [u, value] pairs with u = d/d_n")
        self.u, self.v, self.d_n = t[:, 0], t[:, 1], float(d_n)

    def __call__(self, d, n=None):
        return np.interp(np.asarray(d) / self.d_n, self.u, self.v)


class ConfigRates:
    """Rate factory n -> RateSpec for presets whose YAML params may hold tables."""

    def __init__(self, preset: str, schedule: EpochSchedule, params: dict):
        self.preset = preset
        self.schedule = schedule
        self.params = dict(params)
        self._cache = {}

    def __call__(self, n):
        if n not in self._cache:
            d_n = self.schedule[n]
            par = {k: (_Rescaled(v, d_n) if isinstance(v, list) else v) for k, v in self.params.items()}
            self._cache[n] = make_rate_spec(self.preset, n, self.schedule, par)
        return self._cache[n]

    def __getstate__(self):
        return {"preset": self.preset, "schedule": self.schedule, "params": self.params, "_cache": {}}


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------

def _initial(cfg, mu: GridMeasure, rng: CounterRNG) -> Configuration:
    N = cfg["topology"]["size"]
    if cfg["topology"]["kind"] == "halfline":
        return sample_ren_delta0(mu, N, rng)
    # torus length chosen so that N intervals are expected
    L = mu.h * max(1, round(N * mu.mean() / mu.h))
    return sample_ren_stationary(mu, Torus(float(L)), rng)


def _replica(args):
    cfg, mu, schedule, rates, s_grid, lattice_h, r = args
    rng = CounterRNG(cfg["seed"], r)
    run = run_hcp(_initial(cfg, mu, rng), schedule, rates, cfg["epochs"], rng, s_grid, lattice_h)
    diag = []
    for rec in run.records:
        t = rec.trace
        diag.append(None if t is None else {
            "n_active": t.n_active, "n_events": t.n_events, "merges": t.merges,
            "frontier_in": t.frontier_in, "frontier_out": t.frontier_out})
    return [rec.summary for rec in run.records], diag, run.truncated


def _simulate(cfg, mu, schedule, rates, s_grid, lattice_h, workers):
    args = [(cfg, mu, schedule, rates, s_grid, lattice_h, r) for r in range(cfg["replicas"])]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(min(workers, len(args))) as ex:
            parts = list(ex.map(_replica, args))
    else:
        parts = [_replica(a) for a in args]
    # merge in replica order: identical sums whatever the worker count
    merged = list(parts[0][0])
    for summ, _, _ in parts[1:]:
        for i, s in enumerate(summ):
            if i < len(merged):
                merged[i] = merge_summaries(merged[i], s)
    diags = [p[1] for p in parts]
    truncated = sum(bool(p[2]) for p in parts)
    return merged, diags, truncated


def _frontier_diagnostics(diags, epochs):
    out = []
    for n in range(1, epochs):
        rows = [d[n - 1] for d in diags if len(d) >= n and d[n - 1] is not None]
        fin = [r["frontier_in"] for r in rows if r["frontier_in"] is not None]
        fout = [r["frontier_out"] for r in rows if r["frontier_out"] is not None]
        out.append({
            "epoch": n,
            "events": int(sum(r["n_events"] for r in rows)),
            "active": int(sum(r["n_active"] for r in rows)),
            "merges": {k: int(sum(r["merges"][k] for r in rows)) for k in ("left", "right", "both")},
            "frontier_in_min": min(fin) if fin else None,
            "frontier_out_min": min(fout) if fout else None,
        })
    return out


# --------------------------------------------------------------------------
# references
# --------------------------------------------------------------------------

def _common_case(rates, epochs):
    tags = [rates(n).case_tag for n in range(1, max(epochs, 2))]
    first = tags[0]
    for t in tags[1:]:
        if t.kind != first.kind or (first.kind == "II" and t.gamma != first.gamma):
            return None, "rates change case between epochs"
        if first.kind == "I" and t.gamma != first.gamma:
            first = CaseTag("I", None)
    if first.kind == "general":
        return None, "rates are in neither solvable family (case General)"
    return first, None


def _oracle(cfg, mu, schedule, case: CaseTag):
    """Exact laws per epoch, or (None, reason)."""
    epochs = cfg["epochs"]
    if mu.h <= 0 or not all(abs(schedule[n] / mu.h - round(schedule[n] / mu.h)) < 1e-9
                             for n in range(1, epochs + 1)):
        return None, None, "schedule is not on the lattice of the initial law"
    coeffs = series_coefficients(case, case.gamma if case.kind == "II" else 0.0, 2)
    x_top = max(mu.x_max, 64.0 * schedule[epochs])
    x_top = mu.h * math.ceil(x_top / mu.h - 1e-9)
    m = m_measure(mu, coeffs, x_top)
    laws = {n: epoch_interval_law(m, schedule[n], coeffs) for n in range(1, epochs + 1)}
    return laws, m, None


# --------------------------------------------------------------------------
# the whole run
# --------------------------------------------------------------------------

def _versions():
    import numba

    from . import __version__
    return {"hcpkit": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "numba": numba.__version__, "platform": platform.platform()}


def _check(name, value, tol, passed=None):
    ok = bool(value <= tol) if passed is None else bool(passed)
    return {"name": name, "value": float(value), "tolerance": float(tol), "passed": ok}


def execute(cfg: ExperimentConfig, out_dir: str | None = None, workers: int | None = None) -> tuple[int, dict]:
    """Run a validated config and write the bundle; returns (exit code, report)."""
    c = cfg.data
    out_dir = out_dir or c["output_dir"]
    workers = workers or c["workers"]
    os.makedirs(out_dir, exist_ok=True)
    walls = {}
    t0 = time.perf_counter()

    schedule = cfg.schedule()
    il = c["initial_law"]
    try:
        mu = interval_law_preset(IntervalLawPreset(il["kind"], dict(il["params"]), float(il["h"]),
                                                   float(il["x_max"])))
        if c["topology"]["kind"] == "torus" and not mu.notes.get("mean_finite", True):
            raise ValueError("a torus needs an interval law with finite mean")
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError([f"{cfg.where(('initial_law',))}: initial law rejected: {e}"]) from None
    rates = ConfigRates(c["model"]["preset"], schedule, c["model"]["params"])
    try:
        for n in range(1, max(c["epochs"], 2)):
            rates(n)  # surface rate errors before simulating
    except (ValueError, TypeError) as e:
        raise ConfigError([f"{cfg.where(('model',))}: rates rejected: {e}"]) from None
    sg = c["s_grid"]
    s_grid = default_s_grid(sg["n"], sg["lo"], sg["hi"])
    on_lattice = all(abs(schedule[n] / mu.h - round(schedule[n] / mu.h)) < 1e-9
                     for n in range(1, c["epochs"] + 1))
    lattice_h = mu.h if on_lattice else None
    case, case_reason = _common_case(rates, c["epochs"])
    outputs = set(c["outputs"])
    tol = c["tolerances"]
    files, checks = [], []
    report = {"schema_version": REPORT_SCHEMA_VERSION, "config": c, "seed": c["seed"],
              "versions": _versions(), "case": str(case) if case else "General",
              "schedule": [schedule[n] for n in range(1, c["epochs"] + 2)]}
    walls["setup"] = time.perf_counter() - t0

    def emit(name, header, rows):
        write_csv(os.path.join(out_dir, name), header, rows)
        files.append(name)

    summaries = []
    if "interval_law" in outputs or "oracle" in outputs or "limit_compare" in outputs:
        t = time.perf_counter()
        summaries, diags, truncated = _simulate(c, mu, schedule, rates, s_grid, lattice_h, workers)
        walls["simulation"] = time.perf_counter() - t
        report["frontier"] = _frontier_diagnostics(diags, c["epochs"])
        report["replicas_truncated"] = truncated
        lap = []
        for summ in summaries:
            emit(f"interval_epoch{summ.epoch:03d}.csv", INTERVAL_HEADER, interval_rows(summ.epoch, summ))
            lap += laplace_rows(summ.epoch, s_grid, summ.laplace_acc / summ.count, summ.stderr())
        emit("interval_laplace.csv", LAPLACE_HEADER, lap)
        report["counts"] = {str(s.epoch): s.count for s in summaries}

    laws = m = None
    if "oracle" in outputs or "ode_check" in outputs or "limit_compare" in outputs or "leftmost" in outputs:
        t = time.perf_counter()
        if case is None:
            report["oracle"] = f"unavailable: {case_reason}"
        else:
            laws, m, why = _oracle(c, mu, schedule, case)
            report["oracle"] = "available" if laws else f"unavailable: {why}"
        walls["oracle"] = time.perf_counter() - t

    if "oracle" in outputs and laws:
        lap = []
        dist = {}
        for n, law in laws.items():
            emit(f"oracle_interval_epoch{n:03d}.csv", INTERVAL_HEADER, interval_rows(n, law))
            v, bound = laplace_of_grid(law, s_grid, with_bound=True)
            lap += laplace_rows(n, s_grid, v, bound)
        emit("oracle_laplace.csv", LAPLACE_HEADER, lap)
        for summ in summaries:
            d = compare_report(summ, laws[summ.epoch], s_grid, tol["laplace_sup"])
            dist[str(summ.epoch)] = d.as_dict()
            checks.append(_check(f"interval_laplace_epoch{summ.epoch}", d.laplace_sup, tol["laplace_sup"]))
            if d.ks is not None:
                checks.append(_check(f"interval_ks_epoch{summ.epoch}", d.ks, d.dkw_band + tol["ks_slack"]))
        report["oracle_distances"] = dist

    if "leftmost" in outputs:
        t = time.perf_counter()
        epochs = tuple(range(1, c["epochs"] + 1))
        ls = run_leftmost(mu, schedule, rates, epochs, c["seed"], c["replicas"],
                          n_max=c["topology"]["size"], w0=min(1024, c["topology"]["size"]), workers=workers)
        walls["leftmost"] = time.perf_counter() - t
        report["leftmost_capped"] = ls.capped
        report["leftmost_max_prefix"] = int(ls.prefix.max())
        lap, hist = [], []
        emp = {}
        for j, n in enumerate(epochs):
            y = ls.y[:, j]
            y = y[np.isfinite(y)]
            summ = EmpiricalSummary(n, s_grid, lattice_h / schedule[n] if lattice_h else 1e-2,
                                    lattice=bool(lattice_h)).add(y)
            emp[n] = summ
            if summ.count:
                hist += interval_rows(n, summ)
                lap += laplace_rows(n, s_grid, summ.laplace_acc / summ.count, summ.stderr())
        emit("leftmost_epochs.csv", INTERVAL_HEADER, hist)
        emit("leftmost_laplace.csv", LAPLACE_HEADER, lap)
        lcase = rates(1).case_tag
        ok_case = case is not None and ((lcase.kind == "I" and lcase.gamma is not None)
                                        or (lcase.kind == "II" and lcase.gamma == 0.0))
        if "oracle" in outputs:
            if not (laws and ok_case):
                report["leftmost_oracle"] = "unavailable: needs case I with lambda_r = gamma lambda_l " \
                                            "or pure annihilation, on the lattice"
            else:
                ref_rows, dist = [], {}
                for n in epochs:
                    ref = leftmost_laplace(n, lcase, mu, m, None, s_grid, schedule)
                    ref_rows += laplace_rows(n, s_grid, ref)
                    if emp[n].count:
                        d = compare_report(emp[n], ref, s_grid, tol["leftmost_sup"])
                        dist[str(n)] = d.as_dict()
                        checks.append(_check(f"leftmost_laplace_epoch{n}", d.laplace_sup, tol["leftmost_sup"]))
                emit("oracle_leftmost_laplace.csv", LAPLACE_HEADER, ref_rows)
                report["leftmost_oracle"] = "available"
                report["leftmost_distances"] = dist

    if "limit_compare" in outputs:
        est = c0_estimate(mu)
        report["c0"] = {"value": est.value, "converged": est.converged, "residual": est.residual}
        if case is None:
            report["limit"] = f"unavailable: {case_reason}"
        else:
            g = case.gamma if case.kind == "II" else 0.0
            ref = limit_interval_laplace(LimitLawParams(case.kind, g, est.value), s_grid)
            rows = laplace_rows("inf", s_grid, ref)
            dist = {}
            for summ in summaries:
                dist[str(summ.epoch)] = compare_report(summ, ref, s_grid, tol["limit_sup"]).as_dict()
            if laws:
                for n, law in laws.items():
                    dist[f"oracle_{n}"] = float(np.max(np.abs(laplace_of_grid(law, s_grid) - ref)))
            last = summaries[-1] if summaries else None
            if tol["limit_sup"] is not None and last is not None:
                checks.append(_check("limit_laplace_last_epoch", dist[str(last.epoch)]["laplace_sup"],
                                     tol["limit_sup"]))
            emit("limit_laplace.csv", LAPLACE_HEADER, rows)
            lcase = rates(1).case_tag
            if lcase.kind == "I" and lcase.gamma is not None:
                emit("limit_leftmost_laplace.csv", LAPLACE_HEADER,
                     laplace_rows("inf", s_grid, limit_leftmost_laplace_case_i(est.value, lcase.gamma, s_grid)))
            elif lcase.kind == "II" and lcase.gamma == 0.0:
                emit("limit_leftmost_laplace.csv", LAPLACE_HEADER,
                     laplace_rows("inf", s_grid, limit_leftmost_laplace_case_ii(s_grid)))
            report["limit_distances"] = dist

    if "ode_check" in outputs:
        t = time.perf_counter()
        od = c["ode"]
        spec = rates(1)
        if case is None:
            report["ode"] = f"unavailable: {case_reason}"
        else:
            # truncation is exact below x_top, so a modest window suffices
            x_top = od["x_max"] or 32.0 * schedule[2]
            x_top = mu.h * math.ceil(x_top / mu.h - 1e-9)
            nu0 = GridMeasure(mu.h, 0.0, np.ones(1)) if c["topology"]["kind"] == "halfline" else None
            traj = evolve_epoch_ode(mu, nu0, spec, od["t_end"], od["dt"], s_grid, x_max=x_top,
                                    record_every=max(1, int(round(od["t_end"] / od["dt"] / 100))))
            traj.to_csv(os.path.join(out_dir, "ode_epoch001.csv"), case)
            files.append("ode_epoch001.csv")
            res = {"drift": invariant_drift(traj, case)}
            checks.append(_check("ode_invariant_drift", res["drift"], tol["ode_drift"]))
            lcase = spec.case_tag
            if nu0 is not None and ((lcase.kind == "I" and lcase.gamma is not None)
                                    or (lcase.kind == "II" and lcase.gamma == 0.0)):
                res["leftmost_drift"] = invariant_drift(traj, lcase, which="leftmost")
                checks.append(_check("ode_leftmost_drift", res["leftmost_drift"], tol["ode_drift"]))
            ep = endpoint_check(traj, case)
            res["endpoint"] = ep
            checks.append(_check("ode_endpoint_G", ep["G"], tol["ode_tv"]))
            if laws and 2 in laws:
                ser = laws[2]
                k = np.rint(ser.sites * schedule[2] / mu.h).astype(np.int64)
                ref = np.zeros(traj.mu.shape[1])
                keep = k < ref.shape[0]
                ref[k[keep]] = ser.mass[keep]
                tv = 0.5 * float(np.abs(traj.mu[-1] - ref).sum())  # sites up to x_top only
                res["tv_vs_oracle"] = tv
                checks.append(_check("ode_vs_oracle_tv", tv, tol["ode_tv"]))
            report["ode"] = res
        walls["ode"] = time.perf_counter() - t

    walls["total"] = time.perf_counter() - t0
    report["checks"] = checks
    report["passed"] = all(ch["passed"] for ch in checks)
    report["files"] = sorted(files)
    report["wall_times"] = walls
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return (EXIT_OK if report["passed"] else EXIT_CHECK_FAILED), report


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def run_experiment(config_path, seed: int | None = None, workers: int | None = None,
                   out: str | None = None) -> tuple[int, dict]:
    """Load, validate and run a config file.  Config errors raise ConfigError."""
    cfg = load_config(config_path, seed)
    return execute(cfg, out, workers)
