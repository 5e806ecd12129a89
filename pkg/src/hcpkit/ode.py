"""Within-epoch evolution of the interval law and the first-point law.

On a lattice the gap law of a renewal configuration evolves by

    d mu(x)/dt = -lam(x) mu(x) + sum_{y+z=x} (lam_r(y) + lam_l(z)) mu(y) mu(z)
                 + sum_{u+y+z=x} lam_a(y) mu(u) mu(y) mu(z)

and the law of the first point by

    d nu(x)/dt = -nu(x) <lam_l + lam_a, mu> + sum_y nu(x-y) lam_l(y) mu(y)
                 + sum_{y,z} nu(x-y-z) lam_a(y) mu(y) mu(z).

Both are integrated with fixed-step RK4.  Gain terms only move mass to
larger lengths, so truncating at x_max is exact below x_max; the mass pushed
past x_max is integrated as a separate leak variable.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numba
import numpy as np

from .measures import GridMeasure
from .model import CaseTag, RateSpec


class StepSizeError(ArithmeticError):
    pass


@numba.njit(cache=True)
def _mu_rhs(mu, lam, wl, wr, wa, act_lo, act_hi, out):
    """Returns the leak rate; ``out`` gets d mu/dt (series indexed by x/h)."""
    n = mu.shape[0]
    tot = 0.0
    for x in range(n):
        tot += mu[x]
        out[x] = -lam[x] * mu[x]
    # two-body: ((lam_l + lam_r) mu) * mu, active y only
    w2 = 0.0
    for y in range(act_lo, act_hi):
        wy = (wl[y] + wr[y]) * mu[y]
        if wy == 0.0:
            continue
        w2 += wy
        for z in range(1, n - y):
            out[y + z] += wy * mu[z]
    # three-body: (lam_a mu) * mu * mu
    w3 = 0.0
    mm = np.zeros(n)
    need_mm = False
    for y in range(act_lo, act_hi):
        if wa[y] * mu[y] != 0.0:
            need_mm = True
            break
    if need_mm:
        for u in range(1, n):
            mu_u = mu[u]
            if mu_u == 0.0:
                continue
            for z in range(1, n - u):
                mm[u + z] += mu_u * mu[z]
        for y in range(act_lo, act_hi):
            wy = wa[y] * mu[y]
            if wy == 0.0:
                continue
            w3 += wy
            for v in range(2, n - y):
                out[y + v] += wy * mm[v]
    kept = 0.0
    gain_total = w2 * tot + w3 * tot * tot
    for x in range(n):
        kept += out[x] + lam[x] * mu[x]
    return gain_total - kept


@numba.njit(cache=True)
def _nu_rhs(nu, mu, wl, wa, act_lo, act_hi, out):
    n = nu.shape[0]
    nm = mu.shape[0]
    rate_out = 0.0
    for y in range(act_lo, act_hi):
        rate_out += (wl[y] + wa[y]) * mu[y]
    tot = 0.0
    for x in range(n):
        tot += nu[x]
        out[x] = -rate_out * nu[x]
    for y in range(act_lo, act_hi):
        wy = wl[y] * mu[y]
        if wy == 0.0:
            continue
        for x in range(0, n - y):
            out[x + y] += wy * nu[x]
    # lam_a(y) mu(y) mu(z) moves the first point by y + z
    for y in range(act_lo, act_hi):
        wy = wa[y] * mu[y]
        if wy == 0.0:
            continue
        for z in range(1, nm):
            wz = wy * mu[z]
            if wz == 0.0:
                continue
            for x in range(0, n - y - z):
                out[x + y + z] += wz * nu[x]
    mu_tot = 0.0
    for z in range(1, nm):
        mu_tot += mu[z]
    gain_total = 0.0
    for y in range(act_lo, act_hi):
        gain_total += (wl[y] + wa[y] * mu_tot) * mu[y]
    gain_total *= tot
    kept = 0.0
    for x in range(n):
        kept += out[x]
    return gain_total - (kept + rate_out * tot)


@dataclass
class EpochTrajectory:
    """Recorded states and diagnostics of one ODE run.

    ``mu``/``nu`` hold series (index x/h) at the recorded times; G, H, L are
    (times x s-grid) arrays.
    """

    t: np.ndarray
    h: float
    mu: np.ndarray
    nu: np.ndarray | None
    s_grid: np.ndarray
    G: np.ndarray
    H: np.ndarray
    L: np.ndarray | None
    H0: np.ndarray          # H_t(0) per recorded time
    leak_mu: np.ndarray
    leak_nu: np.ndarray | None
    d_min: float
    d_max: float

    def measure_at(self, i: int) -> GridMeasure:
        return GridMeasure(self.h, self.h, self.mu[i, 1:], float(self.leak_mu[i]))

    def first_point_at(self, i: int) -> GridMeasure:
        if self.nu is None:
            raise ValueError("first-point law was not evolved")
        return GridMeasure(self.h, 0.0, self.nu[i], float(self.leak_nu[i]))

    def to_csv(self, path, case: CaseTag | None = None) -> None:
        """Columns t, s, G, H, L, drift (drift of the interval invariant when ``case`` is given)."""
        drift = None
        if case is not None:
            inv = _interval_invariant(self, case)
            drift = np.abs(inv / inv[0] - 1.0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "s", "G", "H", "L", "drift"])
            for i, t in enumerate(self.t):
                for j, s in enumerate(self.s_grid):
                    w.writerow([_fmt(t), _fmt(s), _fmt(self.G[i, j]), _fmt(self.H[i, j]),
                                _fmt(self.L[i, j]) if self.L is not None else "",
                                _fmt(drift[i, j]) if drift is not None else ""])


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _prepare(mu0: GridMeasure, spec: RateSpec, x_max: float | None):
    h = mu0.h
    if abs(mu0.offset / h - round(mu0.offset / h)) > 1e-9:
        raise ValueError("mu0 must sit on the lattice h Z")
    x_max = mu0.x_max if x_max is None else float(x_max)
    n = int(round(x_max / h)) + 1
    mu = np.zeros(n)
    src = mu0.series()[:n]
    mu[:src.shape[0]] = src
    x = h * np.arange(n)
    ll, lr, la = spec.evaluate(x)
    ll[0] = lr[0] = la[0] = 0.0
    act = np.flatnonzero(ll + lr + la > 0)
    lo, hi = (int(act[0]), int(act[-1]) + 1) if act.size else (0, 0)
    return h, mu, x, ll, lr, la, lo, hi


def evolve_epoch_ode(mu0: GridMeasure, nu0: GridMeasure | None, spec: RateSpec, t_end: float,
                     dt: float, s_grid=None, x_max: float | None = None, nu_x_max: float | None = None,
                     record_every: int = 10) -> EpochTrajectory:
    """Fixed-step RK4 from 0 to ``t_end``; states recorded every ``record_every`` steps."""
    if dt <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    if dt * spec.sup_norm > 0.1 + 1e-12:
        raise ValueError(f"dt*|lambda|_inf = {dt * spec.sup_norm:g} exceeds 0.1")
    s_grid = np.geomspace(0.05, 10.0, 64) if s_grid is None else np.asarray(s_grid, dtype=float)
    h, mu, x, ll, lr, la, lo, hi = _prepare(mu0, spec, x_max)
    lam = ll + lr + la
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a multiple of dt")
    with_nu = nu0 is not None
    if with_nu:
        if nu0.offset != 0.0 and abs(nu0.offset / h - round(nu0.offset / h)) > 1e-9:
            raise ValueError("nu0 must sit on the lattice h Z")
        nmax = nu_x_max if nu_x_max is not None else h * (x.shape[0] - 1)
        nn = int(round(nmax / h)) + 1
        nu = np.zeros(nn)
        k0 = int(round(nu0.offset / h))
        nu[k0:k0 + nu0.mass.shape[0]] = nu0.mass[:max(0, nn - k0)]
        xn = h * np.arange(nn)
    else:
        nu = np.zeros(1)
        xn = np.zeros(1)

    active = np.zeros(x.shape[0], dtype=bool)
    active[lo:hi] = True
    E = np.exp(-np.multiply.outer(s_grid, x))
    EH = E * active
    En = np.exp(-np.multiply.outer(s_grid, xn)) if with_nu else None

    rec_t, rec_mu, rec_nu, rec_lm, rec_ln = [], [], [], [], []

    def record(t, mu, nu, lm, ln):
        rec_t.append(t)
        rec_mu.append(mu.copy())
        rec_lm.append(lm)
        if with_nu:
            rec_nu.append(nu.copy())
            rec_ln.append(ln)

    k_mu = [np.empty_like(mu) for _ in range(4)]
    k_nu = [np.empty_like(nu) for _ in range(4)]

    def deriv(m, v, km, kn):
        lm = _mu_rhs(m, lam, ll, lr, la, lo, hi, km)
        ln = 0.0
        if with_nu:
            ln = _nu_rhs(v, m, ll, la, lo, hi, kn)
        return lm, ln

    leak_m = 0.0
    leak_n = 0.0
    record(0.0, mu, nu, leak_m, leak_n)
    for step in range(1, n_steps + 1):
        a1 = deriv(mu, nu, k_mu[0], k_nu[0])
        a2 = deriv(mu + 0.5 * dt * k_mu[0], nu + 0.5 * dt * k_nu[0], k_mu[1], k_nu[1])
        a3 = deriv(mu + 0.5 * dt * k_mu[1], nu + 0.5 * dt * k_nu[1], k_mu[2], k_nu[2])
        a4 = deriv(mu + dt * k_mu[2], nu + dt * k_nu[2], k_mu[3], k_nu[3])
        mu = mu + (dt / 6.0) * (k_mu[0] + 2.0 * k_mu[1] + 2.0 * k_mu[2] + k_mu[3])
        leak_m += (dt / 6.0) * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        if with_nu:
            nu = nu + (dt / 6.0) * (k_nu[0] + 2.0 * k_nu[1] + 2.0 * k_nu[2] + k_nu[3])
            leak_n += (dt / 6.0) * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
        low = mu.min()
        if with_nu:
            low = min(low, nu.min())
        if low < -1e-8:
            raise StepSizeError(f"negative mass {low:.3g} at t={step * dt:g}; reduce dt")
        if step % record_every == 0 or step == n_steps:
            record(step * dt, mu, nu, leak_m, leak_n)

    M = np.array(rec_mu)
    N = np.array(rec_nu) if with_nu else None
    return EpochTrajectory(
        t=np.array(rec_t), h=h, mu=M, nu=N, s_grid=s_grid,
        G=M @ E.T, H=M @ EH.T, L=(N @ En.T) if with_nu else None,
        H0=M[:, active].sum(axis=1), leak_mu=np.array(rec_lm),
        leak_nu=np.array(rec_ln) if with_nu else None, d_min=spec.d_min, d_max=spec.d_max)


def _c(gamma):
    return (gamma + 2.0) / (gamma + 1.0)


def _interval_invariant(traj: EpochTrajectory, case: CaseTag) -> np.ndarray:
    G, H = traj.G, traj.H
    if np.any(G >= 1.0):
        raise ValueError("G_t(s) >= 1: s too small for the invariant at this precision")
    if case.kind == "I":
        # 1 - G_t = (1 - G_0) e^{H_0 - H_t}
        return (1.0 - G) * np.exp(H)
    if case.kind == "II":
        g = case.gamma
        return np.exp(-_c(g) * H) * (g + 1.0 + G) / (1.0 - G)
    raise ValueError("no conserved functional for general rates")


def _leftmost_invariant(traj: EpochTrajectory, case: CaseTag) -> np.ndarray:
    if traj.L is None:
        raise ValueError("first-point law was not evolved")
    G, H, L = traj.G, traj.H, traj.L
    H0 = traj.H0[:, None]
    if case.kind == "I":
        if case.gamma is None:
            raise ValueError("leftmost functional needs lambda_r = gamma lambda_l")
        return L * np.exp((H - H0) / (1.0 + case.gamma))
    if case.kind == "II" and case.gamma == 0.0:
        if np.any(G >= 1.0):
            raise ValueError("G_t(s) >= 1: s too small for the invariant at this precision")
        return L / (np.sqrt(1.0 - G * G) * np.exp(H0))
    raise ValueError("no leftmost functional for these rates")


def invariant_drift(traj: EpochTrajectory, case: CaseTag, s_grid=None, which: str = "interval") -> float:
    """Max over recorded t and s of |I_t(s)/I_0(s) - 1| for the case's conserved functional."""
    if s_grid is not None and not np.array_equal(np.asarray(s_grid, dtype=float), traj.s_grid):
        raise ValueError("s-grid differs from the trajectory's")
    inv = _interval_invariant(traj, case) if which == "interval" else _leftmost_invariant(traj, case)
    return float(np.max(np.abs(inv / inv[0] - 1.0)))


def closed_endpoint(traj: EpochTrajectory, case: CaseTag) -> dict:
    """G_inf (and L_inf when available) predicted from the t = 0 data alone."""
    G0, H0 = traj.G[0], traj.H[0]
    if case.kind == "I":
        Ginf = 1.0 - (1.0 - G0) * np.exp(H0)
    elif case.kind == "II":
        g = case.gamma
        K = np.exp(-_c(g) * H0) * (g + 1.0 + G0) / (1.0 - G0)
        Ginf = (K - (g + 1.0)) / (K + 1.0)
    else:
        raise ValueError("no closed endpoint for general rates")
    out = {"G": Ginf}
    if traj.L is not None:
        L0 = traj.L[0]
        h00 = traj.H0[0]
        if case.kind == "I" and case.gamma is not None:
            out["L"] = L0 * np.exp((H0 - h00) / (1.0 + case.gamma))
        elif case.kind == "II" and case.gamma == 0.0:
            out["L"] = L0 * np.sqrt((1.0 - Ginf ** 2) / (1.0 - G0 ** 2)) * np.exp(-h00)
    return out


def endpoint_check(traj: EpochTrajectory, analytic_endpoint) -> dict:
    """Sup-s distances between the final G (and L) and the predicted endpoint.

    ``analytic_endpoint`` is a CaseTag (closed forms from the t = 0 data) or
    a dict with arrays 'G' and optionally 'L'.
    """
    ref = closed_endpoint(traj, analytic_endpoint) if isinstance(analytic_endpoint, CaseTag) \
        else analytic_endpoint
    out = {"G": float(np.max(np.abs(traj.G[-1] - ref["G"]))), "H0_end": float(traj.H0[-1])}
    if "L" in ref and traj.L is not None:
        out["L"] = float(np.max(np.abs(traj.L[-1] - ref["L"])))
    return out
