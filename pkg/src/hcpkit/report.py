"""Distances between empirical and reference laws, and the fixed CSV formats."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import GridMeasure, laplace_of_grid
from .runner import EmpiricalSummary, empirical_laplace

DKW_ALPHA = 0.01
INTERVAL_HEADER = "epoch,z_bin_lo,z_bin_hi,mass\n"
LAPLACE_HEADER = "epoch,s,value,stderr\n"


def fmt(x) -> str:
    """17 significant digits; the same text on every IEEE platform."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def dkw_band(count: int, alpha: float = DKW_ALPHA) -> float:
    """Half-width eps with P(sup|F_n - F| > eps) <= alpha (Massart constant)."""
    if count <= 0:
        return math.inf
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * count))


@dataclass
class Distances:
    laplace_sup: float
    ks: float | None
    dkw_band: float | None
    count: int | None
    tolerance: float | None = None

    @property
    def passed(self) -> bool | None:
        if self.tolerance is None:
            return None
        return self.laplace_sup <= self.tolerance

    def as_dict(self) -> dict:
        d = {"laplace_sup": self.laplace_sup, "ks": self.ks, "dkw_band": self.dkw_band,
             "count": self.count}
        if self.tolerance is not None:
            d["tolerance"] = self.tolerance
            d["passed"] = self.passed
        return d


def _cdf_points(obj):
    """(atoms, cumulative mass at each atom, mass beyond) or None when no CDF is known."""
    if isinstance(obj, EmpiricalSummary):
        k, c = obj.histogram()
        return k * obj.bin_width, np.cumsum(c) / obj.count, 0.0
    if isinstance(obj, GridMeasure):
        return obj.sites, np.cumsum(obj.mass), obj.tail_mass
    return None


def ks_distance(a, b) -> float:
    """Sup distance between two CDFs that are step functions on known atoms.

    Empirical atoms are bin lower edges, which is exact for lattice summaries.
    """
    pa, pb = _cdf_points(a), _cdf_points(b)
    if pa is None or pb is None:
        raise TypeError("KS needs summaries or grid measures on both sides")
    xs = np.union1d(pa[0], pb[0])

    def F(p):
        atoms, cum, _ = p
        idx = np.searchsorted(atoms, xs * (1 + 1e-12) + 1e-300, side="right") - 1
        return np.where(idx >= 0, cum[np.maximum(idx, 0)], 0.0)

    return float(np.max(np.abs(F(pa) - F(pb)))) if xs.size else 0.0


def _laplace(obj, s):
    if isinstance(obj, EmpiricalSummary):
        return empirical_laplace(obj, s)
    if isinstance(obj, GridMeasure):
        return laplace_of_grid(obj, s)
    v = np.asarray(obj, dtype=float)
    if v.shape != s.shape:
        raise ValueError(f"Laplace values have shape {v.shape}, s-grid has {s.shape}")
    return v


def compare_report(empirical, reference, s_grid, tolerance: float | None = None) -> Distances:
    """Sup over the s-grid of the Laplace gap, KS distance and the DKW band.

    ``empirical`` is a summary (or any object accepted as reference);
    ``reference`` is a summary, a grid measure or Laplace values on ``s_grid``.
    Summaries must have been accumulated on exactly this grid.
    """
    s = np.asarray(s_grid, dtype=float)
    for obj in (empirical, reference):
        if isinstance(obj, EmpiricalSummary) and not np.array_equal(obj.s_grid, s):
            raise ValueError("s-grid mismatch between summary and requested grid")
    ga, gb = _laplace(empirical, s), _laplace(reference, s)
    sup = float(np.max(np.abs(ga - gb))) if s.size else 0.0
    ks = None
    if _cdf_points(empirical) is not None and _cdf_points(reference) is not None:
        ks = ks_distance(empirical, reference)
    count = empirical.count if isinstance(empirical, EmpiricalSummary) else None
    band = dkw_band(count) if count else None
    return Distances(sup, ks, band, count, tolerance)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def interval_rows(epoch, obj) -> list[str]:
    """Rows of the interval CSV for a summary (frequencies) or a grid measure (masses)."""
    if isinstance(obj, EmpiricalSummary):
        k, c = obj.histogram()
        w = obj.bin_width
        return [f"{epoch},{fmt(ki * w)},{fmt((ki + 1) * w)},{fmt(ci / obj.count)}\n"
                for ki, ci in zip(k.tolist(), c.tolist())]
    h = obj.h
    k0 = obj.offset / h
    if abs(k0 - round(k0)) < 1e-9:
        # same k*w edges as lattice summaries, so the two files diff cleanly
        k = round(k0) + np.arange(obj.mass.shape[0])
        lo, hi = k * h, (k + 1) * h
    else:
        lo = obj.sites
        hi = lo + h
    rows = [f"{epoch},{fmt(a)},{fmt(b)},{fmt(mi)}\n"
            for a, b, mi in zip(lo.tolist(), hi.tolist(), obj.mass.tolist()) if mi != 0.0]
    if obj.tail_mass > 0:
        rows.append(f"{epoch},{fmt(obj.x_max + h)},inf,{fmt(obj.tail_mass)}\n")
    return rows


def laplace_rows(epoch, s, value, stderr=None) -> list[str]:
    s = np.asarray(s, dtype=float)
    value = np.asarray(value, dtype=float)
    err = np.zeros_like(s) if stderr is None else np.broadcast_to(np.asarray(stderr, dtype=float), s.shape)
    return [f"{epoch},{fmt(a)},{fmt(b)},{fmt(c)}\n" for a, b, c in zip(s, value, err)]


def write_csv(path, header: str, rows) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(header)
        fh.writelines(rows)


def read_laplace_csv(path) -> dict:
    """epoch -> (s, value, stderr) arrays."""
    out = {}
    with open(path) as fh:
        head = fh.readline()
        if head != LAPLACE_HEADER:
            raise ValueError(f"{path}: not a Laplace CSV (header {head.strip()!r})")
        for ln, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{ln}: expected 4 columns")
            e = parts[0]
            out.setdefault(e, ([], [], []))
            for lst, v in zip(out[e], parts[1:]):
                lst.append(float(v))
    return {e: tuple(np.array(v) for v in t) for e, t in out.items()}
