"""Core model types: epoch schedules, rate specifications, configurations."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

DEFAULT_HORIZON = 64
RATE_TABLE_SIZE = 257


# --------------------------------------------------------------------------
# schedules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochSchedule:
    """Lengths d[1], d[2], ... stored 0-based in ``d``; ``kind`` records provenance.

    Generated schedules (linear, east, geometric) diverge by construction; only
    explicit lists are subjected to the finite-prefix divergence proxy unless
    ``acknowledge_divergence`` is set.
    """

    d: tuple
    kind: str = "explicit"
    acknowledge_divergence: bool = False

    @property
    def horizon(self) -> int:
        return len(self.d)

    def __getitem__(self, n: int) -> float:
        """1-based access: ``schedule[1] == 1``."""
        if not 1 <= n <= len(self.d):
            raise IndexError(f"epoch {n} outside materialized horizon {len(self.d)}")
        return self.d[n - 1]

    def ratio(self, n: int) -> float:
        return self[n + 1] / self[n]

    def is_integer(self) -> bool:
        return all(float(x).is_integer() for x in self.d)


def linear_schedule(horizon: int = DEFAULT_HORIZON) -> EpochSchedule:
    return EpochSchedule(tuple(float(n) for n in range(1, horizon + 1)), "linear")


def east_schedule(horizon: int = DEFAULT_HORIZON) -> EpochSchedule:
    """d = 1, then 2**(n-2) + 1 for n >= 2."""
    d = [1.0] + [float(2 ** (n - 2) + 1) for n in range(2, horizon + 1)]
    return EpochSchedule(tuple(d), "east")


def geometric_schedule(a: float, horizon: int = DEFAULT_HORIZON) -> EpochSchedule:
    a = float(a)
    d = [1.0]
    for _ in range(horizon - 1):
        d.append(d[-1] * a)
    return EpochSchedule(tuple(d), f"geometric({a!r})")


def explicit_schedule(values: Sequence[float], acknowledge_divergence: bool = False) -> EpochSchedule:
    return EpochSchedule(tuple(float(v) for v in values), "explicit", acknowledge_divergence)


@dataclass(frozen=True)
class Violation:
    rule: str
    index: int
    message: str

    def __str__(self):
        return f"{self.rule} at n={self.index}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.valid

    def __str__(self):
        if self.valid:
            return "valid"
        return "; ".join(str(v) for v in self.violations)


def validate_schedule(schedule: EpochSchedule) -> ValidationReport:
    """Check normalization, monotonicity, (A2) and the divergence proxy (A3)."""
    d = schedule.d
    if len(d) == 0:
        raise ValueError("schedule must be nonempty")
    out = []
    if d[0] != 1.0:
        out.append(Violation("normalization", 1, f"d[1] must be 1, got {d[0]!r}"))
    for i in range(len(d)):
        n = i + 1
        if not (math.isfinite(d[i]) and d[i] > 0):
            out.append(Violation("positivity", n, f"d[{n}]={d[i]!r} is not a positive real"))
            continue
        if i + 1 < len(d):
            if not d[i + 1] > d[i]:
                out.append(Violation("monotonicity", n + 1,
                                     f"d[{n + 1}]={d[i + 1]!r} is not larger than d[{n}]={d[i]!r}"))
            if 2.0 * d[i] < d[i + 1]:
                out.append(Violation("(A2)", n,
                                     f"2*d[{n}]={2.0 * d[i]!r} < d[{n + 1}]={d[i + 1]!r} violates (A2)"))
    if schedule.kind == "explicit" and not schedule.acknowledge_divergence and len(d) > 1:
        need = d[0] * 2.0 ** (len(d) / 4.0)
        if d[-1] < need:
            out.append(Violation("(A3)", len(d),
                                 f"d[{len(d)}]={d[-1]!r} < d[1]*2^(horizon/4)={need!r}; "
                                 "divergence unverified (set acknowledge_divergence)"))
    return ValidationReport(tuple(out))


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseTag:
    """``kind`` is 'I', 'II' or 'general'.

    For case I, ``gamma`` is the ratio lambda_r/lambda_l when it is constant
    (used by the leftmost-point law) and None otherwise.
    """

    kind: str
    gamma: float | None = None

    def __str__(self):
        if self.kind == "general":
            return "General"
        if self.gamma is None:
            return f"Case{self.kind}"
        return f"Case{self.kind}(gamma={self.gamma:g})"


GENERAL = CaseTag("general")


@numba.njit(cache=True)
def rate_at(d, grid0, step, table):
    """Piecewise-linear table lookup; zero outside [grid0, grid0 + (K-1)*step)."""
    k = table.shape[0]
    if not (d >= grid0):
        return 0.0
    u = (d - grid0) / step
    if u >= k - 1:
        return 0.0
    i = int(u)
    w = u - i
    if w == 0.0:
        return table[i]
    return table[i] * (1.0 - w) + table[i + 1] * w


@numba.njit(cache=True)
def _rates_many(ds, grid0, step, tl, tr, ta, out_l, out_r, out_a):
    for i in range(ds.shape[0]):
        out_l[i] = rate_at(ds[i], grid0, step, tl)
        out_r[i] = rate_at(ds[i], grid0, step, tr)
        out_a[i] = rate_at(ds[i], grid0, step, ta)


RateFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class RateSpec:
    """Rates of one epoch, tabulated on a uniform grid over [d_min, d_max].

    The simulator and the ODE both read rates through :func:`rate_at`, so they
    see bit-identical values.  Closures, if any, are kept for reference only.
    """

    d_min: float
    d_max: float
    table_left: np.ndarray
    table_right: np.ndarray
    table_ann: np.ndarray
    case_tag: CaseTag
    closures: tuple = field(default=(None, None, None), repr=False)

    def __post_init__(self):
        for t in (self.table_left, self.table_right, self.table_ann):
            t.setflags(write=False)

    @property
    def step(self) -> float:
        return (self.d_max - self.d_min) / (self.table_left.shape[0] - 1)

    @property
    def gamma(self) -> float | None:
        return self.case_tag.gamma

    @property
    def sup_norm(self) -> float:
        tot = self.table_left + self.table_right + self.table_ann
        return float(tot.max())

    def evaluate(self, d) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lambda_left, lambda_right, lambda_ann) at lengths ``d``."""
        ds = np.atleast_1d(np.asarray(d, dtype=float))
        out = np.empty((3, ds.shape[0]))
        _rates_many(ds, self.d_min, self.step, self.table_left, self.table_right,
                    self.table_ann, out[0], out[1], out[2])
        return out[0], out[1], out[2]

    def total(self, d) -> np.ndarray:
        ll, lr, la = self.evaluate(d)
        return ll + lr + la

    def satisfies_a1(self) -> bool:
        """Total rate strictly positive on the whole active range."""
        tot = self.table_left + self.table_right + self.table_ann
        return bool(np.all(tot[:-1] > 0))

    def satisfies_a2(self) -> bool:
        return 2.0 * self.d_min >= self.d_max

    def scaled(self, c: float) -> "RateSpec":
        """Same spec with every rate multiplied by ``c`` (a time change)."""
        return RateSpec(self.d_min, self.d_max, self.table_left * c, self.table_right * c,
                        self.table_ann * c, self.case_tag)


def _tabulate(rate, grid: np.ndarray, name: str) -> np.ndarray:
    if rate is None:
        vals = np.zeros_like(grid)
    elif callable(rate):
        vals = np.asarray(rate(grid.copy()), dtype=float) * np.ones_like(grid)
    elif np.isscalar(rate):
        vals = np.full_like(grid, float(rate))
    else:
        pts = np.asarray(rate, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"{name}: a rate table must be a list of [length, value] pairs")
        vals = np.interp(grid, pts[:, 0], pts[:, 1])
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{name}: rate is unbounded or not finite on [d_min, d_max)")
    if np.any(vals < 0):
        raise ValueError(f"{name}: rate is negative on [d_min, d_max)")
    return vals


def rate_spec_from(left, right, ann, d_min: float, d_max: float,
                   tol: float = 1e-12, n_grid: int = RATE_TABLE_SIZE) -> RateSpec:
    """Build a RateSpec from closures, constants or [length, value] tables."""
    if not (0 < d_min < d_max):
        raise ValueError(f"need 0 < d_min < d_max, got {d_min!r}, {d_max!r}")
    grid = np.linspace(d_min, d_max, n_grid)
    tl = _tabulate(left, grid, "lambda_left")
    tr = _tabulate(right, grid, "lambda_right")
    ta = _tabulate(ann, grid, "lambda_ann")
    # the value at d_max is never used (half-open range) but keep the table continuous
    spec = RateSpec(float(d_min), float(d_max), tl, tr, ta, GENERAL, (left, right, ann))
    return RateSpec(spec.d_min, spec.d_max, tl, tr, ta, classify_case(spec, tol),
                    (left, right, ann))


PRESETS = ("east", "paste_all", "ising_t0", "custom")


def make_rate_spec(preset: str, epoch_index: int, schedule: EpochSchedule,
                   params: dict | None = None) -> RateSpec:
    """Rates for epoch ``epoch_index`` on [d[n], d[n+1]).

    east: ``params['left_rate']`` (constant, table or callable ``f(d, n)``).
    custom: ``params['left'|'right'|'ann']``, each constant, table or ``f(d)``.
    ``params['expect_case']`` ('I', 'II' or 'general') is checked when given.
    """
    params = dict(params or {})
    n = int(epoch_index)
    if n < 1 or n + 1 > schedule.horizon:
        raise ValueError(f"epoch {n} needs d[{n + 1}], beyond the schedule horizon {schedule.horizon}")
    d_min, d_max = schedule[n], schedule[n + 1]
    tol = params.pop("tol", 1e-12)
    expect = params.pop("expect_case", None)
    if preset == "ising_t0":
        spec = rate_spec_from(0.0, 0.0, 1.0, d_min, d_max, tol)
        want = "II"
    elif preset == "paste_all":
        spec = rate_spec_from(1.0, 1.0, 0.0, d_min, d_max, tol)
        want = "I"
    elif preset == "east":
        if "left_rate" not in params:
            raise ValueError("east preset needs params['left_rate'] (user-supplied lambda_left)")
        lr = params.pop("left_rate")
        left = (lambda d, f=lr: f(d, n)) if callable(lr) else lr
        spec = rate_spec_from(left, 0.0, 0.0, d_min, d_max, tol)
        want = "I"
    elif preset == "custom":
        try:
            left, right, ann = params.pop("left"), params.pop("right"), params.pop("ann")
        except KeyError as e:
            raise ValueError(f"custom preset needs params['left'], ['right'], ['ann']; missing {e}") from None
        spec = rate_spec_from(left, right, ann, d_min, d_max, tol)
        want = None
    else:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    if params:
        raise ValueError(f"unused parameters for preset {preset!r}: {sorted(params)}")
    if want is not None and spec.case_tag.kind != want:
        raise ValueError(f"preset {preset!r} produced {spec.case_tag}, expected Case{want}")
    if expect is not None and spec.case_tag.kind != expect:
        raise ValueError(f"rates classify as {spec.case_tag}, incompatible with expected case {expect!r}")
    return spec


class PresetRates:
    """Picklable per-epoch rate factory ``n -> RateSpec`` with a small cache."""

    def __init__(self, preset: str, schedule: EpochSchedule, params: dict | None = None):
        self.preset = preset
        self.schedule = schedule
        self.params = dict(params or {})
        self._cache = {}

    def __call__(self, n: int) -> RateSpec:
        if n not in self._cache:
            self._cache[n] = make_rate_spec(self.preset, n, self.schedule, self.params)
        return self._cache[n]

    def __getstate__(self):
        return {"preset": self.preset, "schedule": self.schedule, "params": self.params, "_cache": {}}


def classify_case(spec: RateSpec, tol: float = 1e-12) -> CaseTag:
    """Decide between case I, case II(gamma) and general.

    ``tol`` is relative to the sup norm of the rates, which makes the answer
    invariant under a common time rescaling.
    """
    ll = np.asarray(spec.table_left[:-1])
    lr = np.asarray(spec.table_right[:-1])
    la = np.asarray(spec.table_ann[:-1])
    scale = float(np.max(ll + lr + la)) if ll.size else 0.0
    if scale == 0.0:
        return CaseTag("I", None)
    thr = tol * scale
    if np.max(np.abs(la)) <= thr:
        g = None
        if np.max(ll) > thr:
            g_ls = float(np.dot(lr, ll) / np.dot(ll, ll))
            if np.max(np.abs(lr - g_ls * ll)) <= thr:
                g = max(g_ls, 0.0)
        return CaseTag("I", g)
    s = ll + lr
    g = max(float(np.dot(s, la) / np.dot(la, la)), 0.0)
    if np.max(np.abs(s - g * la)) <= thr:
        # snap to a clean value when the table is an exact multiple
        r = round(g, 12)
        return CaseTag("II", r if abs(r - g) <= 1e-12 * max(1.0, g) else g)
    return GENERAL


# --------------------------------------------------------------------------
# configurations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Torus:
    L: float

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError("torus circumference must be positive and finite")


@dataclass(frozen=True)
class HalfLine:
    pass


@dataclass(frozen=True)
class Window:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("window needs a < b")


@dataclass(frozen=True, eq=False)
class Configuration:
    """Sorted point positions plus a persistent identity per point.

    ``uid`` addresses random draws, so a point keeps its clocks when the array
    around it is truncated or compacted.  ``frontier`` (HalfLine only) is the
    array index of the rightmost point whose left neighbourhood is exact.
    """

    points: np.ndarray
    topology: object
    frontier: int | None = None
    uid: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        uid = np.arange(pts.shape[0], dtype=np.int64) if self.uid is None else \
            np.ascontiguousarray(self.uid, dtype=np.int64)
        object.__setattr__(self, "uid", uid)
        if uid.shape != pts.shape:
            raise ValueError("uid and points must have the same length")
        pts.setflags(write=False)
        uid.setflags(write=False)
        if pts.ndim != 1:
            raise ValueError("points must be one-dimensional")
        if pts.size > 1 and not np.all(np.diff(pts) > 0):
            raise ValueError("points must be strictly increasing")
        topo = self.topology
        if isinstance(topo, Torus):
            if pts.size and (pts[0] < 0 or pts[-1] >= topo.L):
                raise ValueError("torus points must lie in [0, L)")
        elif isinstance(topo, HalfLine):
            if pts.size == 0:
                raise ValueError("a half-line configuration needs a first point")
        elif isinstance(topo, Window):
            if pts.size and (pts[0] < topo.a or pts[-1] > topo.b):
                raise ValueError("window points must lie in [a, b]")
        else:
            raise TypeError(f"unknown topology {topo!r}")
        if self.frontier is not None:
            if not isinstance(topo, HalfLine):
                raise ValueError("a frontier only makes sense on a half-line")
            if not 0 <= self.frontier < max(pts.size, 1):
                raise ValueError("frontier index out of range")

    def __len__(self):
        return int(self.points.shape[0])

    def gaps(self) -> np.ndarray:
        """Finite domain lengths in index order; on the torus the wrap gap is last."""
        g = np.diff(self.points)
        if isinstance(self.topology, Torus) and len(self) >= 1:
            g = np.append(g, self.points[0] + self.topology.L - self.points[-1])
        return g

    def check_membership(self, d_min: float) -> None:
        """Raise unless every finite gap is at least ``d_min``."""
        g = self.gaps()
        if isinstance(self.topology, Torus) and len(self) == 1:
            g = g[:0]
        if g.size and g.min() < d_min:
            i = int(np.argmin(g))
            raise ValueError(f"configuration not in N({d_min:g}): gap {i} has length {g[i]!r}")
