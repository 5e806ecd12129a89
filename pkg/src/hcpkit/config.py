"""Experiment configuration: YAML file, schema validation with line numbers."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field

import yaml

from .model import (PRESETS, EpochSchedule, east_schedule, explicit_schedule, geometric_schedule,
                    linear_schedule, validate_schedule)
from .spp import PRESET_KINDS

SEED_ENV = "HCPKIT_SEED"
OUTPUTS = ("interval_law", "leftmost", "ode_check", "oracle", "limit_compare")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


# key -> (check, description, default); a dict value means a nested section
SCHEMA = {
    "schema_version": (_int, "integer", 1),
    "model": {
        "preset": (lambda v: v in PRESETS, f"one of {PRESETS}", None),
        "params": (lambda v: isinstance(v, dict), "mapping", {}),
    },
    "initial_law": {
        "kind": (lambda v: v in PRESET_KINDS[:-1], f"one of {PRESET_KINDS[:-1]}", None),
        "params": (lambda v: isinstance(v, dict), "mapping", {}),
        "h": (lambda v: _num(v) and v > 0, "positive number", 1.0),
        "x_max": (lambda v: _num(v) and v >= 1, "number >= 1", 4096),
    },
    "schedule": {
        "kind": (lambda v: v in ("linear", "east", "geometric", "explicit"),
                 "one of linear, east, geometric, explicit", "linear"),
        "a": (_num, "number", None),
        "values": (lambda v: isinstance(v, list) and all(_num(x) for x in v), "list of numbers", None),
        "horizon": (lambda v: _int(v) and v >= 2, "integer >= 2", 64),
        "acknowledge_divergence": (lambda v: isinstance(v, bool), "boolean", False),
    },
    "topology": {
        "kind": (lambda v: v in ("torus", "halfline"), "torus or halfline", "torus"),
        "size": (lambda v: _int(v) and v >= 1, "integer >= 1", None),
    },
    "epochs": (lambda v: _int(v) and v >= 1, "integer >= 1", None),
    "replicas": (lambda v: _int(v) and v >= 1, "integer >= 1", 1),
    "seed": (lambda v: _int(v) and 0 <= v < 2**64, "integer in [0, 2^64)", None),
    "s_grid": {
        "n": (lambda v: _int(v) and v >= 1, "integer >= 1", 64),
        "lo": (lambda v: _num(v) and v > 0, "positive number", 0.05),
        "hi": (lambda v: _num(v) and v > 0, "positive number", 10.0),
    },
    "outputs": (lambda v: isinstance(v, list) and all(x in OUTPUTS for x in v),
                f"list drawn from {OUTPUTS}", ["interval_law"]),
    "tolerances": {
        "laplace_sup": (lambda v: _num(v) and v > 0, "positive number", 0.02),
        "ks_slack": (lambda v: _num(v) and v >= 0, "nonnegative number", 0.005),
        "leftmost_sup": (lambda v: _num(v) and v > 0, "positive number", 0.03),
        "limit_sup": (lambda v: v is None or (_num(v) and v > 0), "positive number or null", None),
        "ode_drift": (lambda v: _num(v) and v > 0, "positive number", 1e-6),
        "ode_tv": (lambda v: _num(v) and v > 0, "positive number", 1e-5),
    },
    "ode": {
        "dt": (lambda v: _num(v) and v > 0, "positive number", 0.01),
        "t_end": (lambda v: _num(v) and v > 0, "positive number", 30.0),
        "x_max": (lambda v: v is None or (_num(v) and v >= 1), "number >= 1 or null", None),
    },
    "workers": (lambda v: _int(v) and v >= 1, "integer >= 1", 1),
    "output_dir": (lambda v: isinstance(v, str) and v != "", "nonempty string", "out"),
}

REQUIRED = {("model", "preset"), ("initial_law", "kind"), ("topology", "size"), ("epochs",), ("seed",)}


def _marks(node, path=(), out=None):
    """Map key paths to (line, column) of the key (1-based)."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = (k.start_mark.line + 1, k.start_mark.column + 1)
            out[p + ("<value>",)] = (v.start_mark.line + 1, v.start_mark.column + 1)
            _marks(v, p, out)
    return out


@dataclass
class ExperimentConfig:
    data: dict
    source: str
    marks: dict = field(default_factory=dict, repr=False)

    def where(self, path) -> str:
        line, col = self.marks.get(tuple(path), (1, 1))
        return f"{self.source}:{line}:{col}"

    def __getitem__(self, key):
        return self.data[key]

    def schedule(self) -> EpochSchedule:
        return build_schedule(self.data["schedule"], self.data["epochs"])


def build_schedule(sec: dict, epochs: int) -> EpochSchedule:
    horizon = max(sec.get("horizon", 64), epochs + 1)
    kind = sec["kind"]
    if kind == "linear":
        return linear_schedule(horizon)
    if kind == "east":
        return east_schedule(horizon)
    if kind == "geometric":
        return geometric_schedule(sec["a"], horizon)
    return explicit_schedule(sec["values"], sec.get("acknowledge_divergence", False))


def validate_config(data, marks: dict, source: str = "<config>") -> dict:
    """Return the config with defaults filled in, or raise ConfigError listing every problem."""
    errors = []

    def where(path, value=False):
        line, col = marks.get(path + (("<value>",) if value else ()), marks.get(path, (1, 1)))
        return f"{source}:{line}:{col}"

    if not isinstance(data, dict):
        raise ConfigError([f"{source}:1:1: the config must be a mapping of sections"])

    def walk(d, schema, path):
        out = {}
        for key in d:
            if key not in schema:
                sect = ".".join(path) or "top level"
                errors.append(f"{where(path + (key,))}: unknown key {key!r} in {sect} "
                              f"(allowed: {', '.join(schema)})")
        for key, spec in schema.items():
            p = path + (key,)
            if isinstance(spec, dict):
                sub = d.get(key, {})
                if sub is None:
                    sub = {}
                if not isinstance(sub, dict):
                    errors.append(f"{where(p, True)}: section {'.'.join(p)} must be a mapping")
                    continue
                out[key] = walk(sub, spec, p)
                continue
            check, desc, default = spec
            if key not in d:
                if p in REQUIRED:
                    errors.append(f"{where(path)}: missing required key {'.'.join(p)}")
                out[key] = copy.deepcopy(default)
                continue
            v = d[key]
            if not check(v):
                errors.append(f"{where(p, True)}: {'.'.join(p)} must be {desc}, got {v!r}")
            out[key] = v
        return out

    cfg = walk(data, SCHEMA, ())
    if errors:
        raise ConfigError(errors)

    sch = cfg["schedule"]
    if sch["kind"] == "geometric":
        a = sch["a"]
        if a is None:
            errors.append(f"{where(('schedule',))}: geometric schedule needs schedule.a")
        elif not 1 < a <= 2:
            rule = "(A2): 2*d[n] >= d[n+1] requires a <= 2" if a > 2 else "a must exceed 1"
            errors.append(f"{where(('schedule', 'a'), True)}: geometric ratio a={a!r} not in (1, 2]; {rule}")
    if sch["kind"] == "explicit" and not sch["values"]:
        errors.append(f"{where(('schedule',))}: explicit schedule needs schedule.values")
    if not errors:
        report = validate_schedule(build_schedule(sch, cfg["epochs"]))
        for v in report.violations:
            errors.append(f"{where(('schedule',))}: schedule invalid, {v}")
        if sch["kind"] == "explicit" and len(sch["values"]) < cfg["epochs"] + 1 and not report.violations:
            errors.append(f"{where(('schedule', 'values'), True)}: explicit schedule needs at least "
                          f"epochs+1={cfg['epochs'] + 1} values")
    if cfg["s_grid"]["lo"] >= cfg["s_grid"]["hi"]:
        errors.append(f"{where(('s_grid',))}: s_grid.lo must be below s_grid.hi")
    if "leftmost" in cfg["outputs"] and cfg["topology"]["kind"] != "halfline":
        errors.append(f"{where(('outputs',), True)}: leftmost output needs topology.kind: halfline")
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate; the seed may be overridden by argument or the HCPKIT_SEED variable."""
    path = str(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError([f"{path}: cannot read config ({e.strerror})"]) from None
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else path
        raise ConfigError([f"{loc}: YAML syntax error: {getattr(e, 'problem', e)}"]) from None
    marks = _marks(node) if node is not None else {}
    cfg = validate_config(data, marks, path)
    env = os.environ.get(SEED_ENV)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    elif env:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise ConfigError([f"{SEED_ENV}={env!r} is not an integer"]) from None
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError([f"seed {cfg['seed']} outside [0, 2^64)"])
    return ExperimentConfig(cfg, path, marks)
