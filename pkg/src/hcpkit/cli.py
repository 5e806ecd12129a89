"""Command line: run / validate / compare / presets.

Exit codes: 0 ok, 1 a requested check failed, 2 configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import ConfigError, load_config
from .experiment import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, execute
from .model import PRESETS
from .report import read_laplace_csv
from .spp import PRESET_KINDS

EXAMPLE_CONFIG = """\
model:
  preset: ising_t0          # east | paste_all | ising_t0 | custom
  params: {}                # east: {left_rate: 1.0}; custom: {left: .., right: .., ann: ..}
initial_law:
  kind: delta               # delta | geometric | zeta_tail | truncated_pareto
  params: {d0: 1}
schedule:
  kind: linear              # linear | east | geometric (needs a in (1, 2]) | explicit (values)
topology:
  kind: torus               # torus | halfline
  size: 10000
epochs: 3
replicas: 1
seed: 12345
outputs: [interval_law, oracle]
output_dir: out
"""


def _parser():
    p = argparse.ArgumentParser(prog="hcpkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment and write CSVs plus report.json")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--out")
    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("--config", required=True)
    v.add_argument("--seed", type=int)
    c = sub.add_parser("compare", help="distances between two Laplace CSV files")
    c.add_argument("empirical")
    c.add_argument("reference")
    c.add_argument("--tolerance", type=float)
    c.add_argument("--out", help="write the distances as JSON here")
    sub.add_parser("presets", help="list presets and print an example config")
    return p


def _compare(args) -> int:
    try:
        a = read_laplace_csv(args.empirical)
        b = read_laplace_csv(args.reference)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    # a single reference epoch (e.g. a limit law) applies to every empirical epoch
    single = next(iter(b.values())) if len(b) == 1 else None
    result, ok = {}, True
    for epoch, (s, v, _) in a.items():
        ref = b.get(epoch, single)
        if ref is None:
            continue
        if not np.array_equal(s, ref[0]):
            print(f"error: s-grid mismatch at epoch {epoch}", file=sys.stderr)
            return EXIT_CONFIG
        sup = float(np.max(np.abs(v - ref[1])))
        result[epoch] = sup
        if args.tolerance is not None and sup > args.tolerance:
            ok = False
    if not result:
        print("error: no common epochs", file=sys.stderr)
        return EXIT_CONFIG
    text = json.dumps({"laplace_sup": result, "tolerance": args.tolerance, "passed": ok}, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.cmd == "presets":
        print("rate presets:", ", ".join(PRESETS))
        print("initial laws:", ", ".join(PRESET_KINDS[:-1]))
        print("\nexample config:\n")
        print(EXAMPLE_CONFIG)
        return EXIT_OK
    if args.cmd == "compare":
        return _compare(args)
    try:
        cfg = load_config(args.config, args.seed)
        if args.cmd == "validate":
            print(f"{args.config}: ok (seed {cfg['seed']})")
            return EXIT_OK
        code, report = execute(cfg, args.out, args.workers)
    except ConfigError as e:
        for line in e.errors:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    for ch in report["checks"]:
        mark = "PASS" if ch["passed"] else "FAIL"
        print(f"{mark} {ch['name']}: {ch['value']:.3g} (tolerance {ch['tolerance']:.3g})")
    print(f"report written to {args.out or cfg['output_dir']}/report.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
