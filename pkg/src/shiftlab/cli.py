"""Command-line entry point: ``shiftlab gen | run | gradcheck | report``.

Exit codes: 0 success, 2 validation failure (bad config, missing dataset,
broken data contract), 3 a scenario or gradient property did not hold.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .cumix import embeddings_to_json
from .harness.data import SyntheticSpec, gen_synthetic, write_dataset
from .harness.gradcheck import REGISTRY, gradcheck
from .harness.scenarios import RUNNERS, ConfigError, ContractError, run_scenario, write_report

EXIT_OK, EXIT_INVALID, EXIT_PROPERTY = 0, 2, 3


def _onda_ok(m):
    t = [m["time_to_90"][k] for k in sorted(m["time_to_90"], key=float)]
    return m["rel_gap_at_50"] <= 0.02 and all(a >= b for a, b in zip(t, t[1:]))


# headline property per scenario, checked after a run
PROPERTIES = {
    "latent": lambda m: m["target_acc_mda"] >= m["target_acc_bn"],
    "dg": lambda m: True,
    "onda": _onda_ok,
    "pda": lambda m: m["mu_l2_after"] < m["mu_l2_before"],
    "bat": lambda m: m["acc_a_after"] == m["acc_a_before"] and m["base_unchanged"],
    "mib": lambda m: m["old_gap_mib_vs_ft"] >= 20.0,
    "owr": lambda m: m["bdoc_gap"] > m["dnno_gap"],
    "zsl": lambda m: m["acc_cumix"] >= m["acc_agg"],
}


def _load_json(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def cmd_gen(args) -> int:
    cfg = _load_json(args.config)
    names = {f.name for f in fields(SyntheticSpec)}
    unknown = set(cfg) - names
    if unknown:
        raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
    if "scale_range" in cfg:
        cfg["scale_range"] = tuple(cfg["scale_range"])
    ds = gen_synthetic(SyntheticSpec(**cfg), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out / "dataset.txt")
    if ds.attributes is not None:
        (out / "embeddings.json").write_text(embeddings_to_json(range(ds.n_classes), ds.attributes))
    print(f"wrote {len(ds.y)} samples to {out / 'dataset.txt'}")
    return EXIT_OK


def cmd_run(args) -> int:
    report = run_scenario(args.scenario, _load_json(args.config), args.seed)
    path = write_report(report, args.out)
    ok = PROPERTIES[args.scenario](report.metrics)
    print(f"{args.scenario}: report at {path}; property {'holds' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_gradcheck(args) -> int:
    ops = sorted(REGISTRY) if args.op == "all" else [args.op]
    failed = False
    for op in ops:
        if op not in REGISTRY:
            raise ConfigError(f"unknown gradient check {op!r}; registered: {sorted(REGISTRY)}")
        rep = gradcheck(op, args.trials, args.tol, args.seed)
        failed |= not rep.passed
        print(f"{op:16s} trials={rep.trials} max_rel_err={rep.max_error:.3e} "
              f"{'PASS' if rep.passed else 'FAIL'}")
    return EXIT_PROPERTY if failed else EXIT_OK


def cmd_report(args) -> int:
    p = Path(args.path)
    if p.is_dir():
        p = p / "report.json"
    if not p.exists():
        raise ConfigError(f"report not found: {p}")
    doc = json.loads(p.read_text())
    print(f"scenario {doc['scenario']}  seed {doc['seed']}  version {doc['version']}")
    width = max(len(k) for k in doc["metrics"]) if doc["metrics"] else 0
    for k, v in doc["metrics"].items():
        if isinstance(v, float):
            v = f"{v:.4f}"
        print(f"  {k.ljust(width)}  {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shiftlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default="out"):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=out_default, help="output directory")

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    common(g)
    g.set_defaults(fn=cmd_gen)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("scenario", choices=sorted(RUNNERS))
    common(r)
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    c.add_argument("--op", default="all", help=f"one of {sorted(REGISTRY)} or 'all'")
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--tol", type=float, default=1e-6)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("report", help="pretty-print a run report")
    p.add_argument("path", help="report.json or its directory")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ContractError, ValueError, KeyError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
