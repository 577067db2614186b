"""Command line entry point for the pbef verbs simulate, estimate, avar, study and check.

Every verb reads the same JSON experiment config. ``--seed`` overrides the
config seed and results land in ``--out-dir``.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import PbefError
from .estimator import SolverOptions, solve_onelag, solve_simple
from .experiment import (ExperimentConfig, emit_report, generator_expansion_check, predicted_avar,
                         run_clt_check, run_estimation_study, run_lln_check)
from .functions import SmoothFunction
from .model import OrnsteinUhlenbeck
from .simulate import SamplePath, SamplingScheme, simulate_path


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    return cfg


def _write_rows(rows: list[dict], path: Path, fmt: str) -> Path:
    if fmt == "json":
        path = path.with_suffix(".json")
        path.write_text(json.dumps(rows, indent=2, sort_keys=True, default=float) + "\n")
        return path
    path = path.with_suffix(".csv")
    keys = list(rows[0]) if rows else []
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in (r[k] for k in keys)])
    return path


def cmd_simulate(args) -> int:
    cfg = _load(args)
    model, theta0, _ = cfg.build()
    n, delta = cfg.schedule[0]
    path = simulate_path(model, theta0, SamplingScheme(n, delta, cfg.substeps, cfg.seed))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        target = out / "path.json"
        target.write_text(json.dumps({"delta": delta, "values": path.values.tolist()}) + "\n")
    else:
        target = path.to_csv(out / "path.csv")
    print(target)
    return 0


def cmd_estimate(args) -> int:
    cfg = _load(args)
    model, theta0, spec = cfg.build()
    if args.path:
        path = SamplePath.from_csv(args.path)
    else:
        n, delta = cfg.schedule[0]
        path = simulate_path(model, theta0, SamplingScheme(n, delta, cfg.substeps, cfg.seed))
    start = cfg.theta_init if cfg.theta_init is not None else theta0
    if cfg.estimator == "simple":
        res = solve_simple(model, path, spec, start, theta_star=start)
    else:
        res = solve_onelag(model, path, spec, start, SolverOptions(coeff_method=cfg.coeff_method))
    record = {**res.to_dict(), "n": path.n, "delta": path.delta, "estimator": cfg.estimator}
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    row = {k: v for k, v in record.items() if k not in ("theta_hat", "names")}
    for name, v in zip(record["names"], record["theta_hat"]):
        row[f"theta_hat_{name}"] = v
    target = out / "estimate.json" if args.format == "json" else out / "estimate.csv"
    if args.format == "json":
        target.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    else:
        _write_rows([row], target, "csv")
    print(json.dumps(record, sort_keys=True))
    return 0


def cmd_avar(args) -> int:
    cfg = _load(args)
    model, theta0, spec = cfg.build()
    _, report = predicted_avar(model, theta0, spec, cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        target = out / "avar.json"
        target.write_text(report.to_json() + "\n")
    else:
        target = out / "avar.csv"
        target.write_text(report.to_csv())
    print(json.dumps({"avar": np.asarray(report.avar).tolist(), "bound": report.bound}))
    return 0


def cmd_study(args) -> int:
    cfg = _load(args)
    report = run_estimation_study(cfg, jobs=args.jobs)
    for p in emit_report(report, cfg.out_dir, args.format):
        print(p)
    return 0


def cmd_check(args) -> int:
    cfg = _load(args)
    model, theta0, spec = cfg.build()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lln = run_lln_check(cfg)
    clt = run_clt_check(cfg)
    written = [_write_rows(lln, out / "lln", args.format), _write_rows(clt, out / "clt", args.format)]
    ok = all(r["passed"] for r in lln) and all(r["passed"] is not False for r in clt)
    if isinstance(model, OrnsteinUhlenbeck):
        gen = generator_expansion_check(model, theta0, SmoothFunction.monomial(3), float(theta0[0]) + 0.5,
                                        [0.2, 0.1, 0.05, 0.025])
        rows = [{"delta": d, "remainder": r} for d, r in zip(gen["deltas"], gen["remainders"])]
        written.append(_write_rows(rows, out / "generator_expansion", args.format))
    for p in written:
        print(p)
    print("all checks passed" if ok else "some checks failed")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbef", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out-dir", default=None, help="output directory (default from config)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for replications")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("simulate", parents=[common], help="write one stationary path").set_defaults(fn=cmd_simulate)
    p = sub.add_parser("estimate", parents=[common], help="estimate theta from one path")
    p.add_argument("--path", default=None, help="path CSV (index,time,value); simulated if omitted")
    p.set_defaults(fn=cmd_estimate)
    sub.add_parser("avar", parents=[common], help="asymptotic variance report").set_defaults(fn=cmd_avar)
    sub.add_parser("study", parents=[common], help="replication study").set_defaults(fn=cmd_study)
    sub.add_parser("check", parents=[common], help="LLN and CLT checks").set_defaults(fn=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (PbefError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

