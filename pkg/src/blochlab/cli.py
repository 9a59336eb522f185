"""Command-line entry points for the experiment harness.

Subcommands: selftest, converge, photon, crosscheck, dump-model.  The
process exits nonzero exactly when a gating check in the requested run
fails; worker count comes from the BLOCHLAB_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ExperimentPlan,
    default_plan_dict,
    run_calculus_selftest,
    run_convergence,
    run_crosscheck,
    run_photon_rate,
    write_csv,
    write_json,
)
from .model import Model, ModelConfig, grid_debug_dump


def _load_plan(path: str) -> ExperimentPlan:
    if path == "default":
        return ExperimentPlan.from_dict(default_plan_dict())
    return ExperimentPlan.from_file(path)


def _emit(report, plan: ExperimentPlan | None, json_override=None, csv_override=None):
    json_path = json_override or (plan.json_path if plan else None)
    csv_path = csv_override or (plan.csv_path if plan else None)
    if json_path:
        write_json(report, json_path)
        print(f"wrote {json_path}")
    if csv_path and hasattr(report, "cells"):
        write_csv(report, csv_path)
        print(f"wrote {csv_path}")


def _cmd_selftest(args) -> int:
    report = run_calculus_selftest(seed=args.seed)
    for e in report.entries:
        mark = "PASS" if e.passed else "FAIL"
        print(f"{mark}  {e.name:30s} residual {e.residual:.3e}  (tol {e.tol:g})")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.json}")
    print("selftest:", "PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def _cmd_converge(args) -> int:
    plan = _load_plan(args.plan)
    report = run_convergence(plan)
    for f in report.fits:
        slope = "exact" if f["slope"] is None else f"{f['slope']:.3f}"
        print(
            f"{f['status']:>6s}  {f['observable']:30s} t={f['t']:g} "
            f"{f['X_id']} M={f['M']}  slope {slope}"
        )
    _emit(report, plan, args.json, args.csv)
    print("converge:", "PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def _cmd_photon(args) -> int:
    plan = _load_plan(args.plan)
    report = run_photon_rate(plan)
    print(f"recorded rate sign: {report.sign:+.0f}")
    for p in report.polarization:
        print(
            f"{p['X_id']}: |Pi+ X| = {p['norm_plus']:.4f}, "
            f"|Pi- X| = {p['norm_minus']:.4f}"
        )
    for f in report.fits:
        slope = "n/a" if f["slope"] is None else f"{f['slope']:.3f}"
        print(
            f"{f['status']:>6s}  {f['observable']:20s} t={f['t']:g} "
            f"{f['X_id']}  slope {slope}"
        )
    _emit(report, plan, args.json, args.csv)
    print("photon:", "PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def _cmd_crosscheck(args) -> int:
    plan = _load_plan(args.plan)
    report = run_crosscheck(plan)
    for e in report.entries:
        mark = "PASS" if e["passed"] else "FAIL"
        print(f"{mark}  {e['check']:14s} t={e['t']:g}  dev {e['deviation']:.3e}")
    for e in report.hygiene:
        mark = "PASS" if e["passed"] else "FAIL"
        print(f"{mark}  {e['check']:22s} residual {e['residual']:.3e}")
    _emit(report, plan, args.json, None)
    print("crosscheck:", "PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def _cmd_dump_model(args) -> int:
    if args.config == "default":
        config = ModelConfig.from_dict(default_plan_dict()["model"])
    else:
        config = ModelConfig.from_file(args.config)
    dump = grid_debug_dump(Model(config))
    json.dump(dump, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blochlab",
        description="Semiclassical spin-boson expansion experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("selftest", help="symbol-calculus identity battery")
    p.add_argument("--seed", type=int, default=20260826)
    p.add_argument("--json", help="write the report as JSON")
    p.set_defaults(fn=_cmd_selftest)

    for name, fn, text in (
        ("converge", _cmd_converge, "oracle-vs-expansion h sweep"),
        ("photon", _cmd_photon, "photon-rate comparison sweep"),
        ("crosscheck", _cmd_crosscheck, "dual-path agreement checks"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("plan", help="plan JSON path, or 'default'")
        p.add_argument("--json", help="override the plan's JSON output path")
        if name != "crosscheck":
            p.add_argument("--csv", help="override the plan's CSV output path")
        p.set_defaults(fn=fn)

    p = sub.add_parser("dump-model", help="grid and coupling diagnostics")
    p.add_argument("config", help="model config JSON path, or 'default'")
    p.set_defaults(fn=_cmd_dump_model)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
