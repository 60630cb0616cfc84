"""Command-line entry point ``quantpassive``."""

from __future__ import annotations

import argparse
import logging
import sys

from .exceptions import QuantPassiveError
from .pipeline import SWEEP_PARAMS, run_and_check, sweep
from .scenario import load_scenario, preset_names


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="path to a scenario YAML file or the name of a shipped preset")
    p.add_argument("--out", default="out", metavar="DIR", help="output root (default: ./out)")
    p.add_argument("--seed", type=int, default=None, metavar="N", help="override the scenario seed")
    p.add_argument("--tol", type=float, default=None, metavar="X", help="override the bound-check tolerance")
    p.add_argument("--tag", default=None, help="run directory name (default: UTC timestamp)")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantpassive",
                                     description="Quantized event-triggered coordination of passive agents.")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("simulate", help="simulate and write trajectory.csv and events.jsonl"))
    _add_common(sub.add_parser("analyze", help="simulate, run the configured checks and write analysis.json"))
    _add_common(sub.add_parser("check", help="like analyze; exit status 1 if any check fails"))
    sw = sub.add_parser("sweep", help="repeat the run over a list of parameter values")
    _add_common(sw)
    sw.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sw.add_argument("--values", required=True, nargs="*", type=float, metavar="V")
    pr = sub.add_parser("presets", help="shipped scenario presets")
    pr.add_argument("action", choices=["list"])
    return parser


def _load(args):
    s = load_scenario(args.scenario)
    if args.seed is not None or args.tol is not None:
        s = s.with_overrides(seed=args.seed, tol=args.tol)
    return s


def _print_report(report: dict) -> None:
    for entry in report["checks"]:
        status = "PASS" if entry["passed"] else "FAIL"
        detail = ""
        if "reports" in entry:
            worst = min(entry["reports"], key=lambda r: r["margin"])
            detail = f"worst {worst['label']}: {worst['achieved_value']:.6g} vs bound {worst['bound_value']:.6g}"
        elif "value" in entry:
            detail = f"{entry['value']:.3g} (tol {entry['tol']:.3g})"
        elif "ratio" in entry:
            detail = f"ours/prior = {entry['ratio']:.4g}"
        elif "min_eigenvalue" in entry:
            detail = f"min eigenvalue {entry['min_eigenvalue']:.4g} at {entry['worst_frequency']:.4g} rad/s"
        print(f"  {status}  {entry['check']:<22} {detail}")
    summ = report["summary"]
    print(f"  {summ['passed']} passed, {summ['failed']} failed; {report['events']} events, "
          f"{report['chatter']} deferred")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            for name in preset_names():
                print(name)
            return 0
        if args.command == "sweep" and not args.values:
            parser.error("sweep: --values needs at least one value")
        s = _load(args)
        if args.command == "sweep":
            path, rows = sweep(s, args.param, args.values, args.out, args.tag)
            if not args.quiet:
                for r in rows:
                    print(f"{args.param}={r['value']:<10} final {r['final_disagreement']:.6g}  "
                          f"trailing {r['trailing_disagreement']:.6g}  bound {r['bound']:.6g}")
                print(f"summary: {path}")
            return 0 if all(r["checks_failed"] == 0 for r in rows) else 1
        manifest, report = run_and_check(s, args.out, args.tag, analyze=args.command != "simulate")
        if not args.quiet:
            print(f"{s.name}: {manifest.directory}")
            if report is not None:
                _print_report(report)
        if args.command == "check":
            return 0 if manifest.ok else 1
        return 0
    except QuantPassiveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
