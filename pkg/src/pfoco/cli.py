"""Command-line entry point: ``run``, ``sweep``, ``verify`` and ``fit``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import PRESETS, ExperimentConfig, RunError, emit, fit_exponent, points_from_reports, run, sweep, trace_summary
from .verify import SUITES, run_suite


def _auto_or_float(text: str):
    return text if text == "auto" else float(text)


def cmd_run(args) -> int:
    config = ExperimentConfig(
        body=args.body,
        learner=args.learner,
        adversary=args.adversary,
        T=args.T,
        L=args.L,
        eta=args.eta,
        mu=args.mu,
        eps=args.eps,
        delta=args.delta,
        rho=args.rho,
        seed=args.seed,
        out=args.out,
    )
    try:
        trace = run(config)
    except RunError as exc:
        print(f"run failed at {exc}", file=sys.stderr)
        return 3
    if args.out:
        stem = Path(args.out).with_suffix("")
        emit(trace, "csv", stem.with_suffix(".csv"))
        emit(trace, "json", stem.with_suffix(".json"))
    print(json.dumps(trace_summary(trace), indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    report = sweep(args.preset, seeds=args.seeds, max_T=args.max_T, base_seed=args.seed, jobs=args.jobs)
    if args.out:
        emit(report, "json", args.out)
    for adv, fit in report["fits"].items():
        if "slope" in fit:
            print(f"{args.preset} {adv}: slope={fit['slope']:.4f} r2={fit['r2']:.4f}")
        else:
            print(f"{args.preset} {adv}: too few points to fit")
    return 0


def cmd_verify(args) -> int:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        res = run_suite(name, quick=args.quick)
        ok &= res.passed
        print(f"{'PASS' if res.passed else 'FAIL'} {name} {json.dumps(res.details, sort_keys=True, default=str)}")
    return 0 if ok else 1


def cmd_fit(args) -> int:
    reports = []
    for path in args.inputs:
        with open(path) as fh:
            reports.append(json.load(fh))
    runs = [r for rep in reports for r in rep.get("runs", [rep])]
    groups: dict[str, list] = {}
    for r in runs:
        groups.setdefault(r["config"]["adversary"], []).append(r)
    status = 0
    for adv, rs in sorted(groups.items()):
        pts = points_from_reports(rs)
        if len(pts) < 3:
            print(f"{adv}: need at least 3 horizons, got {len(pts)}", file=sys.stderr)
            status = 1
            continue
        slope, r2 = fit_exponent(pts)
        print(f"{adv}: slope={slope:.4f} r2={r2:.4f} points={len(pts)}")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfoco", description="Projection-free online convex optimization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="play one experiment and write its trace")
    p.add_argument("--body", default="ball:R=1.0", help="ball:R=..,d=.. | lp:p=..,r=..,d=.. | poly:file=.. | cube:h=..,d=..")
    p.add_argument("--learner", default="main", help="ftl | ftsl | freegrad | ogd[:step=..] | ftal | main[:base=ftl|ftal]")
    p.add_argument("--adversary", default="iid-sphere", help="iid-sphere | sign-flip | smooth-quad | biased-drift")
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--eta", type=_auto_or_float, default="auto")
    p.add_argument("--mu", type=_auto_or_float, default="auto")
    p.add_argument("--eps", type=_auto_or_float, default="auto")
    p.add_argument("--delta", type=_auto_or_float, default="auto")
    p.add_argument("--rho", type=_auto_or_float, default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="writes <stem>.csv and <stem>.json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a preset grid and fit regret exponents")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--max-T", dest="max_T", type=int)
    p.add_argument("--seed", type=int, default=0, help="first seed of the grid")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run an invariant suite; exits 1 on failure")
    p.add_argument("--suite", required=True, choices=sorted(SUITES) + ["all"])
    p.add_argument("--quick", action="store_true", help="reduced sample sizes")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fit", help="fit regret exponents from run or sweep JSON files")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
