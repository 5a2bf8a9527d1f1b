"""Command-line entry point.

    switchopt simulate --env ex1
    switchopt ddp --env ex1 --check
    switchopt ddpg --env ex1 --seeds 0,1,2,3,4 --episodes 300 --workers 2
    switchopt hmp --env analytic1 --check
    switchopt hjb --env analytic1 --check
    switchopt compare results/ex1-ddp/summary.json results/ex1-ddpg/summary.json
    switchopt check results/ex1-ddp/summary.json

Run subcommands write a summary.json plus per-seed artifacts under --out
(default: $SWITCHOPT_RESULTS/<env>-<method>, falling back to ./results).
Exit status is 0 only when every seed succeeded and, with --check, the
registered acceptance band passed.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import (
    ExperimentConfig,
    check_bands,
    compare_report,
    load_summary,
    run_suite,
)

_RUN_COMMANDS = {
    "simulate": "openloop",
    "ddp": "ddp",
    "ddpg": "ddpg",
    "hmp": "hmp",
    "hjb": "hjb",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", help="benchmark name (ex1, ex2, ex3, analytic1, analytic2)")
    p.add_argument("--seed", type=int, help="single seed (default 0)")
    p.add_argument("--seeds", help="comma-separated seed list, overrides --seed")
    p.add_argument("--dt", type=float, help="integrator step override")
    p.add_argument("--episodes", type=int, help="training episodes (ddpg)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--workers", type=int, default=None, help="parallel seed workers")
    p.add_argument("--check", action="store_true",
                   help="evaluate the acceptance band and reflect it in the exit code")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchopt",
                                     description="benchmarks for switched-system optimal control")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUN_COMMANDS:
        _add_run_flags(sub.add_parser(name, help=f"run the {name} method"))
    cmp_p = sub.add_parser("compare", help="side-by-side report from summary files")
    cmp_p.add_argument("summaries", nargs="+", help="summary.json paths (same env)")
    cmp_p.add_argument("--out", help="write the JSON report here")
    chk_p = sub.add_parser("check", help="evaluate acceptance bands for summary files")
    chk_p.add_argument("summaries", nargs="+", help="summary.json paths")
    return parser


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    method = _RUN_COMMANDS[args.command]
    seeds = None
    if args.seeds:
        seeds = tuple(int(s) for s in args.seeds.split(","))
    elif args.seed is not None:
        seeds = (args.seed,)
    overrides = {
        "env": args.env,
        "method": method,
        "seeds": seeds,
        "dt": args.dt,
        "episodes": args.episodes,
        "out": args.out,
        "workers": args.workers,
    }
    if args.config:
        with open(args.config) as fh:
            file_method = json.load(fh).get("method")
        if file_method is not None and file_method != method:
            raise ValueError(
                f"config file says method={file_method!r} but subcommand is {args.command!r}"
            )
        return ExperimentConfig.from_file(args.config, **overrides)
    clean = {k: v for k, v in overrides.items() if v is not None}
    if "env" not in clean:
        raise ValueError("--env is required (or provide it via --config)")
    clean.setdefault("workers", 1)
    return ExperimentConfig(**clean)


def _run(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    summary, out = run_suite(cfg)
    errored = [r["seed"] for r in summary["seeds"] if r.get("error") is not None]
    print(f"wrote {out / 'summary.json'}")
    print(f"{cfg.env}/{cfg.method}: mean={summary['mean']:.4f} std={summary['std']:.4f} "
          f"over {len(summary['seeds']) - len(errored)} seed(s)")
    for rec in summary["seeds"]:
        if rec.get("error") is not None:
            print(f"  seed {rec['seed']} FAILED: {rec['error']}", file=sys.stderr)
    status = 1 if errored else 0
    if args.check:
        result = check_bands(summary, out)
        if result["known"]:
            verdict = "pass" if result["passed"] else "FAIL"
            print(f"band [{result['lo']:.4f}, {result['hi']:.4f}] on {result['stat']}: "
                  f"value={result['value']:.4f} -> {verdict}")
            if "tau" in result:
                print(f"  switching time {result['tau']:.4f} -> "
                      f"{'pass' if result['tau_passed'] else 'FAIL'}")
        else:
            print(f"no acceptance band registered for ({cfg.env}, {cfg.method})")
        if not result["passed"]:
            status = 1
    return status


def _compare(args: argparse.Namespace) -> int:
    pairs = [load_summary(p) for p in args.summaries]
    text, report = compare_report(pairs)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(f"wrote {args.out}")
    return 0 if all(r["band_passed"] for r in report["rows"]) else 1


def _check(args: argparse.Namespace) -> int:
    status = 0
    for path in args.summaries:
        summary, base = load_summary(path)
        result = check_bands(summary, base)
        name = f"{summary['env']}/{summary['method']}"
        if result["known"]:
            verdict = "pass" if result["passed"] else "FAIL"
            print(f"{name}: value={result['value']:.4f} "
                  f"band=[{result['lo']:.4f}, {result['hi']:.4f}] -> {verdict}")
        else:
            verdict = "pass" if result["passed"] else "FAIL"
            print(f"{name}: no band registered; seeds "
                  f"{'clean' if result['passed'] else 'errored'} -> {verdict}")
        if not result["passed"]:
            status = 1
    return status


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in _RUN_COMMANDS:
            return _run(args)
        if args.command == "compare":
            return _compare(args)
        return _check(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
