"""``popproto`` command line: run, sweep, fit, stats.

Exit codes: 0 success, 2 invalid parameters, 3 fit failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (INPUT_POLICIES, INSTRUMENT_LEVELS, X_AXES, ExperimentSpec, FitError, read_jsonl,
                          run_experiment, summarize, write_fit_csv, write_stats_csv, fit_records)
from .graph import FAMILIES, DisconnectedGraph, GraphDescriptor, InvalidParameter
from .stacks import STACK_NAMES

EXIT_OK, EXIT_INVALID, EXIT_FIT = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Invalid(message)


class _Invalid(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _add_family_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=FAMILIES + ("binary", "random", "tnk"), help="graph family")
    p.add_argument("--delta-cap", type=int, help="degree cap for random trees")
    p.add_argument("--k", type=int, help="k for the lower-bound tree T_{n,k}")
    p.add_argument("--k-fraction", type=float, help="sweep only: k = floor(n * fraction)")
    p.add_argument("--graph-seed", type=int, help="seed for random graph families")
    p.add_argument("--file", help="edge-list file (family from_file)")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stack", required=True, choices=STACK_NAMES)
    p.add_argument("--seeds", type=int, default=1, help="runs per graph point")
    p.add_argument("--seed-base", type=int, default=0, help="first seed")
    p.add_argument("--cap", type=int, help="step cap (default 50 n^2 ceil(log2 n))")
    p.add_argument("--tail", type=int, help="verification tail (default max(10 n D, 1e5))")
    p.add_argument("--init", choices=("fresh", "random"), default="fresh")
    p.add_argument("--input", dest="majority_input", choices=INPUT_POLICIES, default="alternating",
                   help="majority input assignment")
    p.add_argument("--candidates", type=_int_list, help="leader candidates, comma-separated node ids (default: all)")
    p.add_argument("--alpha", type=int, default=7, help="palette factor: palette = alpha * Delta^2")
    p.add_argument("--out", required=True, help="run records (JSONL)")
    p.add_argument("--csv", help="per-point statistics (CSV); default: <out>.csv")
    p.add_argument("--trace", help="per-step trace (JSONL); runs serially")
    p.add_argument("--instrument", choices=INSTRUMENT_LEVELS, default="light")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="popproto", description="Population protocols on trees: runs, sweeps and fits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="seeded runs on one graph")
    run.add_argument("--graph", help="descriptor JSON file (or inline JSON); alternatively family flags")
    run.add_argument("--n", type=int, help="node count")
    _add_family_flags(run)
    _add_run_flags(run)

    sweep = sub.add_parser("sweep", help="seeded runs over several sizes")
    sweep.add_argument("--n", type=_int_list, required=True, help="comma-separated sizes")
    _add_family_flags(sweep)
    _add_run_flags(sweep)

    fit = sub.add_parser("fit", help="log-log scaling fit of mean steps")
    fit.add_argument("--in", dest="inp", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--layer", help="fit this layer's steps (default: whole stack)")
    fit.add_argument("--x", choices=sorted(X_AXES), default="n", help="x axis")
    fit.add_argument("--min-seeds", type=int, default=5)

    stats = sub.add_parser("stats", help="per-point statistics")
    stats.add_argument("--in", dest="inp", required=True)
    stats.add_argument("--layer")
    stats.add_argument("--out", help="also write CSV here")
    return parser


def _descriptor(args, n: int | None) -> GraphDescriptor:
    if getattr(args, "graph", None):
        text = args.graph
        src = Path(text)
        if src.exists():
            text = src.read_text()
        try:
            return GraphDescriptor.from_json(text)
        except (json.JSONDecodeError, TypeError) as exc:
            raise InvalidParameter(f"cannot parse graph descriptor: {exc}") from exc
    if not args.family:
        raise InvalidParameter("give --graph or --family")
    k = args.k
    if args.k_fraction is not None and n is not None:
        k = max(1, int(n * args.k_fraction))
    return GraphDescriptor(args.family, n=n, delta_cap=args.delta_cap, k=k, seed=args.graph_seed,
                           path=args.file)


def _spec(args, graphs) -> ExperimentSpec:
    csv_path = args.csv or str(Path(args.out).with_suffix(".csv"))
    return ExperimentSpec(tuple(graphs), args.stack, seeds=args.seeds, seed_base=args.seed_base,
                          step_cap=args.cap, tail=args.tail, instrument=args.instrument, init=args.init,
                          majority_input=args.majority_input, leader_candidates=args.candidates, alpha=args.alpha, out_path=args.out,
                          csv_path=csv_path, trace_path=args.trace)


def _print_stats(stats) -> None:
    print(f"{'graph':<48} {'runs':>5} {'capped':>6} {'mean':>12} {'median':>12} {'p95':>12}")
    for s in stats:
        g = json.dumps(s.graph, sort_keys=True, separators=(",", ":"))
        fmt = lambda v: "-" if v is None else f"{v:.1f}"  # noqa: E731
        flag = "  (capped runs excluded)" if s.warning else ""
        print(f"{g:<48} {s.runs:>5} {s.capped:>6} {fmt(s.mean):>12} {fmt(s.median):>12} {fmt(s.p95):>12}{flag}")


def _cmd_run(args) -> int:
    records = run_experiment(_spec(args, [_descriptor(args, args.n)]))
    _print_stats(summarize(records))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if getattr(args, "file", None):
        raise InvalidParameter("sweep needs a generated family, not a file")
    records = run_experiment(_spec(args, [_descriptor(args, n) for n in args.n]))
    _print_stats(summarize(records))
    return EXIT_OK


def _cmd_fit(args) -> int:
    records = read_jsonl(args.inp)
    try:
        fit = fit_records(records, layer=args.layer, x=args.x, min_seeds=args.min_seeds)
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    write_fit_csv(fit, args.out)
    print(f"slope={fit.slope:.4f} intercept={fit.intercept:.4f} r2={fit.r2:.4f} points={len(fit.points)}")
    return EXIT_OK


def _cmd_stats(args) -> int:
    records = read_jsonl(args.inp)
    if not records:
        raise InvalidParameter(f"{args.inp} holds no records")
    stats = summarize(records, layer=args.layer)
    _print_stats(stats)
    if args.out:
        write_stats_csv(stats, args.out)
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "fit": _cmd_fit, "stats": _cmd_stats}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except _Invalid as exc:
        print(f"popproto: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidParameter, DisconnectedGraph, FileNotFoundError) as exc:
        print(f"popproto: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
