"""``limes-bench`` command line interface.

Single plan::

    limes-bench --workload image --mode cold-jit --iterations 200 --out DIR

Full measurement matrix (every workload x every mode)::

    limes-bench --all --iterations 100 --out DIR

Exit code is 0 only if every plan completed; an aborted plan still
leaves its partial samples file behind, flagged in summary.csv.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..workloads import WORKLOAD_NAMES
from .harness import MODES, BenchmarkPlan, run_plan
from .reports import emit_reports

__all__ = ["build_parser", "main"]

logger = logging.getLogger("limes.bench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="limes-bench",
        description=(
            "Cold-start and execution latency benchmarks for the bundled "
            "wasm workloads, with CSV and SVG reports."
        ),
    )
    parser.add_argument("--workload", choices=WORKLOAD_NAMES, help="workload to measure")
    parser.add_argument("--mode", choices=MODES, help="measurement mode")
    parser.add_argument(
        "--all",
        action="store_true",
        help="run the full workload x mode matrix (ignores --workload/--mode)",
    )
    parser.add_argument(
        "--iterations", type=int, default=1000, help="measured iterations per plan"
    )
    parser.add_argument(
        "--warmup", type=int, default=10, help="discarded warmup iterations per plan"
    )
    parser.add_argument("--out", default="bench-out", help="report output directory")
    parser.add_argument("--seed", type=int, default=None, help="input-payload RNG seed")
    parser.add_argument(
        "--workload-path",
        default=None,
        help="directory holding the built workload .wasm files (default: ./workloads)",
    )
    return parser


def _plans(args: argparse.Namespace) -> list[BenchmarkPlan]:
    common = dict(
        iterations=args.iterations,
        warmup_iterations=args.warmup,
        output_dir=args.out,
        workload_path=args.workload_path,
    )
    if args.seed is not None:
        common["seed"] = args.seed
    if args.all:
        return [
            BenchmarkPlan(workload=w, mode=m, **common)
            for w in WORKLOAD_NAMES
            for m in MODES
        ]
    if not args.workload or not args.mode:
        raise SystemExit("either --all or both --workload and --mode are required")
    return [BenchmarkPlan(workload=args.workload, mode=args.mode, **common)]


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        plans = _plans(args)
    except ValueError as exc:
        print(f"limes-bench: {exc}", file=sys.stderr)
        return 2

    results = [run_plan(plan) for plan in plans]
    try:
        written = emit_reports(results, args.out)
    except OSError as exc:
        print(f"limes-bench: cannot write reports: {exc}", file=sys.stderr)
        return 1
    logger.info("wrote %d report files to %s", len(written), args.out)

    failed = [r for r in results if r.aborted]
    for result in failed:
        print(
            f"limes-bench: plan {result.plan.slug} aborted: {result.error}",
            file=sys.stderr,
        )
    return 1 if failed else 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
