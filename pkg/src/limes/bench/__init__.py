"""Benchmark harness reproducing the cold-start/execution measurement
methodology: repeated sampling, ECDF tables, summary statistics, and
CSV/SVG report emission."""

from __future__ import annotations

from .harness import (
    MODES,
    BenchmarkPlan,
    BenchmarkResult,
    LatencySamples,
    run_cold_start_bench,
    run_execution_bench,
    run_plan,
)
from .reports import emit_reports
from .stats import EcdfTable, SummaryStats, compute_ecdf, summarize

__all__ = [
    "MODES",
    "BenchmarkPlan",
    "BenchmarkResult",
    "LatencySamples",
    "EcdfTable",
    "SummaryStats",
    "compute_ecdf",
    "summarize",
    "run_cold_start_bench",
    "run_execution_bench",
    "run_plan",
    "emit_reports",
]
