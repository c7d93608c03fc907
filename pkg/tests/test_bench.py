"""Bench harness, report emission, and CLI tests.

Engine-touching runs stay tiny (a few noop iterations); all report and
SVG assertions use synthetic results so they are exact and fast.
"""

from __future__ import annotations

import csv
import itertools
import re
from datetime import datetime, timezone

import pytest

from limes.bench.cli import _plans, build_parser
from limes.bench.cli import main as bench_main
from limes.bench.harness import (
    DEFAULT_SEED,
    MODES,
    BenchmarkPlan,
    BenchmarkResult,
    LatencySamples,
    run_cold_start_bench,
    run_execution_bench,
    run_plan,
)
from limes.bench.reports import SUMMARY_HEADER, emit_reports, read_samples_csv
from limes.bench.stats import summarize
from limes.errors import EngineFailure
from limes.registry import Registry
from limes.workloads import WORKLOAD_NAMES


def make_result(workload, mode, values, *, iterations=None, aborted=False, error=None):
    """A BenchmarkResult without running anything."""
    plan = BenchmarkPlan(
        workload=workload,
        mode=mode,
        iterations=iterations if iterations is not None else max(len(values), 1),
        warmup_iterations=0,
    )
    return BenchmarkResult(
        plan=plan,
        values_ms=tuple(values),
        recorded_at=datetime.now(timezone.utc),
        host_info="test-host",
        aborted=aborted,
        error=error,
    )


SVG_POINTS = re.compile(r'points="([^"]*)"')


def polyline_points(svg_text):
    """All polylines in an SVG as lists of (x, y) floats."""
    lines = []
    for match in SVG_POINTS.finditer(svg_text):
        pairs = [pair.split(",") for pair in match.group(1).split()]
        lines.append([(float(x), float(y)) for x, y in pairs])
    return lines


class TestPlanAndResultTypes:
    def test_plan_defaults(self):
        plan = BenchmarkPlan(workload="image", mode="execution")
        assert plan.iterations == 1000
        assert plan.warmup_iterations == 10
        assert plan.seed == DEFAULT_SEED
        assert plan.slug == "image_execution"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"workload": "nope", "mode": "execution"},
            {"workload": "noop", "mode": "warm"},
            {"workload": "noop", "mode": "execution", "iterations": 0},
            {"workload": "noop", "mode": "execution", "warmup_iterations": -1},
        ],
    )
    def test_plan_validation(self, kwargs):
        with pytest.raises(ValueError):
            BenchmarkPlan(**kwargs)

    def test_latency_samples_must_match_iterations(self):
        plan = BenchmarkPlan(workload="noop", mode="execution", iterations=3)
        with pytest.raises(ValueError, match="expected 3 samples"):
            LatencySamples(
                plan=plan,
                values_ms=(1.0, 2.0),
                recorded_at=datetime.now(timezone.utc),
                host_info="h",
            )

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), -0.001])
    def test_latency_samples_reject_non_finite(self, bad):
        plan = BenchmarkPlan(workload="noop", mode="execution", iterations=2)
        with pytest.raises(ValueError, match="finite"):
            LatencySamples(
                plan=plan,
                values_ms=(1.0, bad),
                recorded_at=datetime.now(timezone.utc),
                host_info="h",
            )

    def test_samples_accessor_on_completed_run(self):
        result = make_result("noop", "execution", [1.0, 2.0, 3.0])
        samples = result.samples
        assert samples.values_ms == (1.0, 2.0, 3.0)

    def test_samples_accessor_refuses_aborted_run(self):
        result = make_result(
            "noop", "execution", [1.0], iterations=5, aborted=True, error="boom"
        )
        with pytest.raises(ValueError, match="boom"):
            result.samples


class TestRunners:
    def test_cold_jit_compiles_exactly_once_per_iteration(self, tmp_path, workloads_dir):
        reg_dir = tmp_path / "reg"
        plan = BenchmarkPlan(
            workload="noop",
            mode="cold-jit",
            iterations=4,
            warmup_iterations=2,
            workload_path=str(workloads_dir),
        )
        result = run_cold_start_bench(plan, registry_dir=reg_dir)
        assert not result.aborted
        assert len(result.values_ms) == 4
        # Warmup iterations must not contaminate the compile counter.
        with Registry(reg_dir) as registry:
            assert registry.compile_count == 4
            assert registry.hit_count == 0

    def test_cold_cached_hits_once_per_iteration(self, tmp_path, workloads_dir):
        reg_dir = tmp_path / "reg"
        plan = BenchmarkPlan(
            workload="noop",
            mode="cold-cached",
            iterations=4,
            warmup_iterations=2,
            workload_path=str(workloads_dir),
        )
        result = run_cold_start_bench(plan, registry_dir=reg_dir)
        assert not result.aborted
        with Registry(reg_dir) as registry:
            # initialize compiles once; setup acquires the artifact once
            # (1 hit) and each measured iteration hits again.
            assert registry.compile_count == 1
            assert registry.hit_count == 1 + 4

    def test_execution_run_yields_iteration_count_samples(self, workloads_dir):
        plan = BenchmarkPlan(
            workload="noop",
            mode="execution",
            iterations=5,
            warmup_iterations=1,
            workload_path=str(workloads_dir),
        )
        result = run_execution_bench(plan)
        assert not result.aborted
        samples = result.samples  # validates count, finiteness, >= 0
        assert len(samples.values_ms) == 5

    def test_run_plan_dispatches_by_mode(self, workloads_dir):
        plan = BenchmarkPlan(
            workload="noop",
            mode="execution",
            iterations=2,
            warmup_iterations=0,
            workload_path=str(workloads_dir),
        )
        assert not run_plan(plan).aborted

    def test_runner_mode_mismatch_raises(self):
        exec_plan = BenchmarkPlan(workload="noop", mode="execution", iterations=1)
        cold_plan = BenchmarkPlan(workload="noop", mode="cold-jit", iterations=1)
        with pytest.raises(ValueError, match="cold mode"):
            run_cold_start_bench(exec_plan)
        with pytest.raises(ValueError, match="execution"):
            run_execution_bench(cold_plan)

    @pytest.mark.parametrize("mode", MODES)
    def test_missing_workload_file_aborts_instead_of_raising(self, tmp_path, mode):
        empty = tmp_path / "empty"
        empty.mkdir()
        plan = BenchmarkPlan(
            workload="noop",
            mode=mode,
            iterations=3,
            warmup_iterations=0,
            workload_path=str(empty),
        )
        result = run_plan(plan)
        assert result.aborted
        assert result.error
        assert result.values_ms == ()

    def test_midrun_fault_keeps_partial_samples(
        self, tmp_path, workloads_dir, monkeypatch
    ):
        real = Registry.measured_cold_start
        calls = {"n": 0}

        def flaky(self, *args, **kwargs):
            calls["n"] += 1
            if calls["n"] > 2:
                raise EngineFailure("injected mid-run fault")
            return real(self, *args, **kwargs)

        monkeypatch.setattr(Registry, "measured_cold_start", flaky)
        plan = BenchmarkPlan(
            workload="noop",
            mode="cold-jit",
            iterations=5,
            warmup_iterations=0,
            workload_path=str(workloads_dir),
        )
        result = run_cold_start_bench(plan, registry_dir=tmp_path / "reg")
        assert result.aborted
        assert len(result.values_ms) == 2
        assert "EngineFailure" in result.error
        assert "injected mid-run fault" in result.error
        with pytest.raises(ValueError):
            result.samples


class TestReports:
    def test_one_complete_plan_writes_exactly_four_files(self, tmp_path):
        result = make_result("noop", "cold-jit", [4.0, 2.0, 3.0, 2.0, 9.0, 1.0])
        written = emit_reports([result], tmp_path)
        names = sorted(p.name for p in written)
        assert names == [
            "ecdf_noop.svg",
            "ecdf_noop_cold-jit.csv",
            "samples_noop_cold-jit.csv",
            "summary.csv",
        ]
        assert sorted(p.name for p in tmp_path.iterdir()) == names

    def test_csv_number_and_line_endings(self, tmp_path):
        result = make_result("noop", "execution", [1.23456, 2.0, 10.5, 0.0004])
        emit_reports([result], tmp_path)

        samples = (tmp_path / "samples_noop_execution.csv").read_bytes()
        assert b"\r" not in samples
        lines = samples.decode("utf-8").splitlines()
        assert lines[0] == "iteration,latency_ms"
        for line in lines[1:]:
            assert re.fullmatch(r"\d+,\d+\.\d{3}", line), line
        assert lines[1] == "0,1.235"  # banker-free 3-decimal formatting
        assert lines[4] == "3,0.000"

        ecdf = (tmp_path / "ecdf_noop_execution.csv").read_bytes()
        assert b"\r" not in ecdf
        ecdf_lines = ecdf.decode("utf-8").splitlines()
        assert ecdf_lines[0] == "latency_ms,cum_prob"
        for line in ecdf_lines[1:]:
            assert re.fullmatch(r"\d+\.\d{3},\d+\.\d{3}", line), line
        assert ecdf_lines[-1].endswith(",1.000")

        summary = (tmp_path / "summary.csv").read_bytes()
        assert b"\r" not in summary

    def test_samples_roundtrip_and_summary_stability(self, tmp_path):
        values = [17.123456, 3.999999, 8.0, 8.000499, 240.55555, 0.125]
        result = make_result("image", "cold-jit", values)
        emit_reports([result], tmp_path)
        parsed = read_samples_csv(tmp_path / "samples_image_cold-jit.csv")
        assert len(parsed) == len(values)
        for got, want in zip(parsed, values):
            assert got == pytest.approx(want, abs=5e-4)
        original = summarize(values)
        reread = summarize(parsed)
        assert reread.mean_ms == pytest.approx(original.mean_ms, abs=1e-3)
        assert reread.p50_ms == pytest.approx(original.p50_ms, abs=1e-3)
        assert reread.stddev_ms == pytest.approx(original.stddev_ms, abs=1e-3)

    def test_read_samples_rejects_other_csvs(self, tmp_path):
        result = make_result("noop", "execution", [1.0])
        emit_reports([result], tmp_path)
        with pytest.raises(ValueError, match="not a samples CSV"):
            read_samples_csv(tmp_path / "summary.csv")

    def test_summary_rows_for_complete_and_aborted_plans(self, tmp_path):
        complete = make_result("noop", "cold-jit", [2.0, 4.0, 6.0])
        aborted = make_result(
            "image", "cold-jit", [], iterations=10, aborted=True, error="dead"
        )
        emit_reports([complete, aborted], tmp_path)
        with open(tmp_path / "summary.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == SUMMARY_HEADER
        assert len(rows) == 3

        ok = rows[1]
        assert ok[:6] == ["noop", "cold-jit", "3", "0", "false", "3"]
        assert ok[6] == "4.000"  # mean of 2, 4, 6
        assert ok[7] == "4.000"  # p50

        dead = rows[2]
        assert dead[:6] == ["image", "cold-jit", "10", "0", "true", "0"]
        assert dead[6:] == [""] * 7

    def test_aborted_plan_still_writes_partial_samples(self, tmp_path):
        partial = make_result(
            "noop", "cold-jit", [5.0, 7.0], iterations=9, aborted=True, error="x"
        )
        emit_reports([partial], tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert "samples_noop_cold-jit.csv" in names
        assert "ecdf_noop_cold-jit.csv" in names  # partials still characterized
        assert not any(n.endswith(".svg") for n in names)
        assert read_samples_csv(tmp_path / "samples_noop_cold-jit.csv") == [5.0, 7.0]

    def test_ecdf_svg_steps_are_monotone(self, tmp_path):
        results = [
            make_result("noop", "cold-jit", [5.0, 1.0, 3.0, 3.0, 2.0, 8.0]),
            make_result("noop", "cold-cached", [0.5, 0.25, 0.75, 0.5]),
            make_result("noop", "execution", [0.1, 0.2]),
        ]
        emit_reports(results, tmp_path)
        svg = (tmp_path / "ecdf_noop.svg").read_text()
        lines = polyline_points(svg)
        assert len(lines) == 3  # one step curve per mode
        for points in lines:
            xs = [x for x, _ in points]
            ys = [y for _, y in points]
            assert xs == sorted(xs)  # latency axis never goes backwards
            # pixel y shrinks as cumulative probability grows
            assert all(a >= b for a, b in zip(ys, ys[1:]))
        for mode in MODES:
            assert mode in svg

    def test_stacked_svg_requires_cold_and_execution_pair(self, tmp_path):
        cold_only = make_result("noop", "cold-jit", [4.0, 6.0])
        emit_reports([cold_only], tmp_path / "a")
        assert not (tmp_path / "a" / "stacked_cold_execution.svg").exists()

        both = [cold_only, make_result("noop", "execution", [1.0, 3.0])]
        written = emit_reports(both, tmp_path / "b")
        stacked = tmp_path / "b" / "stacked_cold_execution.svg"
        assert stacked in written
        svg = stacked.read_text()
        assert "cold 5.000 ms" in svg  # mean of 4, 6
        assert "execution 2.000 ms" in svg  # mean of 1, 3
        assert svg.count("<rect") >= 2

    def test_aborted_results_never_reach_svgs(self, tmp_path):
        results = [
            make_result("noop", "cold-jit", [4.0], iterations=3, aborted=True, error="x"),
            make_result("noop", "execution", [1.0, 3.0]),
        ]
        emit_reports(results, tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert "stacked_cold_execution.svg" not in names
        svg = (tmp_path / "ecdf_noop.svg").read_text()
        assert "cold-jit" not in svg


class TestCli:
    def test_all_flag_builds_full_matrix(self):
        args = build_parser().parse_args(
            ["--all", "--iterations", "7", "--warmup", "2", "--out", "x"]
        )
        plans = _plans(args)
        assert len(plans) == 15
        combos = {(p.workload, p.mode) for p in plans}
        assert combos == set(itertools.product(WORKLOAD_NAMES, MODES))
        assert all(p.iterations == 7 and p.warmup_iterations == 2 for p in plans)

    @pytest.mark.parametrize(
        "argv",
        [
            ["--workload", "noop"],
            ["--mode", "execution"],
            [],
        ],
    )
    def test_single_plan_requires_both_flags(self, argv):
        args = build_parser().parse_args(argv)
        with pytest.raises(SystemExit):
            _plans(args)

    def test_seed_flag_forwarded(self):
        args = build_parser().parse_args(
            ["--workload", "noop", "--mode", "execution", "--seed", "99"]
        )
        assert _plans(args)[0].seed == 99
        args = build_parser().parse_args(["--workload", "noop", "--mode", "execution"])
        assert _plans(args)[0].seed == DEFAULT_SEED

    def test_main_happy_path_exits_zero(self, tmp_path, workloads_dir):
        out = tmp_path / "out"
        rc = bench_main(
            [
                "--workload", "noop",
                "--mode", "execution",
                "--iterations", "3",
                "--warmup", "1",
                "--out", str(out),
                "--workload-path", str(workloads_dir),
            ]
        )
        assert rc == 0
        names = {p.name for p in out.iterdir()}
        assert names == {
            "samples_noop_execution.csv",
            "ecdf_noop_execution.csv",
            "summary.csv",
            "ecdf_noop.svg",
        }

    def test_main_aborted_plan_exits_one(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        out = tmp_path / "out"
        rc = bench_main(
            [
                "--workload", "noop",
                "--mode", "cold-jit",
                "--iterations", "2",
                "--out", str(out),
                "--workload-path", str(empty),
            ]
        )
        assert rc == 1
        assert "aborted" in capsys.readouterr().err
        # The partial (here: empty) sample file and flagged summary remain.
        assert (out / "samples_noop_cold-jit.csv").exists()
        summary = (out / "summary.csv").read_text()
        assert "true" in summary
