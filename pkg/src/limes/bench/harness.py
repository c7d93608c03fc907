"""Benchmark runners: cold-start and execution sampling.

Methodology per run:

* strictly sequential iterations (no concurrency contaminates samples);
* ``warmup_iterations`` run first and never enter the reported values;
* cold modes construct a **fresh engine context per iteration** —
  ``cold-jit`` compiles from the registered bytes every time (and the
  registry counts one compile per iteration, nothing is cached), while
  ``cold-cached`` deserializes the persisted artifact (one hit per
  iteration);
* execution mode prepares a warm instance per iteration outside the
  timed window and records only the guest-call duration.

Errors abort the run: the result carries the samples collected so far
with ``aborted=True`` and the error message, and the CLI turns that
into a partial-results file plus a nonzero exit.
"""

from __future__ import annotations

import contextlib
import logging
import math
import os
import platform
import random
import shutil
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from ..errors import LimesError
from ..executor import Executor, SandboxPolicy
from ..registry import Registry
from ..workloads import (
    FIXTURE_FILE,
    IMAGE_FILTERS,
    WORKLOAD_NAMES,
    ImageJob,
    MandelbrotParams,
    Viewport,
    wasm_path,
)

__all__ = [
    "MODES",
    "BenchmarkPlan",
    "LatencySamples",
    "BenchmarkResult",
    "run_cold_start_bench",
    "run_execution_bench",
    "run_plan",
]

logger = logging.getLogger("limes.bench")

MODES = ("cold-jit", "cold-cached", "execution")
DEFAULT_SEED = 702
NOOP_PAYLOAD_SIZE = 1024


@dataclass(frozen=True)
class BenchmarkPlan:
    """One (workload, mode) measurement configuration."""

    workload: str
    mode: str
    iterations: int = 1000
    warmup_iterations: int = 10
    output_dir: str = "bench-out"
    seed: int = DEFAULT_SEED
    workload_path: Optional[str] = None
    # Test seam (not exposed on the CLI): override guest parameters,
    # e.g. {"width": 256, "height": 192, "max_iter": 100} for mandelbrot.
    workload_params: Optional[dict] = None

    def __post_init__(self) -> None:
        if self.workload not in WORKLOAD_NAMES:
            raise ValueError(f"unknown workload {self.workload!r}; choose from {WORKLOAD_NAMES}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.warmup_iterations < 0:
            raise ValueError("warmup_iterations must be >= 0")

    @property
    def slug(self) -> str:
        return f"{self.workload}_{self.mode}"


@dataclass(frozen=True)
class LatencySamples:
    """A completed sample set: exactly ``plan.iterations`` finite,
    non-negative latencies in milliseconds."""

    plan: BenchmarkPlan
    values_ms: tuple[float, ...]
    recorded_at: datetime
    host_info: str

    def __post_init__(self) -> None:
        if len(self.values_ms) != self.plan.iterations:
            raise ValueError(
                f"expected {self.plan.iterations} samples, got {len(self.values_ms)}"
            )
        if any(not math.isfinite(v) or v < 0 for v in self.values_ms):
            raise ValueError("samples must be finite and >= 0")


@dataclass(frozen=True)
class BenchmarkResult:
    """Outcome of one plan run; ``values_ms`` holds whatever was
    measured before completion or abort."""

    plan: BenchmarkPlan
    values_ms: tuple[float, ...]
    recorded_at: datetime
    host_info: str
    aborted: bool = False
    error: Optional[str] = None

    @property
    def samples(self) -> LatencySamples:
        if self.aborted:
            raise ValueError(f"run aborted: {self.error}")
        return LatencySamples(
            plan=self.plan,
            values_ms=self.values_ms,
            recorded_at=self.recorded_at,
            host_info=self.host_info,
        )


def host_info_string() -> str:
    return (
        f"{platform.platform()}; python {platform.python_version()}; "
        f"cpus {os.cpu_count()}"
    )


# -- per-workload run configuration ------------------------------------


@dataclass(frozen=True)
class _WorkloadRun:
    input_payload: bytes
    needs_dir: bool
    needs_fixture: bool
    allow_writes: bool


def _mandelbrot_payload(params: Optional[dict]) -> bytes:
    params = dict(params or {})
    viewport = Viewport(**params.pop("viewport")) if "viewport" in params else Viewport()
    return MandelbrotParams(viewport=viewport, **params).to_json()


def _image_payload(params: Optional[dict], write_output: bool) -> bytes:
    params = dict(params or {})
    params.setdefault("filters", IMAGE_FILTERS)
    return ImageJob(write_output=write_output, **params).to_json()


def _workload_run(plan: BenchmarkPlan, rng: random.Random) -> _WorkloadRun:
    w = plan.workload
    if w == "noop":
        return _WorkloadRun(
            input_payload=rng.randbytes(NOOP_PAYLOAD_SIZE),
            needs_dir=False,
            needs_fixture=False,
            allow_writes=False,
        )
    if w == "mandelbrot":
        return _WorkloadRun(_mandelbrot_payload(plan.workload_params), False, False, False)
    if w == "mandelbrot-io":
        return _WorkloadRun(_mandelbrot_payload(plan.workload_params), True, False, True)
    if w == "image":
        return _WorkloadRun(_image_payload(plan.workload_params, False), True, True, False)
    if w == "image-io":
        return _WorkloadRun(_image_payload(plan.workload_params, True), True, True, True)
    raise ValueError(f"unknown workload {w!r}")  # pragma: no cover - guarded by plan


class _Sandbox:
    """Fresh per-iteration guest filesystem root, seeded with the
    workload fixture when the guest will actually read it."""

    def __init__(self, run: _WorkloadRun, fixture: Optional[Path], seed_fixture: bool):
        self._dir: Optional[str] = None
        if run.needs_dir:
            self._dir = tempfile.mkdtemp(prefix="limes-bench-")
            if seed_fixture and run.needs_fixture:
                assert fixture is not None
                shutil.copyfile(fixture, Path(self._dir) / "input.png")
        self.policy = SandboxPolicy(
            preopen_dir=self._dir, allow_writes=run.allow_writes
        )

    def cleanup(self) -> None:
        if self._dir is not None:
            shutil.rmtree(self._dir, ignore_errors=True)


def _workload_files(plan: BenchmarkPlan) -> tuple[bytes, Optional[Path]]:
    base = plan.workload_path or "workloads"
    module_path = wasm_path(plan.workload, base)
    fixture = None
    if plan.workload in ("image", "image-io"):
        fixture = Path(base) / FIXTURE_FILE
        if not fixture.is_file():
            raise FileNotFoundError(
                f"image fixture {fixture} not found; regenerate it with "
                "scripts/gen_fixture.py"
            )
    return module_path.read_bytes(), fixture


# -- runners -----------------------------------------------------------


def run_cold_start_bench(
    plan: BenchmarkPlan, *, registry_dir: str | Path | None = None
) -> BenchmarkResult:
    """Sample cold-start latency: fresh engine context every iteration,
    measuring compile-or-load plus instantiate up to the Ready state.

    ``registry_dir`` pins the backing registry to a caller-owned
    directory (so its counters can be inspected afterwards); by default
    each run gets a throwaway temporary registry.
    """
    if plan.mode not in ("cold-jit", "cold-cached"):
        raise ValueError(f"run_cold_start_bench requires a cold mode, got {plan.mode!r}")
    rng = random.Random(plan.seed)
    recorded_at = datetime.now(timezone.utc)
    values: list[float] = []
    try:
        wasm_bytes, fixture = _workload_files(plan)
        run = _workload_run(plan, rng)
        with contextlib.ExitStack() as stack:
            reg_dir = registry_dir or stack.enter_context(
                tempfile.TemporaryDirectory(prefix="limes-bench-reg-")
            )
            registry = stack.enter_context(Registry(reg_dir))
            module_id = registry.register(wasm_bytes, plan.workload).module_id
            cached_mode = plan.mode == "cold-cached"
            warm_artifact = None
            if cached_mode:
                registry.initialize(module_id)
                warm_artifact, _ = registry.get_or_compile(module_id)

            for _ in range(plan.warmup_iterations):
                # Warmup runs the same measurement path but directly
                # on the executor, leaving registry counters to the
                # measured iterations only.
                sandbox = _Sandbox(run, fixture, seed_fixture=False)
                with Executor(enable_ticker=False) as executor:
                    if cached_mode:
                        executor.measure_cold_start(
                            b"", sandbox.policy, cache=warm_artifact
                        )
                    else:
                        executor.measure_cold_start(wasm_bytes, sandbox.policy)
                sandbox.cleanup()

            for _ in range(plan.iterations):
                sandbox = _Sandbox(run, fixture, seed_fixture=False)
                with Executor(enable_ticker=False) as executor:
                    _, cold_ms, _ = registry.measured_cold_start(
                        executor,
                        module_id,
                        sandbox.policy,
                        use_cache=cached_mode,
                    )
                sandbox.cleanup()
                values.append(cold_ms)
    except (LimesError, OSError, ValueError) as exc:
        logger.error("plan %s aborted: %s", plan.slug, exc)
        return BenchmarkResult(
            plan=plan,
            values_ms=tuple(values),
            recorded_at=recorded_at,
            host_info=host_info_string(),
            aborted=True,
            error=f"{type(exc).__name__}: {exc}",
        )
    return BenchmarkResult(
        plan=plan,
        values_ms=tuple(values),
        recorded_at=recorded_at,
        host_info=host_info_string(),
    )


def run_execution_bench(
    plan: BenchmarkPlan, *, registry_dir: str | Path | None = None
) -> BenchmarkResult:
    """Sample pure execution latency on warm instances: everything up to
    and including instantiation happens outside the timed window; the
    recorded value is the guest-call duration alone."""
    if plan.mode != "execution":
        raise ValueError(f"run_execution_bench requires mode 'execution', got {plan.mode!r}")
    rng = random.Random(plan.seed)
    recorded_at = datetime.now(timezone.utc)
    values: list[float] = []
    try:
        wasm_bytes, fixture = _workload_files(plan)
        run = _workload_run(plan, rng)
        with contextlib.ExitStack() as stack:
            reg_dir = registry_dir or stack.enter_context(
                tempfile.TemporaryDirectory(prefix="limes-bench-reg-")
            )
            registry = stack.enter_context(Registry(reg_dir))
            module_id = registry.register(wasm_bytes, plan.workload).module_id
            registry.initialize(module_id)
            artifact, _ = registry.get_or_compile(module_id)
            with Executor(enable_ticker=False) as executor:
                handle = executor.load_artifact(artifact)
                total = plan.warmup_iterations + plan.iterations
                for i in range(total):
                    sandbox = _Sandbox(run, fixture, seed_fixture=True)
                    try:
                        instance = executor.instantiate(handle, sandbox.policy)
                        _, timing = executor.invoke(instance, run.input_payload)
                    finally:
                        sandbox.cleanup()
                    if i >= plan.warmup_iterations:
                        values.append(timing.execution_ms)
    except (LimesError, OSError, ValueError) as exc:
        logger.error("plan %s aborted: %s", plan.slug, exc)
        return BenchmarkResult(
            plan=plan,
            values_ms=tuple(values),
            recorded_at=recorded_at,
            host_info=host_info_string(),
            aborted=True,
            error=f"{type(exc).__name__}: {exc}",
        )
    return BenchmarkResult(
        plan=plan,
        values_ms=tuple(values),
        recorded_at=recorded_at,
        host_info=host_info_string(),
    )


def run_plan(
    plan: BenchmarkPlan, *, registry_dir: str | Path | None = None
) -> BenchmarkResult:
    """Dispatch a plan to the matching runner."""
    logger.info(
        "running %s: %d iterations (+%d warmup)",
        plan.slug,
        plan.iterations,
        plan.warmup_iterations,
    )
    if plan.mode == "execution":
        return run_execution_bench(plan, registry_dir=registry_dir)
    return run_cold_start_bench(plan, registry_dir=registry_dir)
