"""REST control plane: register, initialize, invoke, inspect, stop.

A single process owns one :class:`~limes.registry.Registry`, one
serving :class:`~limes.executor.Executor` (with the epoch ticker
running, so deadlines and stop requests work), and a worker pool that
runs the blocking engine calls off the event loop.  Admission control
is a non-blocking semaphore sized at ``max_concurrent_invocations``;
requests beyond the cap are rejected with 429 without side effects.

Invocations are synchronous at the HTTP level: the response carries the
full InvocationRecord.  Records stay retrievable afterwards from an
in-memory ring of the most recent 10,000 invocations.  Interrupted is
an outcome, not a transport failure: it travels in-band as HTTP 200
with ``status: "Interrupted"``.

Each invocation runs in a fresh writable temporary directory mounted as
the guest's filesystem root and deleted afterwards, so no state leaks
between invocations or tenants.
"""

from __future__ import annotations

import asyncio
import base64
import logging
import os
import shutil
import tempfile
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, replace
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse

from .errors import (
    Interrupted,
    LimesError,
    NotRunning,
    UnknownInvocation,
)
from .executor import (
    EpochConfig,
    Executor,
    FunctionInstance,
    SandboxPolicy,
    TimingBreakdown,
)
from .registry import Registry

__all__ = ["ServiceConfig", "InvocationRecord", "GatewayState", "create_app", "main"]

logger = logging.getLogger("limes.gateway")

MAX_BODY_BYTES = 64 * 1024 * 1024
RECORD_RING_SIZE = 10_000
DRAIN_SECONDS = 5.0

STATUS_PENDING = "Pending"
STATUS_RUNNING = "Running"
STATUS_FINISHED = "Finished"
STATUS_INTERRUPTED = "Interrupted"
STATUS_FAILED = "Failed"

_TERMINAL_STATUSES = frozenset({STATUS_FINISHED, STATUS_INTERRUPTED, STATUS_FAILED})


@dataclass(frozen=True)
class ServiceConfig:
    """Gateway configuration; environment variables ``LIMES_PORT``,
    ``LIMES_DATA_DIR`` and ``LIMES_MAX_CONCURRENCY`` override defaults."""

    listen_port: int = 7070
    max_concurrent_invocations: int = 64
    default_deadline_ms: int = 30_000
    data_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if not (0 < self.listen_port < 65536):
            raise ValueError("listen_port must be a valid TCP port")
        if self.max_concurrent_invocations < 1:
            raise ValueError("max_concurrent_invocations must be >= 1")
        if self.default_deadline_ms < 1:
            raise ValueError("default_deadline_ms must be positive")

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        return cls(
            listen_port=int(os.environ.get("LIMES_PORT", 7070)),
            max_concurrent_invocations=int(os.environ.get("LIMES_MAX_CONCURRENCY", 64)),
            data_dir=os.environ.get("LIMES_DATA_DIR"),
        )


@dataclass(frozen=True)
class InvocationRecord:
    """One invocation's lifecycle.  When the status is terminal exactly
    one of ``output``/``error`` is set; ``timing`` exists iff the guest
    actually ran to an outcome (Finished or Interrupted)."""

    invocation_id: str
    module_id: str
    input: bytes
    deadline_ms: int
    status: str = STATUS_PENDING
    timing: Optional[TimingBreakdown] = None
    output: Optional[bytes] = None
    error: Optional[dict] = None

    def __post_init__(self) -> None:
        terminal = self.status in _TERMINAL_STATUSES
        if terminal and (self.output is None) == (self.error is None):
            raise ValueError("terminal records carry exactly one of output/error")
        if not terminal and (self.output is not None or self.error is not None):
            raise ValueError("non-terminal records carry neither output nor error")
        if (self.timing is not None) != (
            self.status in (STATUS_FINISHED, STATUS_INTERRUPTED)
        ):
            raise ValueError("timing present iff status is Finished or Interrupted")

    def as_dict(self) -> dict:
        return {
            "invocation_id": self.invocation_id,
            "module_id": self.module_id,
            "input_b64": base64.b64encode(self.input).decode("ascii"),
            "deadline_ms": self.deadline_ms,
            "status": self.status,
            "timing": self.timing.as_dict() if self.timing else None,
            "output_b64": (
                base64.b64encode(self.output).decode("ascii")
                if self.output is not None
                else None
            ),
            "error": self.error,
        }


def _error_response(exc: LimesError) -> JSONResponse:
    status = {
        "MalformedModule": 400,
        "UnknownModule": 404,
        "UnknownInvocation": 404,
        "CompileFailure": 422,
        "StorageFailure": 500,
    }.get(type(exc).__name__, 500)
    return JSONResponse(
        status_code=status,
        content={"error": {"code": type(exc).__name__, "message": str(exc)}},
    )


class GatewayState:
    """Shared mutable state behind the HTTP handlers."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        self.registry = Registry(config.data_dir)
        self.executor = Executor(EpochConfig())  # ticker on: deadlines live here
        self._pool = ThreadPoolExecutor(
            max_workers=config.max_concurrent_invocations + 4,
            thread_name_prefix="limes-invoke",
        )
        self._admission = threading.BoundedSemaphore(config.max_concurrent_invocations)
        self._lock = threading.Lock()
        self._records: dict[str, InvocationRecord] = {}
        self._running: dict[str, FunctionInstance] = {}
        self._in_flight = 0

    # -- records ring --------------------------------------------------

    def _store_record(self, record: InvocationRecord) -> None:
        with self._lock:
            self._records[record.invocation_id] = record
            while len(self._records) > RECORD_RING_SIZE:
                self._records.pop(next(iter(self._records)))

    def get_record(self, invocation_id: str) -> InvocationRecord:
        with self._lock:
            record = self._records.get(invocation_id)
        if record is None:
            raise UnknownInvocation(f"no invocation with id {invocation_id}")
        return record

    # -- blocking operations (run on the worker pool) ------------------

    def run_invocation(self, record: InvocationRecord) -> InvocationRecord:
        """Full invocation in a worker thread: fresh sandbox, cold start
        through the registry cache, guest call, record update."""
        invocation_id = record.invocation_id
        sandbox_dir = tempfile.mkdtemp(prefix="limes-inv-")
        policy = SandboxPolicy(preopen_dir=sandbox_dir, allow_writes=True)
        try:
            instance, _, _cache_hit = self.registry.measured_cold_start(
                self.executor, record.module_id, policy
            )
            record = replace(record, status=STATUS_RUNNING)
            self._store_record(record)
            with self._lock:
                self._running[invocation_id] = instance
            try:
                output, timing = self.executor.invoke(
                    instance, record.input, deadline_ms=float(record.deadline_ms)
                )
                record = replace(
                    record, status=STATUS_FINISHED, output=output, timing=timing
                )
            except Interrupted as exc:
                record = replace(
                    record,
                    status=STATUS_INTERRUPTED,
                    error={"code": "Interrupted", "message": str(exc)},
                    timing=exc.timing,
                )
            except LimesError as exc:
                record = replace(
                    record,
                    status=STATUS_FAILED,
                    error={"code": type(exc).__name__, "message": str(exc)},
                )
        except LimesError as exc:
            record = replace(
                record,
                status=STATUS_FAILED,
                error={"code": type(exc).__name__, "message": str(exc)},
            )
        finally:
            with self._lock:
                self._running.pop(invocation_id, None)
            shutil.rmtree(sandbox_dir, ignore_errors=True)
        self._store_record(record)
        return record

    def stop_invocation(self, invocation_id: str) -> InvocationRecord:
        """Request interruption of a running invocation.  A no-op when
        the invocation already reached a terminal state."""
        record = self.get_record(invocation_id)
        with self._lock:
            instance = self._running.get(invocation_id)
        if instance is not None:
            try:
                self.executor.interrupt(instance)
            except NotRunning:
                pass  # finished (or not yet entered) between lookup and stop
        return self.get_record(invocation_id)

    # -- metrics / shutdown --------------------------------------------

    def metrics(self) -> dict:
        with self._lock:
            in_flight = self._in_flight
        return {
            "compile_count": self.registry.compile_count,
            "hit_count": self.registry.hit_count,
            "in_flight": in_flight,
        }

    def admission_acquire(self) -> bool:
        if not self._admission.acquire(blocking=False):
            return False
        with self._lock:
            self._in_flight += 1
        return True

    def admission_release(self) -> None:
        with self._lock:
            self._in_flight -= 1
        self._admission.release()

    def drain_and_close(self) -> None:
        """Give in-flight invocations a grace period, interrupt
        stragglers, then tear the engine down.

        Under uvicorn this runs after the server's own graceful-shutdown
        window (which already spent ~2 s of the 5 s drain budget
        cancelling unfinished requests), so the waits here are sized to
        keep the whole shutdown under :data:`DRAIN_SECONDS`.
        """
        deadline = time.monotonic() + DRAIN_SECONDS - 3.0
        while time.monotonic() < deadline:
            with self._lock:
                if self._in_flight == 0:
                    break
            time.sleep(0.05)
        with self._lock:
            stragglers = list(self._running.values())
        for instance in stragglers:
            try:
                self.executor.interrupt(instance)
            except NotRunning:
                pass
        give_up = time.monotonic() + 1.0
        while time.monotonic() < give_up:
            with self._lock:
                if self._in_flight == 0:
                    break
            time.sleep(0.05)
        self._pool.shutdown(wait=False)
        self.executor.shutdown()
        self.registry.close()


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    """Build the ASGI application (state is created on startup and torn
    down with a bounded drain on shutdown)."""
    config = config or ServiceConfig.from_env()
    state = GatewayState(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        await asyncio.get_running_loop().run_in_executor(None, state.drain_and_close)

    app = FastAPI(title="limes-gateway", version="1.0", lifespan=lifespan)
    app.state.limes = state

    async def offload(fn, *args):
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(state._pool, fn, *args)

    @app.post("/modules", status_code=201)
    async def register_module(request: Request, name: str = Query("module")):
        declared = request.headers.get("content-length")
        if declared and declared.isdigit() and int(declared) > MAX_BODY_BYTES:
            return JSONResponse(
                status_code=413,
                content={"error": {"code": "BodyTooLarge",
                                   "message": f"body exceeds {MAX_BODY_BYTES} bytes"}},
            )
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            return JSONResponse(
                status_code=413,
                content={"error": {"code": "BodyTooLarge",
                                   "message": f"body exceeds {MAX_BODY_BYTES} bytes"}},
            )
        try:
            descriptor = await offload(state.registry.register, body, name)
        except LimesError as exc:
            return _error_response(exc)
        return descriptor.as_dict()

    @app.post("/modules/{module_id}/init")
    async def initialize_module(module_id: str):
        try:
            descriptor = await offload(state.registry.initialize, module_id)
        except LimesError as exc:
            return _error_response(exc)
        return descriptor.as_dict()

    @app.get("/modules")
    async def list_modules():
        return [d.as_dict() for d in state.registry.list_modules()]

    @app.post("/modules/{module_id}/invoke")
    async def invoke_module(
        request: Request,
        module_id: str,
        deadline_ms: Optional[int] = Query(None, gt=0),
    ):
        try:
            state.registry.get_module(module_id)
        except LimesError as exc:
            return _error_response(exc)
        if not state.admission_acquire():
            return JSONResponse(
                status_code=429,
                content={"error": {
                    "code": "TooManyInvocations",
                    "message": (
                        "max_concurrent_invocations="
                        f"{config.max_concurrent_invocations} exceeded"
                    ),
                }},
            )
        body = await request.body()
        record = InvocationRecord(
            invocation_id=str(uuid.uuid4()),
            module_id=module_id,
            input=body,
            deadline_ms=deadline_ms or config.default_deadline_ms,
        )
        state._store_record(record)
        try:
            record = await offload(state.run_invocation, record)
        finally:
            state.admission_release()
        return record.as_dict()

    @app.get("/invocations/{invocation_id}")
    async def get_invocation(invocation_id: str):
        try:
            return state.get_record(invocation_id).as_dict()
        except LimesError as exc:
            return _error_response(exc)

    @app.post("/invocations/{invocation_id}/stop", status_code=202)
    async def stop_invocation(invocation_id: str):
        try:
            record = await offload(state.stop_invocation, invocation_id)
        except LimesError as exc:
            return _error_response(exc)
        return record.as_dict()

    @app.get("/metrics")
    async def metrics():
        return state.metrics()

    return app


def _make_server(app: FastAPI, port: int):
    """A uvicorn server whose signal-initiated shutdown is a *successful*
    exit.

    Stock uvicorn re-raises the captured SIGINT/SIGTERM after its
    graceful shutdown, which makes the process report death-by-signal;
    this service's contract is exit code 0 once the drain completes.
    """
    import contextlib
    import signal as signal_mod

    import uvicorn

    class GracefulServer(uvicorn.Server):
        @contextlib.contextmanager
        def capture_signals(self):
            if threading.current_thread() is not threading.main_thread():
                yield
                return
            handled = (signal_mod.SIGINT, signal_mod.SIGTERM)
            original = {
                sig: signal_mod.signal(sig, self.handle_exit) for sig in handled
            }
            try:
                yield
            finally:
                for sig, handler in original.items():
                    signal_mod.signal(sig, handler)
            # no re-raise: the drain already ran; exit normally

    return GracefulServer(
        uvicorn.Config(
            app,
            host="0.0.0.0",
            port=port,
            # Bounded request drain so SIGINT/SIGTERM always exits within
            # the 5 s budget even while a long-deadline guest is running;
            # the lifespan teardown then interrupts whatever is still on
            # the engine.
            timeout_graceful_shutdown=2,
        )
    )


def main(argv: list[str] | None = None) -> int:
    """``limes-gateway`` console entrypoint."""
    import argparse

    parser = argparse.ArgumentParser(
        prog="limes-gateway",
        description="Limes REST control plane for serverless wasm functions.",
    )
    parser.add_argument("--port", type=int, default=None, help="listen port")
    parser.add_argument("--data-dir", default=None, help="registry data directory")
    parser.add_argument(
        "--max-concurrency", type=int, default=None, help="invocation admission cap"
    )
    args = parser.parse_args(argv)

    env_config = ServiceConfig.from_env()
    config = ServiceConfig(
        listen_port=args.port or env_config.listen_port,
        max_concurrent_invocations=(
            args.max_concurrency or env_config.max_concurrent_invocations
        ),
        default_deadline_ms=env_config.default_deadline_ms,
        data_dir=args.data_dir or env_config.data_dir,
    )
    logging.basicConfig(level=logging.INFO)
    _make_server(create_app(config), config.listen_port).run()
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
