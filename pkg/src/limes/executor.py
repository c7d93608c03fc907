"""Engine embedding: compile, cache-load, instantiate, invoke, interrupt.

The native work happens in the bundled ``limes._engine`` extension
(wasmtime via a thin Rust shim).  This module owns the typed surface:
artifacts, sandbox policies, the instance state machine, and the timing
rules (monotonic clock, execution measured around the guest call only).

Deadlines are wall-clock: an epoch callback installed on every store
compares ``now`` against the invocation deadline on each engine tick and
interrupts the guest when it has passed.  ``EpochConfig`` expresses the
deadline as tick_interval x deadline_ticks; the engine's own ticker
granularity only affects how promptly an expired deadline is noticed.
"""

from __future__ import annotations

import enum
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import _engine
from .artifacts import (
    CompiledArtifact,
    EngineFingerprint,
    current_fingerprint,
    module_hash,
)
from .errors import (
    CorruptArtifact,
    EngineFailure,
    FingerprintMismatch,
    GuestError,
    GuestTrap,
    InstanceReused,
    Interrupted,
    LinkError,
    MalformedModule,
    MissingExport,
    NotRunning,
    SandboxError,
)

__all__ = [
    "EpochConfig",
    "SandboxPolicy",
    "InstanceState",
    "TimingBreakdown",
    "FunctionInstance",
    "LoadedModule",
    "Executor",
    "REQUIRED_EXPORTS",
]

# Canonical guest ABI: linear memory plus the byte-in/byte-out entrypoint
# pair.  `run(input_ptr, input_len, result_ptr)` fills a 12-byte result
# record; `limes_alloc` lets the host place the input in guest memory.
REQUIRED_EXPORTS: dict[str, str] = {
    "memory": "memory",
    "limes_alloc": "func(i32)->(i32)",
    "run": "func(i32,i32,i32)->()",
}

# Result codes produced by the native `Instance.invoke`.
_CODE_OK = 0
_CODE_GUEST_ERROR = 1
_CODE_INTERRUPTED = 2
_CODE_TRAP = 3
_CODE_ENGINE = 4


@dataclass(frozen=True)
class EpochConfig:
    """Interruption cadence: the effective wall deadline is
    ``tick_interval_ms * deadline_ticks`` (defaults: 10 ms x 3000 = 30 s)."""

    tick_interval_ms: float = 10.0
    deadline_ticks: int = 3000

    def __post_init__(self) -> None:
        if not self.tick_interval_ms > 0:
            raise ValueError("tick_interval_ms must be > 0")
        if self.deadline_ticks < 1:
            raise ValueError("deadline_ticks must be >= 1")

    @property
    def deadline_ms(self) -> float:
        return self.tick_interval_ms * self.deadline_ticks


@dataclass(frozen=True)
class SandboxPolicy:
    """Capabilities granted to one instance.

    ``preopen_dir`` (if set) becomes the guest's filesystem root ``/``;
    it must exist as a directory when the instance is created.  With
    ``allow_writes`` false the guest sees a read-only mount and write
    attempts fail inside the guest.  ``env_vars`` entries are
    ``KEY=value`` strings.
    """

    preopen_dir: Optional[str] = None
    allow_writes: bool = False
    stdin_bytes: bytes = b""
    capture_stdout: bool = False
    env_vars: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for entry in self.env_vars:
            key, sep, _ = entry.partition("=")
            if not sep or not key:
                raise ValueError(f"env_vars entry {entry!r} is not KEY=value")

    def split_env(self) -> list[tuple[str, str]]:
        return [tuple(e.split("=", 1)) for e in self.env_vars]  # type: ignore[misc]


class InstanceState(enum.Enum):
    READY = "Ready"
    RUNNING = "Running"
    FINISHED = "Finished"
    INTERRUPTED = "Interrupted"
    FAILED = "Failed"


_TERMINAL = frozenset({InstanceState.FINISHED, InstanceState.INTERRUPTED, InstanceState.FAILED})


@dataclass(frozen=True)
class TimingBreakdown:
    """Cold-start and execution durations for one invocation.

    All values come from a monotonic clock.  ``total_ms`` covers the
    full host-side dispatch and therefore satisfies
    ``total_ms >= cold_start_ms + execution_ms``.
    """

    cold_start_ms: float
    execution_ms: float
    total_ms: float
    cache_hit: bool

    def __post_init__(self) -> None:
        if self.cold_start_ms < 0 or self.execution_ms < 0 or self.total_ms < 0:
            raise ValueError("durations must be >= 0")
        # Guard against additive rounding at the float boundary.
        if self.total_ms + 1e-9 < self.cold_start_ms + self.execution_ms:
            raise ValueError("total_ms must cover cold_start_ms + execution_ms")

    def as_dict(self) -> dict:
        return {
            "cold_start_ms": self.cold_start_ms,
            "execution_ms": self.execution_ms,
            "total_ms": self.total_ms,
            "cache_hit": self.cache_hit,
        }


@dataclass(frozen=True)
class LoadedModule:
    """An engine-resident module ready for instantiation; ``from_cache``
    records whether it was deserialized from an artifact (cache hit) or
    JIT-compiled from source bytes."""

    module_hash: bytes
    from_cache: bool
    ref: object = field(repr=False)


class FunctionInstance:
    """Single-use sandboxed instance of a module.

    State transitions only along Ready -> Running -> one of
    {Finished, Interrupted, Failed}; a second ``invoke`` raises
    ``InstanceReused``.  ``interrupt`` may be called from any thread.
    """

    def __init__(
        self,
        *,
        module_hash: bytes,
        native: object,
        default_deadline_ms: float,
        cold_start_ms: float,
        cache_hit: bool,
    ) -> None:
        self.instance_id: uuid.UUID = uuid.uuid4()
        self.module_hash = module_hash
        self.ready_at: float = time.perf_counter()
        self._state = InstanceState.READY
        self._lock = threading.Lock()
        self._native = native
        self._default_deadline_ms = default_deadline_ms
        self._cold_start_ms = cold_start_ms
        self._cache_hit = cache_hit

    @property
    def state(self) -> InstanceState:
        with self._lock:
            return self._state

    @property
    def cold_start_ms(self) -> float:
        return self._cold_start_ms

    @property
    def cache_hit(self) -> bool:
        return self._cache_hit

    def stdout(self) -> bytes:
        """Captured stdout (empty unless the policy enabled capture)."""
        return self._native.stdout()

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"FunctionInstance(id={self.instance_id}, "
            f"module={self.module_hash.hex()[:12]}, state={self.state.value})"
        )


class Executor:
    """Owns one engine (and its epoch ticker) and runs instances on it.

    ``enable_ticker=False`` creates an engine whose epoch never advances
    on its own: deadlines and interrupts are then inert, which removes
    every scrap of interruption overhead from timing measurements.
    """

    def __init__(self, epoch: EpochConfig | None = None, *, enable_ticker: bool = True) -> None:
        self.epoch = epoch or EpochConfig()
        self._fingerprint = current_fingerprint()
        tick_ms = self.epoch.tick_interval_ms if enable_ticker else 0.0
        self._engine = _engine.Engine(tick_ms=tick_ms)
        self._closed = False

    # -- lifecycle -----------------------------------------------------

    @property
    def fingerprint(self) -> EngineFingerprint:
        return self._fingerprint

    def shutdown(self) -> None:
        """Stop the epoch ticker thread.  Idempotent."""
        if not self._closed:
            self._closed = True
            self._engine.shutdown()

    def __enter__(self) -> "Executor":
        return self

    def __exit__(self, *exc: object) -> None:
        self.shutdown()

    # -- compile / load ------------------------------------------------

    def validate(self, wasm_bytes: bytes) -> None:
        """Check that ``wasm_bytes`` is a well-formed binary module
        without running the compiler; raises ``MalformedModule``."""
        try:
            self._engine.validate(bytes(wasm_bytes))
        except RuntimeError as exc:
            _, message = _split_marker(exc)
            raise MalformedModule(message) from None

    def compile_module(
        self,
        wasm_bytes: bytes,
        fingerprint_request: EngineFingerprint | None = None,
    ) -> CompiledArtifact:
        """JIT-compile ``wasm_bytes`` and serialize the machine code into
        a reusable artifact.

        ``fingerprint_request``, when given, asserts which engine the
        caller expects to produce the artifact; a mismatch fails fast
        with ``FingerprintMismatch`` before any compilation work.
        """
        if fingerprint_request is not None and fingerprint_request != self._fingerprint:
            raise FingerprintMismatch(
                "requested fingerprint "
                f"{fingerprint_request.canonical_line()!r} != engine "
                f"{self._fingerprint.canonical_line()!r}"
            )
        ref = self._compile_ref(wasm_bytes)
        self._check_abi(ref)
        blob = ref.serialize()
        return CompiledArtifact(
            source_hash=module_hash(wasm_bytes),
            fingerprint=self._fingerprint,
            blob=bytes(blob),
        )

    def load_artifact(
        self,
        artifact: CompiledArtifact,
        current: EngineFingerprint | None = None,
    ) -> LoadedModule:
        """Rehydrate an artifact without recompiling.

        The fingerprint comparison runs before the engine ever sees the
        blob; ``FingerprintMismatch`` means the caller must fall back to
        ``compile_module``.
        """
        current = current or self._fingerprint
        if artifact.fingerprint != current:
            raise FingerprintMismatch(
                f"artifact fingerprint {artifact.fingerprint.canonical_line()!r} "
                f"!= engine {current.canonical_line()!r}"
            )
        try:
            ref = self._engine.deserialize(artifact.blob)
        except RuntimeError as exc:
            marker, message = _split_marker(exc)
            if marker == "CORRUPT":
                raise CorruptArtifact(message) from None
            raise EngineFailure(message) from None
        self._check_abi(ref)
        return LoadedModule(module_hash=artifact.source_hash, from_cache=True, ref=ref)

    def load_module(self, wasm_bytes: bytes) -> LoadedModule:
        """JIT-compile for immediate use, skipping serialization — the
        uncached invocation path."""
        ref = self._compile_ref(wasm_bytes)
        self._check_abi(ref)
        return LoadedModule(module_hash=module_hash(wasm_bytes), from_cache=False, ref=ref)

    def _compile_ref(self, wasm_bytes: bytes):
        try:
            return self._engine.compile(bytes(wasm_bytes))
        except RuntimeError as exc:
            marker, message = _split_marker(exc)
            if marker in ("MALFORMED", "COMPILE"):
                raise MalformedModule(message) from None
            raise EngineFailure(message) from None

    def _check_abi(self, ref) -> None:
        exported = dict(ref.exports())
        missing = [
            f"{name}: {sketch}"
            for name, sketch in REQUIRED_EXPORTS.items()
            if exported.get(name) != sketch
        ]
        if missing:
            raise MissingExport(
                "module does not export the canonical entrypoint interface; "
                "missing or mistyped: " + ", ".join(missing)
            )

    # -- instantiate / invoke / interrupt ------------------------------

    def instantiate(
        self,
        handle: LoadedModule,
        policy: SandboxPolicy | None = None,
        epochs: EpochConfig | None = None,
    ) -> FunctionInstance:
        """Create a Ready instance with WASI capabilities limited to
        ``policy``; ``epochs`` fixes this instance's default deadline."""
        policy = policy or SandboxPolicy()
        epochs = epochs or self.epoch
        t0 = time.perf_counter()

        preopen = None
        if policy.preopen_dir is not None:
            host_dir = Path(policy.preopen_dir)
            if not host_dir.is_dir():
                raise SandboxError(
                    f"preopen_dir {str(host_dir)!r} does not exist or is not a directory"
                )
            preopen = (str(host_dir), "/")

        try:
            native = self._engine.instantiate(
                handle.ref,
                preopen,
                not policy.allow_writes,
                policy.split_env(),
                policy.stdin_bytes if policy.stdin_bytes else None,
                policy.capture_stdout,
            )
        except RuntimeError as exc:
            marker, message = _split_marker(exc)
            if marker == "LINK":
                raise LinkError(message) from None
            if marker == "SANDBOX":
                raise SandboxError(message) from None
            if marker == "ABI":
                raise MissingExport(message) from None
            raise EngineFailure(message) from None

        cold_ms = (time.perf_counter() - t0) * 1000.0
        return FunctionInstance(
            module_hash=handle.module_hash,
            native=native,
            default_deadline_ms=epochs.deadline_ms,
            cold_start_ms=cold_ms,
            cache_hit=handle.from_cache,
        )

    def measure_cold_start(
        self,
        wasm_bytes: bytes,
        policy: SandboxPolicy | None = None,
        epochs: EpochConfig | None = None,
        cache: CompiledArtifact | None = None,
    ) -> tuple[FunctionInstance, float, bool]:
        """Time the full cold start: compile-or-load plus instantiate,
        ending exactly when the instance is Ready.

        Returns ``(instance, cold_start_ms, cache_hit)``; the same cold
        start is carried into the instance's eventual TimingBreakdown.
        """
        t0 = time.perf_counter()
        if cache is not None:
            handle = self.load_artifact(cache)
        else:
            handle = self.load_module(wasm_bytes)
        instance = self.instantiate(handle, policy, epochs)
        cold_ms = (time.perf_counter() - t0) * 1000.0
        instance._cold_start_ms = cold_ms
        instance.ready_at = time.perf_counter()
        return instance, cold_ms, handle.from_cache

    def invoke(
        self,
        instance: FunctionInstance,
        input_bytes: bytes,
        deadline_ms: float | None = None,
    ) -> tuple[bytes, TimingBreakdown]:
        """Run the guest entrypoint on ``input_bytes``.

        Execution time is measured around the guest call only; the
        instance moves to Finished/Interrupted/Failed and cannot be
        invoked again.  ``deadline_ms`` overrides the instance default
        for this invocation.
        """
        with instance._lock:
            if instance._state is not InstanceState.READY:
                raise InstanceReused(
                    f"instance {instance.instance_id} is {instance._state.value}, not Ready"
                )
            instance._state = InstanceState.RUNNING

        effective_deadline = (
            float(deadline_ms) if deadline_ms is not None else instance._default_deadline_ms
        )
        t_start = time.perf_counter()
        try:
            t_exec = time.perf_counter()
            code, payload = instance._native.invoke(bytes(input_bytes), effective_deadline)
            execution_ms = (time.perf_counter() - t_exec) * 1000.0
        except RuntimeError as exc:
            self._transition(instance, InstanceState.FAILED)
            _, message = _split_marker(exc)
            raise EngineFailure(message) from None

        total_ms = instance._cold_start_ms + (time.perf_counter() - t_start) * 1000.0
        timing = TimingBreakdown(
            cold_start_ms=instance._cold_start_ms,
            execution_ms=execution_ms,
            total_ms=total_ms,
            cache_hit=instance._cache_hit,
        )
        message = payload.decode("utf-8", errors="replace")

        if code == _CODE_OK:
            self._transition(instance, InstanceState.FINISHED)
            return bytes(payload), timing
        if code == _CODE_GUEST_ERROR:
            self._transition(instance, InstanceState.FAILED)
            raise GuestError(message)
        if code == _CODE_INTERRUPTED:
            self._transition(instance, InstanceState.INTERRUPTED)
            raise Interrupted(message, timing=timing)
        if code == _CODE_TRAP:
            self._transition(instance, InstanceState.FAILED)
            raise GuestTrap(message)
        self._transition(instance, InstanceState.FAILED)
        raise EngineFailure(message)

    def interrupt(self, instance: FunctionInstance) -> None:
        """Ask a Running instance to stop; callable from any thread.

        The guest observes the interrupt at its next epoch check and the
        in-flight ``invoke`` raises ``Interrupted``.
        """
        with instance._lock:
            if instance._state is not InstanceState.RUNNING:
                raise NotRunning(
                    f"instance {instance.instance_id} is {instance._state.value}, not Running"
                )
            instance._native.interrupt()

    @staticmethod
    def _transition(instance: FunctionInstance, state: InstanceState) -> None:
        with instance._lock:
            instance._state = state


def _split_marker(exc: RuntimeError) -> tuple[str, str]:
    """Split the native shim's ``MARKER: message`` error convention."""
    text = str(exc)
    marker, sep, rest = text.partition(": ")
    if sep and marker.isupper() and marker.isalpha():
        return marker, rest
    return "", text
