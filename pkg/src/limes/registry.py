"""Persistent module registry: content-addressed store of wasm modules
and their compiled artifacts.

On-disk layout under the data directory (``LIMES_DATA_DIR`` overrides
the default ``./limes-data``)::

    modules/<hex-id>.wasm         raw module bytes, content addressed
    artifacts/<hex-id>.limesart   compiled artifact in container format
    index.json                    {version, hash_algo, entries,
                                   compile_count, hit_count}

Every file lands via write-temp-then-rename so a crash at any point
leaves either the old state or the new state, never a torn file; the
index is only flipped after the artifact it references is in place.
Stale ``*.tmp`` files are swept on open, and Initialized entries whose
artifact is missing or fails the container magic check are degraded to
Registered with a logged warning.

Counters: ``compile_count + hit_count`` equals the number of successful
artifact acquisitions (``get_or_compile`` calls, first-time
``initialize``, and ``measured_cold_start``, which delegates to the
same paths).
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from .artifacts import (
    CONTAINER_MAGIC,
    HASH_ALGO,
    CompiledArtifact,
    decode_container,
    encode_container,
    module_hash,
)
from .errors import (
    CompileFailure,
    CorruptArtifact,
    FingerprintMismatch,
    LimesError,
    MalformedModule,
    StorageFailure,
    UnknownModule,
)
from .executor import EpochConfig, Executor, FunctionInstance, SandboxPolicy

__all__ = ["ModuleDescriptor", "Registry", "DEFAULT_DATA_DIR", "INDEX_VERSION"]

logger = logging.getLogger("limes.registry")

DEFAULT_DATA_DIR = "./limes-data"
INDEX_VERSION = 1
MAX_NAME_LEN = 128

STATE_REGISTERED = "Registered"
STATE_INITIALIZED = "Initialized"


@dataclass(frozen=True)
class ModuleDescriptor:
    """Identity and lifecycle state of one registered module.

    ``state`` is Initialized iff ``artifact_path`` points at an existing
    file that passes the container magic check.
    """

    module_id: str
    name: str
    size_bytes: int
    registered_at: datetime
    state: str = STATE_REGISTERED
    artifact_path: Optional[str] = None

    def __post_init__(self) -> None:
        if len(self.module_id) != 64 or any(c not in "0123456789abcdef" for c in self.module_id):
            raise ValueError("module_id must be a 64-char lowercase hex digest")
        if not self.name or len(self.name) > MAX_NAME_LEN:
            raise ValueError(f"name must be 1..{MAX_NAME_LEN} characters")
        if self.size_bytes < 0:
            raise ValueError("size_bytes must be >= 0")
        if self.state not in (STATE_REGISTERED, STATE_INITIALIZED):
            raise ValueError(f"unknown state {self.state!r}")
        if (self.state == STATE_INITIALIZED) != (self.artifact_path is not None):
            raise ValueError("artifact_path present iff state is Initialized")

    def as_dict(self) -> dict:
        return {
            "module_id": self.module_id,
            "name": self.name,
            "size_bytes": self.size_bytes,
            "registered_at": self.registered_at.isoformat(),
            "state": self.state,
            "artifact_path": self.artifact_path,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModuleDescriptor":
        return cls(
            module_id=raw["module_id"],
            name=raw["name"],
            size_bytes=raw["size_bytes"],
            registered_at=datetime.fromisoformat(raw["registered_at"]),
            state=raw["state"],
            artifact_path=raw.get("artifact_path"),
        )


class Registry:
    """Single-node persistent registry, safe for concurrent use within
    one process (all mutation runs under one writer lock).

    ``fault_hook`` is a test seam: it is called with a checkpoint label
    at each step of the persistence sequence and may raise to simulate a
    crash at that exact point.
    """

    def __init__(
        self,
        data_dir: str | Path | None = None,
        *,
        fault_hook: Callable[[str], None] | None = None,
    ) -> None:
        resolved = data_dir or os.environ.get("LIMES_DATA_DIR") or DEFAULT_DATA_DIR
        self.data_dir = Path(resolved)
        self.modules_dir = self.data_dir / "modules"
        self.artifacts_dir = self.data_dir / "artifacts"
        self.index_path = self.data_dir / "index.json"
        self._fault_hook = fault_hook
        self._lock = threading.RLock()
        self._entries: dict[str, ModuleDescriptor] = {}
        self.compile_count = 0
        self.hit_count = 0
        self._executor: Executor | None = None
        try:
            self.modules_dir.mkdir(parents=True, exist_ok=True)
            self.artifacts_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageFailure(f"cannot create data directory {self.data_dir}: {exc}") from None
        self._sweep_temp_files()
        self._load_index()

    # -- lifecycle -----------------------------------------------------

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self) -> "Registry":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    @property
    def executor(self) -> Executor:
        """Internal compile/validate engine (no ticker; never used for
        deadline-bearing invocations)."""
        with self._lock:
            if self._executor is None:
                self._executor = Executor(enable_ticker=False)
            return self._executor

    # -- persistence helpers -------------------------------------------

    def _checkpoint(self, label: str) -> None:
        if self._fault_hook is not None:
            self._fault_hook(label)

    def _atomic_write(self, path: Path, data: bytes, label: str) -> None:
        """write-temp-then-rename with fault-injection checkpoints."""
        tmp = path.with_name(path.name + ".tmp")
        try:
            self._checkpoint(f"pre-{label}-temp")
            with open(tmp, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            self._checkpoint(f"post-{label}-temp")
            os.replace(tmp, path)
            self._checkpoint(f"post-{label}-rename")
        except OSError as exc:
            raise StorageFailure(f"cannot write {path}: {exc}") from None

    def _sweep_temp_files(self) -> None:
        for directory in (self.data_dir, self.modules_dir, self.artifacts_dir):
            for leftover in directory.glob("*.tmp"):
                try:
                    leftover.unlink()
                except OSError:  # pragma: no cover - best effort
                    pass

    def _load_index(self) -> None:
        if not self.index_path.exists():
            return
        try:
            raw = json.loads(self.index_path.read_text("utf-8"))
        except (OSError, ValueError) as exc:
            raise StorageFailure(f"cannot read index {self.index_path}: {exc}") from None
        if raw.get("version") != INDEX_VERSION:
            raise StorageFailure(f"unsupported index version {raw.get('version')!r}")
        if raw.get("hash_algo") != HASH_ALGO:
            raise StorageFailure(
                f"store was built with hash_algo {raw.get('hash_algo')!r}; "
                f"this build uses {HASH_ALGO!r} — the store is invalid"
            )
        self.compile_count = int(raw.get("compile_count", 0))
        self.hit_count = int(raw.get("hit_count", 0))
        degraded = False
        for entry_raw in raw.get("entries", []):
            entry = ModuleDescriptor.from_dict(entry_raw)
            if entry.state == STATE_INITIALIZED and not self._artifact_intact(entry):
                logger.warning(
                    "module %s: artifact %s missing or invalid after restart; "
                    "degrading to Registered",
                    entry.module_id[:12],
                    entry.artifact_path,
                )
                entry = replace(entry, state=STATE_REGISTERED, artifact_path=None)
                degraded = True
            self._entries[entry.module_id] = entry
        if degraded:
            # Re-persist so the on-disk index regains its invariant.
            self._save_index()

    def _artifact_intact(self, entry: ModuleDescriptor) -> bool:
        if entry.artifact_path is None:
            return False
        path = self.data_dir / entry.artifact_path
        try:
            with open(path, "rb") as fh:
                return fh.read(len(CONTAINER_MAGIC)) == CONTAINER_MAGIC
        except OSError:
            return False

    def _save_index(self) -> None:
        payload = {
            "version": INDEX_VERSION,
            "hash_algo": HASH_ALGO,
            "entries": [e.as_dict() for e in self._entries.values()],
            "compile_count": self.compile_count,
            "hit_count": self.hit_count,
        }
        data = json.dumps(payload, indent=2).encode("utf-8")
        self._atomic_write(self.index_path, data, "index")

    # -- operations ----------------------------------------------------

    def register(self, wasm_bytes: bytes, name: str) -> ModuleDescriptor:
        """Store module bytes content-addressed; idempotent on identical
        bytes (the first registration's name wins)."""
        if not wasm_bytes:
            raise MalformedModule("empty byte sequence is not a module")
        if not name or len(name) > MAX_NAME_LEN:
            raise ValueError(f"name must be 1..{MAX_NAME_LEN} characters")
        self.executor.validate(wasm_bytes)
        module_id = module_hash(wasm_bytes).hex()
        with self._lock:
            existing = self._entries.get(module_id)
            if existing is not None:
                return existing
            module_path = self.modules_dir / f"{module_id}.wasm"
            if not module_path.exists():
                self._atomic_write(module_path, bytes(wasm_bytes), "module")
            entry = ModuleDescriptor(
                module_id=module_id,
                name=name,
                size_bytes=len(wasm_bytes),
                registered_at=datetime.now(timezone.utc),
            )
            self._entries[module_id] = entry
            self._save_index()
            return entry

    def get_module(self, module_id: str) -> ModuleDescriptor:
        with self._lock:
            entry = self._entries.get(module_id)
            if entry is None:
                raise UnknownModule(f"no module registered with id {module_id}")
            return entry

    def module_bytes(self, module_id: str) -> bytes:
        entry = self.get_module(module_id)
        path = self.modules_dir / f"{entry.module_id}.wasm"
        try:
            return path.read_bytes()
        except OSError as exc:
            raise StorageFailure(f"module bytes missing for {module_id}: {exc}") from None

    def initialize(self, module_id: str) -> ModuleDescriptor:
        """Compile the module and persist its artifact; idempotent — a
        second call returns the Initialized descriptor without touching
        the compiler or the counters."""
        with self._lock:
            entry = self.get_module(module_id)
            if entry.state == STATE_INITIALIZED and self._artifact_intact(entry):
                return entry
            self.get_or_compile(module_id)
            return self._entries[module_id]

    def get_or_compile(self, module_id: str) -> tuple[CompiledArtifact, bool]:
        """Return the module's artifact, preferring the on-disk cache.

        A present, fingerprint-valid, loadable artifact counts as a hit
        (``hit_count`` += 1).  Anything wrong with the cached copy —
        bad container, foreign fingerprint, blob the engine rejects —
        triggers a transparent recompile with a logged warning
        (``compile_count`` += 1), never an error to the caller.
        """
        with self._lock:
            entry = self.get_module(module_id)
            cached = self._load_cached_artifact(entry)
            if cached is not None:
                self.hit_count += 1
                self._save_index()
                return cached, True
            artifact = self._compile(module_id)
            self._persist_artifact(module_id, artifact)
            return artifact, False

    def _load_cached_artifact(self, entry: ModuleDescriptor) -> CompiledArtifact | None:
        """Decode and engine-verify the cached artifact; None if absent
        or unusable (unusable copies are logged)."""
        if entry.artifact_path is None:
            return None
        path = self.data_dir / entry.artifact_path
        try:
            container = path.read_bytes()
        except OSError:
            logger.warning(
                "module %s: artifact file vanished; recompiling", entry.module_id[:12]
            )
            return None
        try:
            fingerprint, blob = decode_container(container)
            artifact = CompiledArtifact(
                source_hash=bytes.fromhex(entry.module_id),
                fingerprint=fingerprint,
                blob=blob,
                created_at=datetime.fromtimestamp(path.stat().st_mtime, timezone.utc),
            )
            # Full engine verification: a hit must be instantiation-ready.
            self.executor.load_artifact(artifact)
            return artifact
        except (CorruptArtifact, FingerprintMismatch) as exc:
            logger.warning(
                "module %s: cached artifact unusable (%s: %s); recompiling",
                entry.module_id[:12],
                type(exc).__name__,
                exc,
            )
            return None

    def _compile(self, module_id: str) -> CompiledArtifact:
        wasm_bytes = self.module_bytes(module_id)
        try:
            return self.executor.compile_module(wasm_bytes)
        except LimesError as exc:
            raise CompileFailure(f"{type(exc).__name__}: {exc}") from None

    def _persist_artifact(self, module_id: str, artifact: CompiledArtifact) -> None:
        """Artifact file first, index flip last — the order that keeps
        the index from ever referencing a missing artifact."""
        rel_path = f"artifacts/{module_id}.limesart"
        self._atomic_write(
            self.data_dir / rel_path,
            encode_container(artifact.fingerprint, artifact.blob),
            "artifact",
        )
        entry = self._entries[module_id]
        self._entries[module_id] = replace(
            entry, state=STATE_INITIALIZED, artifact_path=rel_path
        )
        self.compile_count += 1
        self._save_index()

    def measured_cold_start(
        self,
        executor: Executor,
        module_id: str,
        policy: SandboxPolicy | None = None,
        epochs: EpochConfig | None = None,
        *,
        use_cache: bool = True,
    ) -> tuple[FunctionInstance, float, bool]:
        """Cold-start a module on ``executor`` and time it, with the
        registry supplying (and counting) the artifact path taken.

        With ``use_cache=True`` this is the serving path: a valid cached
        artifact is deserialized (hit), otherwise the module is
        JIT-compiled inside the timed window and the resulting artifact
        is persisted afterwards (compile).  With ``use_cache=False`` the
        cache is bypassed entirely and nothing is persisted — every call
        is a pure JIT cold start, but still counts one compile.
        """
        with self._lock:
            entry = self.get_module(module_id)
            cached = None
            if use_cache:
                cached = self._load_cached_artifact(entry)
            if cached is not None:
                self.hit_count += 1
                self._save_index()
            else:
                wasm_bytes = self.module_bytes(module_id)

        if cached is not None:
            instance, cold_ms, _ = executor.measure_cold_start(
                b"", policy, epochs, cache=cached
            )
            return instance, cold_ms, True

        # JIT path: compile inside the timed window, persist afterwards.
        t0 = time.perf_counter()
        try:
            handle = executor.load_module(wasm_bytes)
        except LimesError as exc:
            raise CompileFailure(f"{type(exc).__name__}: {exc}") from None
        instance = executor.instantiate(handle, policy, epochs)
        cold_ms = (time.perf_counter() - t0) * 1000.0
        instance._cold_start_ms = cold_ms

        with self._lock:
            if use_cache:
                artifact = CompiledArtifact(
                    source_hash=handle.module_hash,
                    fingerprint=executor.fingerprint,
                    blob=bytes(handle.ref.serialize()),
                )
                self._persist_artifact(module_id, artifact)
            else:
                self.compile_count += 1
                self._save_index()
        return instance, cold_ms, False

    def list_modules(self) -> list[ModuleDescriptor]:
        """All descriptors, most recently registered first."""
        with self._lock:
            return sorted(
                self._entries.values(),
                key=lambda e: (e.registered_at, e.module_id),
                reverse=True,
            )

    def remove(self, module_id: str) -> None:
        """Delete bytes, artifact, and index entry."""
        with self._lock:
            entry = self._entries.get(module_id)
            if entry is None:
                raise UnknownModule(f"no module registered with id {module_id}")
            for path in (
                self.modules_dir / f"{module_id}.wasm",
                self.artifacts_dir / f"{module_id}.limesart",
            ):
                try:
                    path.unlink(missing_ok=True)
                except OSError as exc:
                    raise StorageFailure(f"cannot delete {path}: {exc}") from None
            del self._entries[module_id]
            self._save_index()
