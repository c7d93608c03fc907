"""Limes: a lightweight execution environment for serverless WebAssembly
functions.

Core pieces:

* :mod:`limes.executor` — engine embedding: compile, cache-load,
  instantiate, invoke, and interrupt wasm modules under per-instance
  WASI sandboxes and epoch deadlines.
* :mod:`limes.registry` — persistent content-addressed module store
  with a compiled-artifact cache.
* :mod:`limes.gateway` — REST control plane (``limes-gateway``).
* :mod:`limes.workloads` — payload schemas and host-side oracles for
  the bundled guest workloads.
* :mod:`limes.bench` — the ``limes-bench`` measurement harness.
"""

from __future__ import annotations

from .artifacts import (
    CompiledArtifact,
    EngineFingerprint,
    current_fingerprint,
    module_hash,
)
from .errors import (
    CompileFailure,
    CorruptArtifact,
    EmptySamples,
    EngineFailure,
    FingerprintMismatch,
    GuestError,
    GuestTrap,
    InstanceReused,
    Interrupted,
    LimesError,
    LinkError,
    MalformedModule,
    MissingExport,
    NotRunning,
    SandboxError,
    StorageFailure,
    UnknownInvocation,
    UnknownModule,
)
from .executor import (
    EpochConfig,
    Executor,
    FunctionInstance,
    InstanceState,
    LoadedModule,
    SandboxPolicy,
    TimingBreakdown,
)
from .registry import ModuleDescriptor, Registry

__version__ = "1.0.0"

__all__ = [
    "__version__",
    # artifacts
    "CompiledArtifact",
    "EngineFingerprint",
    "current_fingerprint",
    "module_hash",
    # executor
    "EpochConfig",
    "Executor",
    "FunctionInstance",
    "InstanceState",
    "LoadedModule",
    "SandboxPolicy",
    "TimingBreakdown",
    # registry
    "ModuleDescriptor",
    "Registry",
    # errors
    "LimesError",
    "MalformedModule",
    "MissingExport",
    "EngineFailure",
    "CompileFailure",
    "FingerprintMismatch",
    "CorruptArtifact",
    "LinkError",
    "SandboxError",
    "GuestTrap",
    "GuestError",
    "Interrupted",
    "InstanceReused",
    "NotRunning",
    "UnknownModule",
    "UnknownInvocation",
    "StorageFailure",
    "EmptySamples",
]
