"""Exception taxonomy for the limes runtime.

Every failure surfaced by the public API is a :class:`LimesError` subclass.
Guest-level outcomes (the guest's error arm, traps, deadline expiry) are
kept distinct from host-side failures (storage, engine, registry) so
callers can map them to stable error codes.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .executor import TimingBreakdown


class LimesError(Exception):
    """Base class for all limes errors."""

    #: Stable machine-readable code; defaults to the class name.
    code = "LimesError"

    def __init_subclass__(cls, **kwargs: object) -> None:
        super().__init_subclass__(**kwargs)
        cls.code = cls.__name__


# --- module validation / compilation -------------------------------------

class MalformedModule(LimesError):
    """The bytes are not a valid WebAssembly binary module."""


class MissingExport(LimesError):
    """The module does not export the canonical ``run`` ABI."""


class EngineFailure(LimesError):
    """The embedded engine failed outside the guest's control."""


class CompileFailure(LimesError):
    """Registry-level wrapper: compilation during initialize failed."""


# --- artifact cache -------------------------------------------------------

class FingerprintMismatch(LimesError):
    """A compiled artifact was produced by a different engine fingerprint."""


class CorruptArtifact(LimesError):
    """A compiled artifact failed container or engine validation."""


# --- instantiation --------------------------------------------------------

class LinkError(LimesError):
    """The module imports a host function that is not provided."""


class SandboxError(LimesError):
    """The WASI sandbox could not be constructed (e.g. bad preopen dir)."""


# --- invocation -----------------------------------------------------------

class GuestTrap(LimesError):
    """The guest faulted (unreachable, out-of-bounds, ...)."""

    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class GuestError(LimesError):
    """The guest ran to completion but returned its error arm."""


class Interrupted(LimesError):
    """The invocation was cut short by its deadline or a stop request.

    Carries the :class:`~limes.executor.TimingBreakdown` of the partial
    run so callers can still report timing for interrupted invocations.
    """

    def __init__(self, reason: str, timing: "TimingBreakdown | None" = None) -> None:
        super().__init__(reason)
        self.reason = reason
        self.timing = timing


class InstanceReused(LimesError):
    """invoke() was called on an instance that is not in the Ready state."""


class NotRunning(LimesError):
    """interrupt() was called on an instance that is not Running."""


# --- registry / storage ---------------------------------------------------

class UnknownModule(LimesError):
    """The module id is not present in the registry."""


class UnknownInvocation(LimesError):
    """The invocation id is not present in the record table."""


class StorageFailure(LimesError):
    """A filesystem operation in the data directory failed."""


# --- benchmarking ---------------------------------------------------------

class EmptySamples(LimesError):
    """A statistics operation was applied to an empty sample set."""
