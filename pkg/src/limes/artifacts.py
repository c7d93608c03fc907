"""Engine fingerprints and the on-disk compiled-artifact container.

A compiled artifact is engine-serialized machine code. It is only safe to
reload on an engine with the identical fingerprint, so the container binds
the blob to the fingerprint that produced it:

    8 bytes  magic ``LIMESART``
    1 byte   container version (currently 1)
    n bytes  canonical fingerprint line, terminated by LF
    rest     opaque engine blob
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Final

from .errors import CorruptArtifact

ENGINE_NAME: Final = "wasmtime"
#: Engine features that affect generated code; part of the fingerprint.
FEATURE_FLAGS: Final = ("epoch-interruption", "wasi-preview1")

CONTAINER_MAGIC: Final = b"LIMESART"
CONTAINER_VERSION: Final = 1

HASH_ALGO: Final = "sha256"
HASH_LEN: Final = 32


def module_hash(wasm_bytes: bytes) -> bytes:
    """Content hash used as module identity throughout the system."""
    return hashlib.sha256(wasm_bytes).digest()


@dataclass(frozen=True)
class EngineFingerprint:
    """Identity of an engine build for artifact-reuse safety.

    Two fingerprints compare equal iff all four fields are equal; the
    canonical line gives a byte-comparable serialization.
    """

    engine_name: str
    engine_version: str
    target_triple: str
    feature_flags: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_flags", tuple(sorted(self.feature_flags)))
        for text in (self.engine_name, self.engine_version, self.target_triple, *self.feature_flags):
            if any(ch in text for ch in ";,=\n"):
                raise ValueError(f"fingerprint field contains a reserved character: {text!r}")

    def canonical_line(self) -> str:
        return (
            f"engine={self.engine_name};version={self.engine_version};"
            f"target={self.target_triple};features={','.join(self.feature_flags)}"
        )

    @classmethod
    def parse_line(cls, line: str) -> "EngineFingerprint":
        fields = {}
        for part in line.strip().split(";"):
            key, sep, value = part.partition("=")
            if not sep:
                raise CorruptArtifact(f"malformed fingerprint line: {line!r}")
            fields[key] = value
        try:
            return cls(
                engine_name=fields["engine"],
                engine_version=fields["version"],
                target_triple=fields["target"],
                feature_flags=tuple(f for f in fields["features"].split(",") if f),
            )
        except KeyError as exc:
            raise CorruptArtifact(f"fingerprint line missing field {exc}: {line!r}") from exc


def current_fingerprint() -> EngineFingerprint:
    """Fingerprint of the engine embedded in this build."""
    from . import _engine  # deferred: the extension is built separately

    return EngineFingerprint(
        engine_name=ENGINE_NAME,
        engine_version=_engine.WASMTIME_VERSION,
        target_triple=_engine.HOST_TARGET,
        feature_flags=FEATURE_FLAGS,
    )


@dataclass(frozen=True)
class CompiledArtifact:
    """Serialized machine code for one module, bound to an engine fingerprint."""

    source_hash: bytes
    fingerprint: EngineFingerprint
    blob: bytes
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def __post_init__(self) -> None:
        if len(self.source_hash) != HASH_LEN:
            raise ValueError(f"source_hash must be {HASH_LEN} bytes, got {len(self.source_hash)}")
        if not self.blob:
            raise ValueError("artifact blob must be non-empty")


def encode_container(fingerprint: EngineFingerprint, blob: bytes) -> bytes:
    """Wrap an engine blob in the LIMESART container."""
    if not blob:
        raise ValueError("artifact blob must be non-empty")
    return (
        CONTAINER_MAGIC
        + bytes([CONTAINER_VERSION])
        + fingerprint.canonical_line().encode("ascii")
        + b"\n"
        + blob
    )


def decode_container(data: bytes) -> tuple[EngineFingerprint, bytes]:
    """Parse a LIMESART container; raises :class:`CorruptArtifact` on damage."""
    if len(data) < len(CONTAINER_MAGIC) + 2 or not data.startswith(CONTAINER_MAGIC):
        raise CorruptArtifact("missing LIMESART magic")
    version = data[len(CONTAINER_MAGIC)]
    if version != CONTAINER_VERSION:
        raise CorruptArtifact(f"unsupported container version {version}")
    head = len(CONTAINER_MAGIC) + 1
    newline = data.find(b"\n", head)
    if newline < 0:
        raise CorruptArtifact("unterminated fingerprint line")
    try:
        line = data[head:newline].decode("ascii")
    except UnicodeDecodeError as exc:
        raise CorruptArtifact("fingerprint line is not ASCII") from exc
    fingerprint = EngineFingerprint.parse_line(line)
    blob = data[newline + 1 :]
    if not blob:
        raise CorruptArtifact("container holds no blob")
    return fingerprint, blob
