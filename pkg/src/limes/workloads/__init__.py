"""Catalog of the bundled evaluation workloads and their input encodings.

Workloads ship as prebuilt wasm binaries under the repository's
``workloads/`` directory (see ``workloads/build.sh``). Input payloads are:
raw bytes for no-op, JSON-encoded :class:`MandelbrotParams` for the
Mandelbrot variants, JSON-encoded :class:`ImageJob` for the image variants.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Final

#: Benchmarkable workloads (the spin guest is test-only plumbing).
WORKLOAD_NAMES: Final = ("noop", "mandelbrot", "mandelbrot-io", "image", "image-io")

#: Workload name -> wasm file. The image-io variant reuses the image module
#: (writing is a job flag); mandelbrot-io is a separate build of the same
#: source with the PGM writer compiled in.
WASM_FILES: Final = {
    "noop": "noop.wasm",
    "spin": "spin.wasm",
    "mandelbrot": "mandelbrot.wasm",
    "mandelbrot-io": "mandelbrot_io.wasm",
    "image": "image.wasm",
    "image-io": "image.wasm",
}

#: Bundled 512x512 RGB PNG used by the image workloads.
FIXTURE_FILE: Final = "fixtures/input.png"

IMAGE_FILTERS: Final = ("grayscale", "invert", "blur3x3")


def wasm_path(workload: str, base: str | Path) -> Path:
    """Resolve a workload's wasm binary under *base* (a workloads dir)."""
    try:
        filename = WASM_FILES[workload]
    except KeyError:
        raise ValueError(f"unknown workload {workload!r}; expected one of {sorted(WASM_FILES)}") from None
    path = Path(base) / filename
    if not path.is_file():
        raise FileNotFoundError(
            f"workload binary {path} not found; build it with workloads/build.sh"
        )
    return path


@dataclass(frozen=True)
class Viewport:
    """Complex-plane window sampled by the Mandelbrot workload."""

    re_min: float = -2.5
    re_max: float = 1.0
    im_min: float = -1.0
    im_max: float = 1.0

    def __post_init__(self) -> None:
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("viewport must be non-empty (re_min < re_max, im_min < im_max)")


@dataclass(frozen=True)
class MandelbrotParams:
    """Input payload for the Mandelbrot workload.

    Round-trips losslessly through JSON: floats are emitted with
    :func:`repr` precision, which the guest parses back to the same
    IEEE doubles.
    """

    width: int = 800
    height: int = 600
    max_iter: int = 1000
    viewport: Viewport = field(default_factory=Viewport)

    def __post_init__(self) -> None:
        if not (1 <= self.width <= 65536 and 1 <= self.height <= 65536):
            raise ValueError("width/height must be in 1..65536")
        if not 1 <= self.max_iter <= 65535:
            raise ValueError("max_iter must be in 1..65535")

    def to_json(self) -> bytes:
        return json.dumps(asdict(self), separators=(",", ":")).encode("ascii")

    @classmethod
    def from_json(cls, payload: bytes | str) -> "MandelbrotParams":
        doc = json.loads(payload)
        return cls(
            width=doc["width"],
            height=doc["height"],
            max_iter=doc["max_iter"],
            viewport=Viewport(**doc["viewport"]),
        )


@dataclass(frozen=True)
class ImageJob:
    """Input payload for the image workload."""

    input_path: str = "input.png"
    filters: tuple[str, ...] = IMAGE_FILTERS
    write_output: bool = False
    output_path: str = "output.png"

    def __post_init__(self) -> None:
        object.__setattr__(self, "filters", tuple(self.filters))
        if not self.filters:
            raise ValueError("filters must be non-empty")
        unknown = [f for f in self.filters if f not in IMAGE_FILTERS]
        if unknown:
            raise ValueError(f"unknown filters {unknown}; supported: {IMAGE_FILTERS}")
        for path in (self.input_path, self.output_path):
            parts = path.split("/")
            if not path or path.startswith("/") or ".." in parts:
                raise ValueError(f"unsafe guest path {path!r}")

    def to_json(self) -> bytes:
        return json.dumps(
            {
                "input_path": self.input_path,
                "filters": list(self.filters),
                "write_output": self.write_output,
                "output_path": self.output_path,
            },
            separators=(",", ":"),
        ).encode("ascii")

    @classmethod
    def from_json(cls, payload: bytes | str) -> "ImageJob":
        doc = json.loads(payload)
        return cls(
            input_path=doc["input_path"],
            filters=tuple(doc["filters"]),
            write_output=doc["write_output"],
            output_path=doc.get("output_path", "output.png"),
        )
