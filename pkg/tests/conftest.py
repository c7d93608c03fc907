"""Shared fixtures: repository paths and bundled binary artifacts."""

from __future__ import annotations

import functools
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
WORKLOADS_DIR = ROOT / "workloads"
TESTGUESTS_DIR = WORKLOADS_DIR / "testguests"
FIXTURE_PNG = WORKLOADS_DIR / "fixtures" / "input.png"

_REQUIRED = [
    WORKLOADS_DIR / "noop.wasm",
    WORKLOADS_DIR / "spin.wasm",
    WORKLOADS_DIR / "mandelbrot.wasm",
    WORKLOADS_DIR / "mandelbrot_io.wasm",
    WORKLOADS_DIR / "image.wasm",
    TESTGUESTS_DIR / "trap.wasm",
    TESTGUESTS_DIR / "badimport.wasm",
    TESTGUESTS_DIR / "stdio_echo.wasm",
    FIXTURE_PNG,
]


def pytest_configure(config):
    missing = [str(p) for p in _REQUIRED if not p.is_file()]
    if missing:
        raise pytest.UsageError(
            "built artifacts missing (run ./build.sh first): " + ", ".join(missing)
        )


@functools.lru_cache(maxsize=None)
def _read(path: Path) -> bytes:
    return path.read_bytes()


@pytest.fixture(scope="session")
def noop_wasm() -> bytes:
    return _read(WORKLOADS_DIR / "noop.wasm")


@pytest.fixture(scope="session")
def spin_wasm() -> bytes:
    return _read(WORKLOADS_DIR / "spin.wasm")


@pytest.fixture(scope="session")
def mandelbrot_wasm() -> bytes:
    return _read(WORKLOADS_DIR / "mandelbrot.wasm")


@pytest.fixture(scope="session")
def mandelbrot_io_wasm() -> bytes:
    return _read(WORKLOADS_DIR / "mandelbrot_io.wasm")


@pytest.fixture(scope="session")
def image_wasm() -> bytes:
    return _read(WORKLOADS_DIR / "image.wasm")


@pytest.fixture(scope="session")
def trap_wasm() -> bytes:
    return _read(TESTGUESTS_DIR / "trap.wasm")


@pytest.fixture(scope="session")
def badimport_wasm() -> bytes:
    return _read(TESTGUESTS_DIR / "badimport.wasm")


@pytest.fixture(scope="session")
def stdio_echo_wasm() -> bytes:
    return _read(TESTGUESTS_DIR / "stdio_echo.wasm")


@pytest.fixture(scope="session")
def fixture_png() -> bytes:
    return _read(FIXTURE_PNG)


@pytest.fixture(scope="session")
def workloads_dir() -> Path:
    return WORKLOADS_DIR


# A module that passes wasm validation but exports nothing: the smallest
# well-formed binary module (magic + version, no sections).
EMPTY_MODULE = b"\0asm\x01\x00\x00\x00"


@pytest.fixture(scope="session")
def empty_module() -> bytes:
    return EMPTY_MODULE
