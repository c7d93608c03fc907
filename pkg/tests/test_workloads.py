"""Guest workloads versus the independent host oracles, byte for byte."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from limes.errors import GuestError
from limes.executor import Executor, SandboxPolicy
from limes.workloads import (
    IMAGE_FILTERS,
    ImageJob,
    MandelbrotParams,
    Viewport,
    wasm_path,
)
from limes.workloads.oracles import (
    apply_filters,
    mandelbrot_grid,
    pgm_encode,
    png_decode,
    png_encode,
)


@pytest.fixture(scope="module")
def executor():
    with Executor(enable_ticker=False) as ex:
        yield ex


@pytest.fixture(scope="module")
def mandel_handle(executor, mandelbrot_wasm):
    return executor.load_module(mandelbrot_wasm)


@pytest.fixture(scope="module")
def mandel_io_handle(executor, mandelbrot_io_wasm):
    return executor.load_module(mandelbrot_io_wasm)


@pytest.fixture(scope="module")
def image_handle(executor, image_wasm):
    return executor.load_module(image_wasm)


def run(executor, handle, payload: bytes, policy: SandboxPolicy | None = None) -> bytes:
    instance = executor.instantiate(handle, policy)
    output, _ = executor.invoke(instance, payload)
    return output


def snapshot(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def random_png(rng: random.Random, width: int, height: int) -> tuple[bytes, bytes]:
    pixels = bytes(rng.randrange(256) for _ in range(width * height * 3))
    return pixels, png_encode(width, height, pixels)


SMALL_VIEW = Viewport(re_min=-2.0, re_max=0.8, im_min=-1.2, im_max=1.2)


class TestPayloadTypes:
    def test_mandelbrot_defaults(self):
        params = MandelbrotParams()
        assert (params.width, params.height, params.max_iter) == (800, 600, 1000)
        assert params.viewport == Viewport(-2.5, 1.0, -1.0, 1.0)

    def test_mandelbrot_json_roundtrip_preserves_doubles(self):
        params = MandelbrotParams(
            width=3, height=2, max_iter=7,
            viewport=Viewport(
                re_min=-0.7436438870371587, re_max=-0.7436438870371582,
                im_min=0.13182590420531197, im_max=0.13182590420531250,
            ),
        )
        assert MandelbrotParams.from_json(params.to_json()) == params

    def test_mandelbrot_validation(self):
        with pytest.raises(ValueError):
            MandelbrotParams(width=0)
        with pytest.raises(ValueError):
            MandelbrotParams(max_iter=0)
        with pytest.raises(ValueError):
            Viewport(re_min=1.0, re_max=1.0)

    def test_image_job_roundtrip(self):
        job = ImageJob(filters=("invert", "blur3x3"), write_output=True, output_path="o.png")
        assert ImageJob.from_json(job.to_json()) == job

    def test_image_job_validation(self):
        with pytest.raises(ValueError):
            ImageJob(filters=())
        with pytest.raises(ValueError):
            ImageJob(filters=("sharpen",))
        with pytest.raises(ValueError):
            ImageJob(input_path="../escape.png")
        with pytest.raises(ValueError):
            ImageJob(output_path="/absolute.png")
        with pytest.raises(ValueError):
            ImageJob(input_path="a/../../b.png")
        # a dot-dot inside a filename component is fine
        assert ImageJob(input_path="weird..name.png").input_path == "weird..name.png"


class TestMandelbrot:
    @pytest.mark.parametrize(
        "params",
        [
            MandelbrotParams(width=16, height=16, max_iter=64),
            MandelbrotParams(width=16, height=16, max_iter=200, viewport=Viewport(
                re_min=-0.75, re_max=-0.70, im_min=0.10, im_max=0.15,
            )),
            MandelbrotParams(width=1, height=1, max_iter=10),
            MandelbrotParams(width=5, height=3, max_iter=77, viewport=SMALL_VIEW),
        ],
    )
    def test_grid_matches_oracle(self, executor, mandel_handle, params):
        assert run(executor, mandel_handle, params.to_json()) == mandelbrot_grid(params)

    def test_io_variant_same_grid(self, executor, mandel_io_handle, tmp_path):
        params = MandelbrotParams(width=16, height=16, max_iter=64)
        policy = SandboxPolicy(preopen_dir=str(tmp_path), allow_writes=True)
        assert run(executor, mandel_io_handle, params.to_json(), policy) == mandelbrot_grid(params)

    def test_io_writes_oracle_identical_pgm(self, executor, mandel_io_handle, tmp_path):
        params = MandelbrotParams(width=12, height=9, max_iter=50, viewport=SMALL_VIEW)
        policy = SandboxPolicy(preopen_dir=str(tmp_path), allow_writes=True)
        grid = run(executor, mandel_io_handle, params.to_json(), policy)
        pgm = (tmp_path / "mandelbrot.pgm").read_bytes()
        assert pgm == pgm_encode(params.width, params.height, grid)
        assert pgm == pgm_encode(params.width, params.height, mandelbrot_grid(params))

    def test_pure_variant_touches_nothing(self, executor, mandel_handle, tmp_path):
        (tmp_path / "existing.txt").write_bytes(b"untouched")
        before = snapshot(tmp_path)
        policy = SandboxPolicy(preopen_dir=str(tmp_path), allow_writes=True)
        params = MandelbrotParams(width=8, height=8, max_iter=32)
        run(executor, mandel_handle, params.to_json(), policy)
        assert snapshot(tmp_path) == before

    def test_io_write_denied_is_contained(self, executor, mandel_io_handle, tmp_path):
        (tmp_path / "existing.txt").write_bytes(b"keep me")
        before = snapshot(tmp_path)
        policy = SandboxPolicy(preopen_dir=str(tmp_path), allow_writes=False)
        params = MandelbrotParams(width=8, height=8, max_iter=32)
        instance = executor.instantiate(mandel_io_handle, policy)
        with pytest.raises(GuestError):
            executor.invoke(instance, params.to_json())
        assert snapshot(tmp_path) == before

    def test_bad_payload(self, executor, mandel_handle):
        instance = executor.instantiate(mandel_handle)
        with pytest.raises(GuestError):
            executor.invoke(instance, b"{broken json")

    def test_zero_width_rejected_by_guest(self, executor, mandel_handle):
        raw = json.dumps({
            "width": 0, "height": 4, "max_iter": 10,
            "viewport": {"re_min": -1.0, "re_max": 1.0, "im_min": -1.0, "im_max": 1.0},
        }).encode()
        instance = executor.instantiate(mandel_handle)
        with pytest.raises(GuestError):
            executor.invoke(instance, raw)


class TestImage:
    @pytest.mark.parametrize("filters", [("grayscale",), ("invert",), ("blur3x3",), IMAGE_FILTERS])
    def test_filters_match_oracle(self, executor, image_handle, tmp_path, filters):
        rng = random.Random(hash(filters) & 0xFFFF)
        width, height = rng.randint(1, 8), rng.randint(1, 8)
        pixels, png = random_png(rng, width, height)
        workdir = tmp_path / "-".join(filters)
        workdir.mkdir()
        (workdir / "input.png").write_bytes(png)
        policy = SandboxPolicy(preopen_dir=str(workdir))
        job = ImageJob(filters=filters)
        output = run(executor, image_handle, job.to_json(), policy)
        expected = png_encode(width, height, apply_filters(pixels, width, height, tuple(filters)))
        assert output == expected

    def test_many_random_images(self, executor, image_handle, tmp_path):
        rng = random.Random(905)
        for i in range(8):
            width, height = rng.randint(1, 8), rng.randint(1, 8)
            pixels, png = random_png(rng, width, height)
            filters = tuple(
                rng.choice(IMAGE_FILTERS) for _ in range(rng.randint(1, 3))
            )
            workdir = tmp_path / f"case-{i}"
            workdir.mkdir()
            (workdir / "input.png").write_bytes(png)
            output = run(
                executor, image_handle, ImageJob(filters=filters).to_json(),
                SandboxPolicy(preopen_dir=str(workdir)),
            )
            assert output == png_encode(
                width, height, apply_filters(pixels, width, height, filters)
            ), f"case {i}: {width}x{height} {filters}"

    def test_io_writes_what_it_returns(self, executor, image_handle, tmp_path):
        rng = random.Random(77)
        _, png = random_png(rng, 6, 6)
        (tmp_path / "input.png").write_bytes(png)
        policy = SandboxPolicy(preopen_dir=str(tmp_path), allow_writes=True)
        job = ImageJob(filters=("grayscale", "blur3x3"), write_output=True, output_path="out.png")
        output = run(executor, image_handle, job.to_json(), policy)
        assert (tmp_path / "out.png").read_bytes() == output

    def test_pure_job_touches_nothing(self, executor, image_handle, tmp_path):
        rng = random.Random(78)
        _, png = random_png(rng, 5, 5)
        (tmp_path / "input.png").write_bytes(png)
        before = snapshot(tmp_path)
        policy = SandboxPolicy(preopen_dir=str(tmp_path), allow_writes=True)
        run(executor, image_handle, ImageJob(filters=("invert",)).to_json(), policy)
        assert snapshot(tmp_path) == before

    def test_write_denied_is_contained(self, executor, image_handle, tmp_path):
        rng = random.Random(79)
        _, png = random_png(rng, 4, 4)
        (tmp_path / "input.png").write_bytes(png)
        before = snapshot(tmp_path)
        policy = SandboxPolicy(preopen_dir=str(tmp_path), allow_writes=False)
        job = ImageJob(filters=("invert",), write_output=True)
        instance = executor.instantiate(image_handle, policy)
        with pytest.raises(GuestError):
            executor.invoke(instance, job.to_json())
        assert snapshot(tmp_path) == before

    def test_invert_twice_is_identity(self, executor, image_handle, tmp_path):
        rng = random.Random(80)
        _, png = random_png(rng, 7, 4)
        first_dir = tmp_path / "first"
        second_dir = tmp_path / "second"
        first_dir.mkdir()
        second_dir.mkdir()
        (first_dir / "input.png").write_bytes(png)
        inverted = run(
            executor, image_handle, ImageJob(filters=("invert",)).to_json(),
            SandboxPolicy(preopen_dir=str(first_dir)),
        )
        assert inverted != png
        (second_dir / "input.png").write_bytes(inverted)
        restored = run(
            executor, image_handle, ImageJob(filters=("invert",)).to_json(),
            SandboxPolicy(preopen_dir=str(second_dir)),
        )
        assert restored == png

    def test_guest_rejects_traversal(self, executor, image_handle, tmp_path):
        # Host-side ImageJob refuses to build this, so feed raw JSON.
        raw = json.dumps({
            "input_path": "../outside.png",
            "filters": ["invert"],
            "write_output": False,
            "output_path": "out.png",
        }).encode()
        policy = SandboxPolicy(preopen_dir=str(tmp_path))
        instance = executor.instantiate(image_handle, policy)
        with pytest.raises(GuestError):
            executor.invoke(instance, raw)

    def test_guest_rejects_unknown_filter(self, executor, image_handle, tmp_path):
        rng = random.Random(81)
        _, png = random_png(rng, 2, 2)
        (tmp_path / "input.png").write_bytes(png)
        raw = json.dumps({
            "input_path": "input.png",
            "filters": ["sharpen"],
            "write_output": False,
            "output_path": "out.png",
        }).encode()
        instance = executor.instantiate(image_handle, SandboxPolicy(preopen_dir=str(tmp_path)))
        with pytest.raises(GuestError):
            executor.invoke(instance, raw)

    def test_guest_rejects_empty_filters(self, executor, image_handle, tmp_path):
        raw = json.dumps({
            "input_path": "input.png",
            "filters": [],
            "write_output": False,
            "output_path": "out.png",
        }).encode()
        instance = executor.instantiate(image_handle, SandboxPolicy(preopen_dir=str(tmp_path)))
        with pytest.raises(GuestError):
            executor.invoke(instance, raw)

    def test_missing_input_file(self, executor, image_handle, tmp_path):
        instance = executor.instantiate(image_handle, SandboxPolicy(preopen_dir=str(tmp_path)))
        with pytest.raises(GuestError):
            executor.invoke(instance, ImageJob().to_json())

    def test_corrupt_input_png(self, executor, image_handle, tmp_path):
        (tmp_path / "input.png").write_bytes(b"not a png")
        instance = executor.instantiate(image_handle, SandboxPolicy(preopen_dir=str(tmp_path)))
        with pytest.raises(GuestError):
            executor.invoke(instance, ImageJob().to_json())


class TestFixture:
    def test_fixture_is_canonical_512(self, fixture_png):
        width, height, pixels = png_decode(fixture_png)
        assert (width, height) == (512, 512)
        # canonical form: re-encoding the pixels reproduces the file
        assert png_encode(width, height, pixels) == fixture_png

    def test_fixture_agrees_with_pillow(self, fixture_png):
        PIL = pytest.importorskip("PIL.Image")
        import io

        img = PIL.open(io.BytesIO(fixture_png))
        assert img.size == (512, 512)
        _, _, pixels = png_decode(fixture_png)
        assert img.convert("RGB").tobytes() == pixels

    def test_guest_processes_fixture(self, executor, image_handle, tmp_path, fixture_png):
        (tmp_path / "input.png").write_bytes(fixture_png)
        output = run(
            executor, image_handle, ImageJob(filters=("grayscale",)).to_json(),
            SandboxPolicy(preopen_dir=str(tmp_path)),
        )
        width, height, pixels = png_decode(fixture_png)
        assert output == png_encode(width, height, apply_filters(pixels, width, height, ("grayscale",)))

    def test_wasm_path_resolution(self, workloads_dir):
        assert wasm_path("image-io", workloads_dir).name == "image.wasm"
        assert wasm_path("mandelbrot-io", workloads_dir).name == "mandelbrot_io.wasm"
        with pytest.raises(ValueError):
            wasm_path("unknown", workloads_dir)
        with pytest.raises(FileNotFoundError):
            wasm_path("noop", workloads_dir / "nope")
