#!/usr/bin/env python3
"""Regenerate the bundled image-workload fixture.

Produces a deterministic 512x512 RGB PNG (seeded pattern + noise) at
workloads/fixtures/input.png using the host-side canonical PNG encoder,
so the fixture never depends on an external image library.
"""

from __future__ import annotations

import pathlib
import random
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from limes.workloads.oracles import png_encode  # noqa: E402

WIDTH = HEIGHT = 512
SEED = 20240229


def main() -> int:
    rng = random.Random(SEED)
    pixels = bytearray(WIDTH * HEIGHT * 3)
    i = 0
    for y in range(HEIGHT):
        for x in range(WIDTH):
            # Smooth gradients plus per-pixel noise: exercises all three
            # filters without being trivially uniform.
            pixels[i] = (x * 255 // (WIDTH - 1) + rng.randrange(32)) % 256
            pixels[i + 1] = (y * 255 // (HEIGHT - 1) + rng.randrange(32)) % 256
            pixels[i + 2] = ((x ^ y) + rng.randrange(32)) % 256
            i += 3
    out = ROOT / "workloads" / "fixtures" / "input.png"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(png_encode(WIDTH, HEIGHT, bytes(pixels)))
    print(f"wrote {out} ({out.stat().st_size} bytes)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
