"""Host-side reference oracles for the guest workloads.

These are independent reimplementations used by tests to verify guest
outputs byte-for-byte. They share only the documented contracts with the
guest code: integer filter formulas, the pixel-centre escape-time
iteration (identical IEEE double expression shapes, so results are
bit-identical), and the canonical deterministic PNG form (RGB8, filter 0
rows, zlib header ``78 01``, stored deflate blocks of at most 65535
bytes, a single IDAT). The PNG codec here is built on the Python stdlib
(``zlib``/``binascii``) rather than the guest's hand-written inflate.
"""

from __future__ import annotations

import binascii
import struct
import zlib

from . import MandelbrotParams

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


# --- mandelbrot -----------------------------------------------------------

def mandelbrot_escape_count(cx: float, cy: float, max_iter: int) -> int:
    """min{k >= 1 : |z_k| > 2} with z_0 = 0, z_{k+1} = z_k^2 + c, capped."""
    zr = 0.0
    zi = 0.0
    n = max_iter
    for k in range(1, max_iter + 1):
        nzr = zr * zr - zi * zi + cx
        nzi = 2.0 * zr * zi + cy
        zr = nzr
        zi = nzi
        if zr * zr + zi * zi > 4.0:
            n = k
            break
    return n


def mandelbrot_grid(params: MandelbrotParams) -> bytes:
    """Row-major grid of escape counts, unsigned 16-bit little-endian."""
    w, h = params.width, params.height
    vp = params.viewport
    dre = vp.re_max - vp.re_min
    dim = vp.im_max - vp.im_min
    out = bytearray(w * h * 2)
    pack_into = struct.pack_into
    offset = 0
    for y in range(h):
        cy = vp.im_min + dim * ((y + 0.5) / h)
        for x in range(w):
            cx = vp.re_min + dre * ((x + 0.5) / w)
            pack_into("<H", out, offset, mandelbrot_escape_count(cx, cy, params.max_iter))
            offset += 2
    return bytes(out)


def pgm_encode(width: int, height: int, grid_le: bytes) -> bytes:
    """16-bit binary PGM (P5) of a little-endian escape grid."""
    if len(grid_le) != width * height * 2:
        raise ValueError("grid size does not match dimensions")
    samples = struct.unpack(f"<{width * height}H", grid_le)
    return b"P5\n%d %d\n65535\n" % (width, height) + struct.pack(f">{width * height}H", *samples)


# --- image filters --------------------------------------------------------

def grayscale(pixels: bytes, width: int, height: int) -> bytes:
    """y = round(0.299r + 0.587g + 0.114b), replicated to all channels."""
    out = bytearray(pixels)
    for i in range(width * height):
        r, g, b = out[3 * i], out[3 * i + 1], out[3 * i + 2]
        y = (299 * r + 587 * g + 114 * b + 500) // 1000
        out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = y
    return bytes(out)


def invert(pixels: bytes, width: int, height: int) -> bytes:
    """v -> 255 - v per channel."""
    return bytes(255 - v for v in pixels)


def blur3x3(pixels: bytes, width: int, height: int) -> bytes:
    """Mean of the 3x3 neighbourhood with edge clamping, rounded half-up."""
    out = bytearray(len(pixels))
    for y in range(height):
        for x in range(width):
            for c in range(3):
                total = 0
                for dy in (-1, 0, 1):
                    sy = min(max(y + dy, 0), height - 1)
                    for dx in (-1, 0, 1):
                        sx = min(max(x + dx, 0), width - 1)
                        total += pixels[(sy * width + sx) * 3 + c]
                out[(y * width + x) * 3 + c] = (2 * total + 9) // 18
    return bytes(out)


FILTERS = {"grayscale": grayscale, "invert": invert, "blur3x3": blur3x3}


def apply_filters(pixels: bytes, width: int, height: int, filters: tuple[str, ...]) -> bytes:
    for name in filters:
        pixels = FILTERS[name](pixels, width, height)
    return pixels


# --- canonical PNG codec --------------------------------------------------

def _chunk(ctype: bytes, data: bytes) -> bytes:
    body = ctype + data
    return struct.pack(">I", len(data)) + body + struct.pack(">I", binascii.crc32(body))


def png_encode(width: int, height: int, pixels: bytes) -> bytes:
    """Encode RGB8 pixels in the canonical deterministic PNG form."""
    if len(pixels) != width * height * 3:
        raise ValueError("pixel buffer size does not match dimensions")
    stride = width * 3
    raw = b"".join(b"\x00" + pixels[y * stride : (y + 1) * stride] for y in range(height))

    # zlib stream: fixed header, stored (uncompressed) deflate blocks, adler32
    pieces = [b"\x78\x01"]
    for off in range(0, len(raw), 65535):
        block = raw[off : off + 65535]
        final = off + len(block) == len(raw)
        n = len(block)
        pieces.append(struct.pack("<BHH", 1 if final else 0, n, n ^ 0xFFFF))
        pieces.append(block)
    pieces.append(struct.pack(">I", zlib.adler32(raw)))

    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    return (
        PNG_SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", b"".join(pieces))
        + _chunk(b"IEND", b"")
    )


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def png_decode(data: bytes) -> tuple[int, int, bytes]:
    """Decode an 8-bit RGB non-interlaced PNG to (width, height, pixels).

    Accepts any zlib-compressed IDAT stream and all five row filters, not
    just the canonical form. Raises ValueError on malformed input.
    """
    if not data.startswith(PNG_SIGNATURE):
        raise ValueError("not a png")
    pos = len(PNG_SIGNATURE)
    width = height = 0
    idat = bytearray()
    seen_ihdr = seen_iend = False
    while pos + 12 <= len(data):
        (clen,) = struct.unpack_from(">I", data, pos)
        ctype = data[pos + 4 : pos + 8]
        chunk_data = data[pos + 8 : pos + 8 + clen]
        if pos + 12 + clen > len(data):
            raise ValueError("truncated chunk")
        (crc,) = struct.unpack_from(">I", data, pos + 8 + clen)
        if binascii.crc32(ctype + chunk_data) != crc:
            raise ValueError("chunk crc mismatch")
        if ctype == b"IHDR":
            width, height, depth, color, comp, filt, interlace = struct.unpack(
                ">IIBBBBB", chunk_data
            )
            if depth != 8 or color != 2 or comp != 0 or filt != 0 or interlace != 0:
                raise ValueError("unsupported png variant (want 8-bit rgb, non-interlaced)")
            seen_ihdr = True
        elif ctype == b"IDAT":
            idat += chunk_data
        elif ctype == b"IEND":
            seen_iend = True
            break
        pos += 12 + clen
    if not (seen_ihdr and seen_iend and idat):
        raise ValueError("missing ihdr/idat/iend")

    raw = zlib.decompress(bytes(idat))
    stride = width * 3
    if len(raw) != (stride + 1) * height:
        raise ValueError("wrong raw size")

    pixels = bytearray(stride * height)
    prev = bytes(stride)
    for y in range(height):
        row_start = y * (stride + 1)
        filter_type = raw[row_start]
        row = bytearray(raw[row_start + 1 : row_start + 1 + stride])
        if filter_type == 0:
            pass
        elif filter_type == 1:
            for i in range(3, stride):
                row[i] = (row[i] + row[i - 3]) & 0xFF
        elif filter_type == 2:
            for i in range(stride):
                row[i] = (row[i] + prev[i]) & 0xFF
        elif filter_type == 3:
            for i in range(stride):
                a = row[i - 3] if i >= 3 else 0
                row[i] = (row[i] + ((a + prev[i]) >> 1)) & 0xFF
        elif filter_type == 4:
            for i in range(stride):
                a = row[i - 3] if i >= 3 else 0
                c = prev[i - 3] if i >= 3 else 0
                row[i] = (row[i] + _paeth(a, prev[i], c)) & 0xFF
        else:
            raise ValueError(f"bad row filter {filter_type}")
        pixels[y * stride : (y + 1) * stride] = row
        prev = bytes(row)
    return width, height, bytes(pixels)
