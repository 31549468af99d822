"""Raster (binary PPM) and raw tensor file formats.

The tensor container is magic ``MEMT``, three little-endian uint32 dims
(channels, height, width), then the values as little-endian float64 in
channel-major, row-major order.  It carries latents into and out of the
entropy engine without involving the pixel transforms.

Images travel as 8-bit binary PPM (type P6), maxval 255, normalized to
[0, 1] on read and rounded half away from zero on write.
"""

from __future__ import annotations

import struct

import numpy as np

from .entropy import round_half_away
from .errors import FormatError, ShapeError
from .numerics import as_grid

__all__ = [
    "MAGIC_TENSOR",
    "tensor_to_bytes",
    "tensor_from_bytes",
    "write_tensor",
    "read_tensor",
    "image_to_ppm",
    "ppm_to_image",
    "write_ppm",
    "read_ppm",
]

MAGIC_TENSOR = b"MEMT"


def tensor_to_bytes(x: np.ndarray) -> bytes:
    x = as_grid(x, "tensor")
    if not np.all(np.isfinite(x)):
        raise FormatError("tensor values must be finite")
    c, h, w = x.shape
    header = MAGIC_TENSOR + struct.pack("<III", c, h, w)
    return header + np.ascontiguousarray(x, dtype="<f8").tobytes()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    head = len(MAGIC_TENSOR) + 12
    if len(data) < head:
        raise FormatError("tensor file too short for its header")
    if data[:4] != MAGIC_TENSOR:
        raise FormatError(f"bad tensor magic {data[:4]!r}")
    c, h, w = struct.unpack("<III", data[4:head])
    if min(c, h, w) < 1:
        raise FormatError(f"tensor dims must be >= 1, got {(c, h, w)}")
    expected = c * h * w * 8
    payload = data[head:]
    if len(payload) != expected:
        raise FormatError(
            f"tensor payload is {len(payload)} bytes, expected {expected}"
        )
    x = np.frombuffer(payload, dtype="<f8").reshape(c, h, w).astype(np.float64)
    if not np.all(np.isfinite(x)):
        raise FormatError("tensor values must be finite")
    return x


def write_tensor(x: np.ndarray, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(x))


def read_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


def image_to_ppm(img: np.ndarray) -> bytes:
    img = as_grid(img, "image")
    if img.shape[0] != 3:
        raise ShapeError(f"image must have 3 channels, got {img.shape[0]}")
    if not np.all(np.isfinite(img)):
        raise FormatError("image values must be finite")
    _, h, w = img.shape
    levels = round_half_away(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + levels.transpose(1, 2, 0).tobytes()


def _ppm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace/comment-delimited header tokens."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise FormatError("truncated image header")
        b = data[pos : pos + 1]
        if b.isspace():
            pos += 1
        elif b == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    return tokens, pos


def ppm_to_image(data: bytes) -> np.ndarray:
    tokens, pos = _ppm_tokens(data, 4)
    if tokens[0] != b"P6":
        raise FormatError(f"expected binary PPM magic P6, got {tokens[0]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-numeric image header field") from None
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}")
    if h < 1 or w < 1:
        raise FormatError(f"image dims must be >= 1, got {h}x{w}")
    pos += 1  # single whitespace byte after maxval
    payload = data[pos : pos + 3 * h * w]
    if len(payload) != 3 * h * w:
        raise FormatError("truncated image payload")
    levels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return levels.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(img: np.ndarray, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(image_to_ppm(img))


def read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        return ppm_to_image(fh.read())
