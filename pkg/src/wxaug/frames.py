"""Canonical in-memory frame type and binary PPM (P6) interchange."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    InvalidDimensionError,
    PPMError,
    TruncatedPayloadError,
    UnsupportedMaxvalError,
    WrongMagicError,
)

# Bench resolution (camera) and detector input resolution, as (width, height).
CAMERA_SIZE = (672, 376)
DETECTOR_INPUT_SIZE = (608, 352)

_PPM_WHITESPACE = b" \t\n\r\v\f"


@dataclass(eq=False)
class Frame:
    """An owned RGB8 raster.

    ``pixels`` is a C-contiguous ``uint8`` array of shape ``(height, width, 3)``;
    its raw bytes are the row-major interleaved RGB buffer.
    """

    pixels: np.ndarray
    frame_id: int = 0
    timestamp_us: Optional[int] = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvalidDimensionError(f"expected (height, width, 3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidDimensionError(f"frame dimensions must be >= 1, got {px.shape[1]}x{px.shape[0]}")
        if px.dtype != np.uint8:
            raise InvalidDimensionError(f"pixels must be uint8, got {px.dtype}")
        self.pixels = np.ascontiguousarray(px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def copy(self) -> "Frame":
        return Frame(self.pixels.copy(), self.frame_id, self.timestamp_us)

    def with_pixels(self, pixels: np.ndarray) -> "Frame":
        return Frame(pixels, self.frame_id, self.timestamp_us)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.timestamp_us == other.timestamp_us
            and self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
        )

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes, frame_id: int = 0) -> "Frame":
        _check_dims(width, height)
        if len(data) != width * height * 3:
            raise InvalidDimensionError(
                f"buffer holds {len(data)} bytes, expected {width * height * 3} for {width}x{height}"
            )
        px = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3).copy()
        return cls(px, frame_id)


def _check_dims(width, height):
    if int(width) < 1 or int(height) < 1:
        raise InvalidDimensionError(f"frame dimensions must be >= 1, got {width}x{height}")


def new_frame(width: int, height: int, fill=(0, 0, 0)) -> Frame:
    """Return a ``width`` x ``height`` frame with every pixel set to ``fill``."""
    _check_dims(width, height)
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[...] = np.asarray(fill, dtype=np.uint8)
    return Frame(px, frame_id=0)


def random_frame(width: int, height: int, rng: np.random.Generator, frame_id: int = 0) -> Frame:
    _check_dims(width, height)
    return Frame(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8), frame_id)


def encode_ppm(frame: Frame) -> bytes:
    header = b"P6\n%d %d\n255\n" % (frame.width, frame.height)
    return header + frame.tobytes()


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n and data[pos] in _PPM_WHITESPACE:
        pos += 1
    start = pos
    while pos < n and data[pos] not in _PPM_WHITESPACE:
        pos += 1
    if start == pos:
        raise TruncatedPayloadError("PPM header ended early")
    return data[start:pos], pos


def decode_ppm(data: bytes, frame_id: int = 0) -> Frame:
    """Parse a binary PPM (P6, maxval 255).

    Header fields may be separated by any ASCII whitespace. Exactly one
    whitespace byte separates the maxval from the raster; bytes after the
    raster are not read.
    """
    data = bytes(data)
    if len(data) < 2 or data[:2] != b"P6":
        raise WrongMagicError(f"expected P6 magic, got {data[:2]!r}")
    if len(data) > 2 and data[2] not in _PPM_WHITESPACE:
        raise WrongMagicError(f"expected P6 magic, got {data[:3]!r}")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _next_token(data, pos)
        if not tok.isdigit():
            raise PPMError(f"non-numeric PPM header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval must be 255, got {maxval}")
    _check_dims(width, height)
    if pos >= len(data):
        raise TruncatedPayloadError("missing raster after PPM header")
    pos += 1  # single whitespace byte before the raster
    need = width * height * 3
    if len(data) - pos < need:
        raise TruncatedPayloadError(f"raster has {len(data) - pos} bytes, expected {need}")
    return Frame.from_bytes(width, height, data[pos:pos + need], frame_id)


def read_ppm(path, frame_id: int = 0) -> Frame:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read(), frame_id)


def write_ppm(path, frame: Frame) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(frame))
