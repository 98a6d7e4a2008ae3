"""Binary PNM image I/O: PGM (P5) for grayscale, PPM (P6) for RGB, maxval 255."""

from __future__ import annotations

import os

import numpy as np


class PnmError(ValueError):
    """Malformed or unsupported PNM data."""


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write a [1, c, h, w] image in [0, 1] as binary PGM/PPM with maxval 255."""
    if img.ndim != 4 or img.shape[0] != 1 or img.shape[1] not in (1, 3):
        raise ValueError(f"expected image tensor [1, c in {{1,3}}, h, w], got {img.shape}")
    _, c, h, w = img.shape
    magic = b"P5" if c == 1 else b"P6"
    quantized = np.clip(np.rint(img[0] * 255.0), 0, 255).astype(np.uint8)
    payload = quantized.transpose(1, 2, 0).tobytes()
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(payload)


def _read_tokens(data: bytes, count: int, start: int) -> tuple[list[bytes], int]:
    """Read whitespace-separated header tokens, skipping '#' comment lines."""
    tokens: list[bytes] = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        if i >= n:
            raise PnmError("truncated header")
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read a binary PGM/PPM file into a [1, c, h, w] float64 image in [0, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 2:
        raise PnmError("truncated header")
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise PnmError(f"unsupported format magic {magic!r} (only binary P5/P6)")

    try:
        tokens, pos = _read_tokens(data, 3, 2)
        width, height, maxval = (int(t) for t in tokens)
    except PnmError:
        raise
    except Exception as exc:
        raise PnmError(f"malformed header: {exc}") from exc
    if width < 1 or height < 1:
        raise PnmError(f"malformed header: bad dimensions {width}x{height}")
    if maxval != 255:
        raise PnmError(f"unsupported maxval {maxval} (only 255)")

    # Exactly one whitespace byte separates the header from the payload.
    pos += 1
    expected = width * height * channels
    payload = data[pos : pos + expected]
    if len(payload) < expected:
        raise PnmError(f"truncated payload: expected {expected} bytes, got {len(payload)}")

    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return (pixels.transpose(2, 0, 1)[None, ...].astype(np.float64)) / 255.0
