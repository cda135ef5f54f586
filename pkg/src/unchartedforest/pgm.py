"""Binary PGM emission for affinity heat maps.

The format is fixed so the bytes are specifiable: header "P5\\n<w> <h>\\n255\\n"
followed by row-major pixels, one byte each, where a value v in [0, 1]
quantizes to floor(v * 255 + 0.5).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataio import ClassBlocks
from .validation import check_matrix


def quantize(values) -> np.ndarray:
    a = check_matrix(values, "values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("pixel values must lie in [0, 1]")
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def _write(pixels: np.ndarray, path) -> None:
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes(order="C"))


def write_pgm(values, path) -> None:
    """Grayscale image of a [0, 1] matrix."""
    _write(quantize(values), path)


def block_overlay_pgm(values, blocks: ClassBlocks, path) -> None:
    """Heat map with block boundaries painted at maximum intensity.

    Each internal boundary (the first row/column of every block after the
    first) is drawn as a full-width line over the quantized image.
    """
    pixels = quantize(values)
    if pixels.shape[0] != blocks.n or pixels.shape[1] != blocks.n:
        raise ValueError("blocks do not match the matrix dimensions")
    for _, start, _ in blocks.blocks[1:]:
        pixels[start, :] = 255
        pixels[:, start] = 255
    _write(pixels, path)


def read_pgm(path):
    """Parse a binary PGM written by this module back into a uint8 matrix."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError(f"{path}: not a binary 8-bit PGM")
    try:
        w, h = (int(tok) for tok in parts[1].split())
    except ValueError:
        raise ValueError(f"{path}: malformed dimension header") from None
    payload = parts[3]
    if len(payload) != w * h:
        raise ValueError(f"{path}: payload size does not match dimensions")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
