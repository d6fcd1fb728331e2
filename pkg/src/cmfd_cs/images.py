"""Image loading, saving and synthetic texture generation.

All images are handled as 2-D float64 arrays with intensities in [0, 1].
"""

from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionError, ImageFormatError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def as_gray(img) -> np.ndarray:
    """Validate and return ``img`` as a float64 2-D array in [0, 1]."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"grayscale image must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise DimensionError("grayscale image is empty")
    if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
        raise DimensionError("grayscale intensities must lie in [0, 1]")
    return a


def rgb_to_gray(rgb: np.ndarray, max_value: float = 255.0) -> np.ndarray:
    """Luma conversion 0.299R + 0.587G + 0.114B, scaled to [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = LUMA_WEIGHTS
    return (r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]) / max_value


def _read_pgm(data: bytes) -> np.ndarray:
    # P5 header: magic, width, height, maxval, each separated by whitespace,
    # comments start with '#' and run to end of line.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise ImageFormatError(f"unsupported PGM magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header") from exc
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"invalid PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    if len(data) - pos < count * dtype.itemsize:
        raise ImageFormatError("truncated PGM pixel data")
    pixels = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return pixels.reshape(height, width).astype(np.float64) / maxval


def load_grayscale(path) -> np.ndarray:
    """Load a PNG, JPEG or binary PGM as normalized grayscale.

    Raises:
        FileNotFoundError / OSError: the file cannot be read.
        ImageFormatError: the content is not a decodable image.
    """
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P5":
        return _read_pgm(data)
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                return np.clip(arr / 65535.0, 0.0, 1.0)
            if mode == "F":
                return np.clip(np.asarray(im, dtype=np.float64), 0.0, 1.0)
            if mode in ("L", "LA"):
                return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            if mode == "1":
                return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            return rgb_to_gray(np.asarray(im.convert("RGB")))
    except (UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"cannot decode image {path}: {exc}") from exc


def to_uint8(img) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_pgm(path, img, bits: int = 16) -> None:
    """Write a binary (P5) PGM with 8 or 16 bits per sample."""
    a = as_gray(img)
    if bits == 16:
        maxval, dtype = 65535, ">u2"
    elif bits == 8:
        maxval, dtype = 255, "u1"
    else:
        raise ValueError("bits must be 8 or 16")
    pixels = np.rint(a * maxval).astype(dtype)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())


def save_png(path, img) -> None:
    """Write an 8-bit grayscale PNG."""
    Image.fromarray(to_uint8(img), mode="L").save(os.fspath(path), format="PNG")


def save_mask_png(path, mask) -> None:
    m = np.asarray(mask).astype(bool)
    Image.fromarray((m * 255).astype(np.uint8), mode="L").save(os.fspath(path), format="PNG")


def load_mask_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def jpeg_roundtrip(img, quality: int) -> np.ndarray:
    """Encode as 8-bit grayscale JPEG at ``quality`` and decode back to [0, 1]."""
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="L").save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with Image.open(buf) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def textured_image(rng: np.random.Generator, size: int = 256) -> np.ndarray:
    """Random natural-looking texture with no internal duplication.

    A power-law (1/f) noise field with a random spectral slope, a few soft
    elliptical blobs and a light grain layer, rescaled to roughly [0.08, 0.92].
    """
    n = size
    fy = np.fft.fftfreq(n)[:, None]
    fx = np.fft.fftfreq(n)[None, :]
    radius = np.hypot(fx, fy)
    radius[0, 0] = 1.0
    slope = rng.uniform(1.6, 2.6)
    spectrum = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / radius ** (slope / 2)
    spectrum[0, 0] = 0.0
    field = np.real(np.fft.ifft2(spectrum))
    lo, hi = np.percentile(field, [1, 99])
    field = (field - lo) / max(hi - lo, 1e-12)

    yy, xx = np.mgrid[0:n, 0:n]
    for _ in range(rng.integers(2, 6)):
        cy, cx = rng.uniform(0, n, 2)
        ry, rx = rng.uniform(n / 16, n / 4, 2)
        d = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        field += rng.uniform(-0.35, 0.35) / (1.0 + np.exp(np.minimum(8.0 * (d - 1.0), 50.0)))

    lo, hi = field.min(), field.max()
    field = 0.1 + 0.8 * (field - lo) / max(hi - lo, 1e-12)
    field += rng.normal(0.0, rng.uniform(0.008, 0.02), size=(n, n))
    return np.clip(field, 0.0, 1.0)
