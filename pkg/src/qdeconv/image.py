"""Grayscale image container, normalization, and binary PGM input/output.

Images are stored row-major as float64 arrays. Canonical (clean) images
live in [0, 1]; degraded observations may exceed 1 and are clipped only
when written to 8-bit PGM.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, InvalidImage, TooSmall

__all__ = [
    "Image",
    "normalize",
    "vectorize",
    "devectorize",
    "make_synthetic",
    "make_bumps",
    "make_disks",
    "read_pgm",
    "write_pgm",
]


@dataclass(frozen=True)
class Image:
    """Immutable 2-D grayscale image.

    Attributes
    ----------
    pixels : ndarray
        Row-major float64 array of shape (height, width).
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidImage(f"expected a non-empty 2-D array, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise InvalidImage("image contains non-finite pixels")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def normalize(img: Image) -> Image:
    """Affinely rescale intensities to span [0, 1] exactly.

    A constant image maps to all zeros, so normalize(normalize(x)) is
    always identical to normalize(x).
    """
    px = img.pixels
    lo = float(px.min())
    hi = float(px.max())
    if hi == lo:
        return Image(np.zeros_like(px))
    return Image((px - lo) / (hi - lo))


def vectorize(img: Image) -> np.ndarray:
    """Flatten to a 1-D float64 vector in row-major order."""
    return img.pixels.reshape(-1).copy()


def devectorize(vec: np.ndarray, height: int, width: int) -> Image:
    """Inverse of :func:`vectorize` for the given geometry."""
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1 or v.size != height * width:
        raise DimensionError(
            f"vector of length {v.size} does not match {height}x{width} image"
        )
    return Image(v.reshape(height, width))


def make_synthetic(n: int) -> Image:
    """Deterministic n-by-n test pattern coupling intensity and frequency.

    A radial chirp centered on the top-left corner: intensity rises with
    distance while the local oscillation frequency falls, so dark regions
    carry the fine detail and bright regions are smooth. Output is
    normalized to span [0, 1]. No randomness is involved.
    """
    if n < 16:
        raise TooSmall(f"synthetic pattern needs n >= 16, got {n}")
    rows, cols = np.mgrid[0:n, 0:n].astype(np.float64)
    # slightly elliptical so the pattern has no transpose symmetry
    dist = np.hypot(rows, 0.78 * cols)
    dmax = float(dist.max())
    t = dist / dmax
    # cycles per pixel, swept from nu_hi at the dark corner down to nu_lo
    nu_hi, nu_lo = 0.14, 0.012
    phase = nu_hi * dist + (nu_lo - nu_hi) * dist**2 / (2.0 * dmax)
    level = t
    amp = 0.13 + 0.04 * t
    raw = level + amp * np.sin(2.0 * np.pi * phase)
    return normalize(Image(raw))


def make_bumps(n: int) -> Image:
    """Deterministic n-by-n sum of four off-center Gaussian bumps.

    Smooth blobs of different widths and heights on a dark background,
    with no symmetry axis. Geometry is specified on a 64-unit grid and
    scaled with n. Output is normalized to span [0, 1].
    """
    if n < 16:
        raise TooSmall(f"bumps pattern needs n >= 16, got {n}")
    rows, cols = np.mgrid[0:n, 0:n].astype(np.float64)
    scale = n / 64.0
    px = np.zeros((n, n))
    for (r0, c0, sig, amp) in [
        (16.0, 18.0, 9.0, 1.0),
        (44.0, 40.0, 12.0, 0.8),
        (20.0, 48.0, 6.0, 0.6),
        (50.0, 12.0, 8.0, 0.7),
    ]:
        d2 = (rows - r0 * scale) ** 2 + (cols - c0 * scale) ** 2
        px += amp * np.exp(-d2 / (2.0 * (sig * scale) ** 2))
    return normalize(Image(px))


def make_disks(n: int) -> Image:
    """Deterministic n-by-n arrangement of four soft-edged disks.

    Overlapping plateaus with logistic edge profiles a few pixels wide,
    on a uniform background. Geometry is specified on a 64-unit grid and
    scaled with n. Output is normalized to span [0, 1].
    """
    if n < 16:
        raise TooSmall(f"disks pattern needs n >= 16, got {n}")
    rows, cols = np.mgrid[0:n, 0:n].astype(np.float64)
    scale = n / 64.0
    px = np.full((n, n), 0.12)
    for (r0, c0, rad, level, soft) in [
        (18.0, 20.0, 12.0, 0.9, 4.0),
        (44.0, 44.0, 14.0, 0.62, 5.0),
        (16.0, 48.0, 8.0, 0.78, 3.2),
        (48.0, 14.0, 9.0, 0.45, 4.0),
    ]:
        d = np.hypot(rows - r0 * scale, cols - c0 * scale)
        px += (level - 0.12) / (1.0 + np.exp((d - rad * scale) / (soft * scale)))
    return normalize(Image(px))


_PGM_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def read_pgm(path) -> Image:
    """Read a binary (P5) PGM file with maxval 255."""
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if m is None:
        raise InvalidImage(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise InvalidImage(f"{path}: unsupported maxval {maxval}, expected 255")
    body = data[m.end():]
    if len(body) < width * height:
        raise InvalidImage(f"{path}: truncated pixel data")
    raster = np.frombuffer(body[: width * height], dtype=np.uint8)
    return Image(raster.reshape(height, width).astype(np.float64) / 255.0)


def write_pgm(img: Image, path) -> None:
    """Write as binary PGM, mapping [0, 1] linearly onto 0..255.

    Values are clipped to [0, 1] first; quantization rounds half up.
    """
    px = np.clip(img.pixels, 0.0, 1.0)
    raster = np.floor(px * 255.0 + 0.5).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + raster.tobytes())
