"""Circular (wraparound) convolution with a truncated Gaussian kernel.

The forward operator is plain spatial convolution over the torus; the
adjoint is correlation, i.e. convolution with the kernel rotated 180
degrees about the center tap. Kernels of even size use the center
convention (size // 2, size // 2).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidPsf

__all__ = ["GaussianPsf", "make_gaussian_psf", "BlurOperator"]


@dataclass(frozen=True)
class GaussianPsf:
    """Normalized isotropic Gaussian point-spread function.

    weights sum to 1; the center tap sits at (size // 2, size // 2).
    """

    weights: np.ndarray
    size: int
    sigma: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def center(self) -> tuple[int, int]:
        return (self.size // 2, self.size // 2)

    def offsets(self):
        """Yield (row offset, column offset, weight) for every tap."""
        ci, cj = self.center
        for ki in range(self.size):
            for kj in range(self.size):
                yield ki - ci, kj - cj, float(self.weights[ki, kj])

    def to_text(self) -> str:
        """Human-readable weight grid, one kernel row per line."""
        lines = [f"# gaussian psf size={self.size} sigma={self.sigma:.17g}"]
        for row in self.weights:
            lines.append(" ".join(f"{w:.17g}" for w in row))
        return "\n".join(lines) + "\n"


def make_gaussian_psf(size: int, sigma: float) -> GaussianPsf:
    """Sample exp(-(di^2+dj^2) / (2 sigma^2)) on a size-by-size grid.

    Offsets are taken relative to the center tap (size // 2, size // 2)
    and the weights are normalized to unit sum. size == 1 yields the
    identity kernel regardless of sigma.
    """
    if size < 1:
        raise InvalidPsf(f"kernel size must be >= 1, got {size}")
    if not (sigma > 0.0) or not np.isfinite(sigma):
        raise InvalidPsf(f"sigma must be positive and finite, got {sigma}")
    c = size // 2
    idx = np.arange(size, dtype=np.float64) - c
    d2 = idx[:, None] ** 2 + idx[None, :] ** 2
    w = np.exp(-d2 / (2.0 * sigma * sigma))
    w /= w.sum()
    return GaussianPsf(weights=w, size=size, sigma=float(sigma))


@dataclass(frozen=True)
class BlurOperator:
    """Blur over an height-by-width torus, acting on vectorized images."""

    psf: GaussianPsf
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DimensionError(f"bad geometry {self.height}x{self.width}")
        if self.psf.size > min(self.height, self.width):
            raise DimensionError(
                f"kernel size {self.psf.size} exceeds image side "
                f"{min(self.height, self.width)}"
            )

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def _check(self, vec: np.ndarray) -> np.ndarray:
        v = np.asarray(vec, dtype=np.float64)
        if v.ndim != 1 or v.size != self.n_pixels:
            raise DimensionError(
                f"vector of length {v.size} does not match "
                f"{self.height}x{self.width} grid"
            )
        return v

    def _convolve(self, vec: np.ndarray, flip: bool) -> np.ndarray:
        img = self._check(vec).reshape(self.height, self.width)
        out = np.zeros_like(img)
        for di, dj, w in self.psf.offsets():
            if w == 0.0:
                continue
            if flip:
                di, dj = -di, -dj
            out += w * np.roll(img, (di, dj), axis=(0, 1))
        return out.reshape(-1)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Circular convolution of the vectorized image with the kernel."""
        return self._convolve(vec, flip=False)

    def apply_adjoint(self, vec: np.ndarray) -> np.ndarray:
        """Exact adjoint of :meth:`apply` (circular correlation)."""
        return self._convolve(vec, flip=True)
