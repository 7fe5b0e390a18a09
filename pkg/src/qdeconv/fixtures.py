"""Access to the bundled 64x64 test images.

Three deterministic textures cover the landscape the solver is tuned
for: an oscillatory radial chirp, smooth Gaussian bumps, and soft-edged
disk plateaus. The PGM files under data/ are generated by
scripts/make_fixtures.py from the generators in the image module.
"""
from __future__ import annotations

from importlib import resources

from .errors import UsageError
from .image import Image, read_pgm

__all__ = ["FIXTURE_NAMES", "fixture_path", "load_fixture"]

FIXTURE_NAMES = ("chirp", "bumps", "disks")


def fixture_path(name: str):
    """Filesystem path of a bundled fixture image."""
    if name not in FIXTURE_NAMES:
        raise UsageError(f"unknown fixture {name!r}, expected one of {FIXTURE_NAMES}")
    return resources.files("qdeconv").joinpath("data", f"{name}.pgm")


def load_fixture(name: str) -> Image:
    """Load a bundled fixture image."""
    with resources.as_file(fixture_path(name)) as path:
        return read_pgm(path)
