#!/usr/bin/env python3
"""Regenerate the bundled fixture images under src/qdeconv/data/.

The fixtures are fully determined by the generators in qdeconv.image,
so this script only needs rerunning when a generator changes.
"""
from pathlib import Path

from qdeconv.image import make_bumps, make_disks, make_synthetic, write_pgm

SIZE = 64

GENERATORS = {
    "chirp": make_synthetic,
    "bumps": make_bumps,
    "disks": make_disks,
}


def main() -> None:
    data_dir = Path(__file__).resolve().parent.parent / "src" / "qdeconv" / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    for name, gen in GENERATORS.items():
        path = data_dir / f"{name}.pgm"
        write_pgm(gen(SIZE), path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
