#!/usr/bin/env python3
"""Build the 10k-sample MNIST subset used by the fast test suite.

The digits come from the `mnist` npm package (10,000 MNIST digits stored as
JSON). They are shuffled with a fixed seed, split 8000/2000 and written as
standard IDX files into data/mnist10k/.
"""

import argparse
import json
import random
import struct
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

PACKAGE = "mnist@1.1.0"
SIDE = 28


def fetch_package(workdir: Path) -> Path:
    out = subprocess.run(["npm", "pack", PACKAGE, "--silent"], cwd=workdir, check=True,
                         capture_output=True, text=True).stdout.strip().splitlines()[-1]
    with tarfile.open(workdir / out) as tar:
        tar.extractall(workdir)
    return workdir / "package"


def load_digits(package: Path):
    samples = []
    for label in range(10):
        data = json.loads((package / "src" / "digits" / f"{label}.json").read_text())["data"]
        if len(data) % (SIDE * SIDE):
            sys.exit(f"digit {label}: {len(data)} values is not a multiple of {SIDE * SIDE}")
        for off in range(0, len(data), SIDE * SIDE):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in data[off:off + SIDE * SIDE])
            samples.append((pixels, label))
    return samples


def write_idx(samples, images: Path, labels: Path):
    with images.open("wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(samples), SIDE, SIDE))
        for pixels, _ in samples:
            f.write(pixels)
    with labels.open("wb") as f:
        f.write(struct.pack(">II", 0x801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--package", type=Path, help="unpacked npm package directory (fetched with npm if omitted)")
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "mnist10k")
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--seed", type=int, default=20240501)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        package = args.package or fetch_package(Path(tmp))
        samples = load_digits(package)

    random.Random(args.seed).shuffle(samples)
    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(samples[:args.train], args.out / "train-images-idx3-ubyte", args.out / "train-labels-idx1-ubyte")
    write_idx(samples[args.train:], args.out / "t10k-images-idx3-ubyte", args.out / "t10k-labels-idx1-ubyte")
    print(f"wrote {args.train} train / {len(samples) - args.train} test samples to {args.out}")


if __name__ == "__main__":
    main()
