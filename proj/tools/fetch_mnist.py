#!/usr/bin/env python3
"""Prepare an MNIST subset in IDX format for gradlab.

The digits come from the `mnist` npm package (10,000 real MNIST samples,
MIT licensed). Pixels there are byte/255 rounded to three decimals, so the
original bytes are recovered exactly with round(v * 255).

The samples are shuffled with a fixed seed and split into a training part
and a test part, written with the standard MNIST file names:

    train-images-idx3-ubyte  train-labels-idx1-ubyte
    t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte

If you already have the original MNIST files, drop them into the data
directory instead; the loader only cares about the IDX format.
"""

import argparse
import json
import pathlib
import random
import struct
import subprocess
import tarfile
import tempfile

PACKAGE = "mnist@1.1.0"
SIDE = 28


def fetch_tarball(workdir: pathlib.Path) -> pathlib.Path:
    out = subprocess.run(
        ["npm", "pack", PACKAGE, "--silent"],
        cwd=workdir,
        check=True,
        capture_output=True,
        text=True,
    )
    return workdir / out.stdout.strip().splitlines()[-1]


def read_digits(tarball: pathlib.Path):
    samples = []
    with tarfile.open(tarball) as tar:
        for digit in range(10):
            member = tar.getmember(f"package/src/digits/{digit}.json")
            flat = json.load(tar.extractfile(member))["data"]
            if len(flat) % (SIDE * SIDE) != 0:
                raise ValueError(f"digit {digit}: ragged pixel array")
            pixels = bytes(round(v * 255) for v in flat)
            for k in range(len(flat) // (SIDE * SIDE)):
                lo = k * SIDE * SIDE
                samples.append((pixels[lo : lo + SIDE * SIDE], digit))
    return samples


def write_idx(prefix: pathlib.Path, samples):
    images = prefix.with_name(prefix.name + "-images-idx3-ubyte")
    labels = prefix.with_name(prefix.name + "-labels-idx1-ubyte")
    with open(images, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), SIDE, SIDE))
        for pixels, _ in samples:
            f.write(pixels)
    with open(labels, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/mnist", help="output directory")
    parser.add_argument("--tarball", help="use a local copy of the npm tarball")
    parser.add_argument("--test-size", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=20220101)
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        tarball = pathlib.Path(args.tarball) if args.tarball else fetch_tarball(pathlib.Path(tmp))
        samples = read_digits(tarball)

    random.Random(args.seed).shuffle(samples)
    test, train = samples[: args.test_size], samples[args.test_size :]
    write_idx(out / "train", train)
    write_idx(out / "t10k", test)
    print(f"wrote {len(train)} training and {len(test)} test samples to {out}")


if __name__ == "__main__":
    main()
