#!/usr/bin/env python3
"""Fetch a 10k-digit MNIST subset and write it as gzipped IDX files.

The digits come from the `mnist` npm package, which ships about 1000 images
per class as JSON floats in [0, 1]. They are shuffled with a fixed seed and
split into train and t10k sets.

    python3 scripts/fetch_mnist.py [--out data/mnist] [--tarball mnist.tgz]
"""

import argparse
import gzip
import io
import json
import random
import struct
import sys
import tarfile
import urllib.request
from pathlib import Path

TARBALL_URL = "https://registry.npmjs.org/mnist/-/mnist-1.1.0.tgz"
ROWS = COLS = 28


def load_digits(tar_bytes):
    samples = []
    with tarfile.open(fileobj=io.BytesIO(tar_bytes), mode="r:gz") as tar:
        for digit in range(10):
            member = tar.getmember(f"package/src/digits/{digit}.json")
            data = json.load(tar.extractfile(member))["data"]
            n = len(data) // (ROWS * COLS)
            for i in range(n):
                chunk = data[i * ROWS * COLS:(i + 1) * ROWS * COLS]
                pixels = bytes(min(255, max(0, round(v * 255))) for v in chunk)
                samples.append((pixels, digit))
    return samples


def write_idx(path, images, labels):
    img = struct.pack(">IIII", 0x803, len(images), ROWS, COLS) + b"".join(images)
    lab = struct.pack(">II", 0x801, len(labels)) + bytes(labels)
    # mtime=0 keeps the output byte-identical across runs.
    for name, payload in ((f"{path}-images-idx3-ubyte.gz", img), (f"{path}-labels-idx1-ubyte.gz", lab)):
        with open(name, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
            f.write(payload)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--tarball", help="use a local copy of the npm tarball")
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if args.tarball:
        tar_bytes = Path(args.tarball).read_bytes()
    else:
        with urllib.request.urlopen(TARBALL_URL, timeout=120) as r:
            tar_bytes = r.read()

    samples = load_digits(tar_bytes)
    random.Random(args.seed).shuffle(samples)
    if not 0 < args.train < len(samples):
        sys.exit(f"--train must be in 1..{len(samples) - 1}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for prefix, part in (("train", samples[:args.train]), ("t10k", samples[args.train:])):
        write_idx(out / prefix, [p for p, _ in part], [l for _, l in part])
        print(f"{prefix}: {len(part)} images")


if __name__ == "__main__":
    main()
