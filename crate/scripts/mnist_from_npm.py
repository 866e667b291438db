#!/usr/bin/env python3
"""Rebuild data/mnist/*.gz from the `mnist` npm package (10000 digits).

Usage: npm pack mnist && python3 scripts/mnist_from_npm.py mnist-1.1.0.tgz data/mnist
"""
import gzip
import json
import random
import struct
import sys
import tarfile
from pathlib import Path


def main(tgz: str, out_dir: str) -> None:
    samples = []
    with tarfile.open(tgz) as tar:
        for digit in range(10):
            member = tar.extractfile(f"package/src/digits/{digit}.json")
            data = json.load(member)["data"]
            for k in range(len(data) // 784):
                pix = bytes(round(v * 255) for v in data[k * 784 : (k + 1) * 784])
                samples.append((pix, digit))
    random.Random(20210603).shuffle(samples)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    with gzip.GzipFile(out / "npm-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for pix, _ in samples:
            f.write(pix)
    with gzip.GzipFile(out / "npm-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
