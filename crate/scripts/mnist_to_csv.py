#!/usr/bin/env python3
"""Convert the MNIST IDX files into the odd/even CSV the MNIST preset expects.

Usage:
    mnist_to_csv.py DIR OUT.csv

DIR must hold train-images-idx3-ubyte[.gz], train-labels-idx1-ubyte[.gz],
t10k-images-idx3-ubyte[.gz] and t10k-labels-idx1-ubyte[.gz]. The output has
784 pixel columns scaled to [0, 1] followed by cloud_label (1 for odd digits).
Train and test images are concatenated (70K rows); the preset splits them.
"""

import csv
import gzip
import os
import struct
import sys


def _open(dir_, stem):
    for name in (stem, stem + ".gz"):
        path = os.path.join(dir_, name)
        if os.path.exists(path):
            return gzip.open(path, "rb") if name.endswith(".gz") else open(path, "rb")
    sys.exit(f"missing {stem} in {dir_}")


def images(dir_, stem):
    with _open(dir_, stem) as f:
        magic, n, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != 2051:
            sys.exit(f"{stem}: bad magic {magic}")
        size = rows * cols
        data = f.read(n * size)
        return [data[i * size:(i + 1) * size] for i in range(n)]


def labels(dir_, stem):
    with _open(dir_, stem) as f:
        magic, n = struct.unpack(">II", f.read(8))
        if magic != 2049:
            sys.exit(f"{stem}: bad magic {magic}")
        return list(f.read(n))


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    src, out = sys.argv[1], sys.argv[2]
    rows = []
    for prefix in ("train", "t10k"):
        xs = images(src, f"{prefix}-images-idx3-ubyte")
        ys = labels(src, f"{prefix}-labels-idx1-ubyte")
        rows.extend(zip(xs, ys))
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"p{i}" for i in range(784)] + ["cloud_label"])
        for x, y in rows:
            w.writerow(["%g" % (v / 255) for v in x] + [y % 2])


if __name__ == "__main__":
    main()
