#!/usr/bin/env python3
"""Build the bundled MNIST subset (IDX files) from mlxtend's mnist_5k.csv.gz.

mnist_5k holds the first 500 digits of every class from the MNIST training
set. The first 400 per class become the training split, the last 100 per
class the test split.

    pip download --no-deps -d /tmp/whl mlxtend
    python3 tools/make_mnist_subset.py /tmp/whl/mlxtend-*.whl data/mnist-subset
"""
import gzip
import pathlib
import struct
import sys
import zipfile

TRAIN_PER_CLASS = 400


def write_images(path, rows):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(r))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))


def main():
    wheel, out = sys.argv[1], pathlib.Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    seen = [0] * 10
    train, test = [], []
    for line in text.strip().splitlines():
        vals = [int(v) for v in line.split(",")]
        pixels, label = vals[:-1], vals[-1]
        assert len(pixels) == 784
        (train if seen[label] < TRAIN_PER_CLASS else test).append((pixels, label))
        seen[label] += 1
    for name, split in (("train", train), ("t10k", test)):
        write_images(out / f"{name}-images-idx3-ubyte", [p for p, _ in split])
        write_labels(out / f"{name}-labels-idx1-ubyte", [l for _, l in split])
    print(f"train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main()
