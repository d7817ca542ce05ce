#!/usr/bin/env python3
"""Rebuild data/mnist-subset from the `mnist` npm package (10k real MNIST digits).

The package stores each digit as 784 grayscale values rounded to three decimals,
which recovers the original bytes exactly via round(v * 255). The first 700
digits of each class become the train split and the rest (163 to 427 per class,
the package holds unequal class counts) the test split.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_from_npm.py package/src/digits data/mnist-subset
"""
import gzip
import json
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 700


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    splits = {"train": ([], []), "t10k": ([], [])}
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        n = len(data) // 784
        for i in range(n):
            px = bytes(int(round(v * 255)) for v in data[i * 784:(i + 1) * 784])
            images, labels = splits["train" if i < TRAIN_PER_CLASS else "t10k"]
            images.append(px)
            labels.append(digit)
    for prefix, (images, labels) in splits.items():
        # interleave classes so the files are not sorted by label
        order = sorted(range(len(labels)), key=lambda k: ((k * 7919) % len(labels)))
        imgs = b"".join(images[k] for k in order)
        labs = bytes(labels[k] for k in order)
        write_idx(dst / f"{prefix}-images-idx3-ubyte.gz", 0x803, [len(order), 28, 28], imgs)
        write_idx(dst / f"{prefix}-labels-idx1-ubyte.gz", 0x801, [len(order)], labs)
        print(prefix, len(order))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
