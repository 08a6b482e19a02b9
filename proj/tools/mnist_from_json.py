#!/usr/bin/env python3
"""Build MNIST IDX files from the digit JSON bundle of the npm `mnist` package.

Usage: mnist_from_json.py <package-dir> <out-dir> [--train-frac 0.75]

The npm package (https://www.npmjs.com/package/mnist) ships ~10k real MNIST
digits as per-class JSON arrays with pixels normalized to [0,1]. This script
converts them back to byte images and emits the four standard IDX files
(train-images.idx3-ubyte etc., big-endian, magics 2051/2049). Per class, the
first `train_frac` of the images go to the train files, the remainder to the
test files; images are interleaved round-robin by class so that any prefix of
the file is roughly class-balanced.
"""

import argparse
import json
import pathlib
import struct


def load_class(pkg_dir: pathlib.Path, digit: int):
    with open(pkg_dir / "src" / "digits" / f"{digit}.json") as f:
        flat = json.load(f)["data"]
    n = len(flat) // 784
    images = []
    for i in range(n):
        px = flat[i * 784 : (i + 1) * 784]
        images.append(bytes(min(255, max(0, round(v * 255))) for v in px))
    return images


def interleave(per_class):
    out = []
    idx = [0] * len(per_class)
    remaining = sum(len(c) for c in per_class)
    while remaining:
        for label, imgs in enumerate(per_class):
            if idx[label] < len(imgs):
                out.append((label, imgs[idx[label]]))
                idx[label] += 1
                remaining -= 1
    return out


def write_idx(out_dir: pathlib.Path, stem: str, pairs):
    with open(out_dir / f"{stem}-images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">iiii", 2051, len(pairs), 28, 28))
        for _, img in pairs:
            f.write(img)
    with open(out_dir / f"{stem}-labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">ii", 2049, len(pairs)))
        f.write(bytes(label for label, _ in pairs))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--train-frac", type=float, default=0.75)
    args = ap.parse_args()

    train_per_class, test_per_class = [], []
    for d in range(10):
        imgs = load_class(args.package_dir, d)
        cut = round(len(imgs) * args.train_frac)
        train_per_class.append(imgs[:cut])
        test_per_class.append(imgs[cut:])

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir, "train", interleave(train_per_class))
    write_idx(args.out_dir, "t10k", interleave(test_per_class))
    n_train = sum(len(c) for c in train_per_class)
    n_test = sum(len(c) for c in test_per_class)
    print(f"wrote {n_train} train / {n_test} test images to {args.out_dir}")


if __name__ == "__main__":
    main()
