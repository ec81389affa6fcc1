#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

The package stores each image as 784 floats rounded to three decimals of
byte/255, which is enough to recover the original bytes exactly.

usage: npm_mnist_to_idx.py <package/src/digits> <out_dir> <per_class> [prefix] [offset]

`offset` skips that many images of every digit, for disjoint splits.
"""
import gzip
import json
import os
import struct
import sys


def main():
    digits_dir, out_dir, per_class = sys.argv[1], sys.argv[2], int(sys.argv[3])
    prefix = sys.argv[4] if len(sys.argv) > 4 else "desk"
    offset = int(sys.argv[5]) if len(sys.argv) > 5 else 0
    per_digit = []
    for d in range(10):
        with open(os.path.join(digits_dir, f"{d}.json")) as f:
            data = json.load(f)["data"]
        n = len(data) // 784 - offset
        take = n if per_class <= 0 else per_class
        if take > n:
            sys.exit(f"digit {d} has only {n} images past offset {offset}")
        rows = range(offset, offset + take)
        per_digit.append([data[i * 784:(i + 1) * 784] for i in rows])
    # round-robin interleave so classes are mixed in file order
    images, labels = [], []
    longest = max(len(x) for x in per_digit)
    for i in range(longest):
        for d in range(10):
            if i < len(per_digit[d]):
                images.append(bytes(round(v * 255) for v in per_digit[d][i]))
                labels.append(d)
    os.makedirs(out_dir, exist_ok=True)
    img = struct.pack(">IIII", 0x803, len(images), 28, 28) + b"".join(images)
    lab = struct.pack(">II", 0x801, len(labels)) + bytes(labels)
    with gzip.GzipFile(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(img)
    with gzip.GzipFile(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(lab)
    print(f"wrote {len(images)} images to {out_dir}")


if __name__ == "__main__":
    main()
