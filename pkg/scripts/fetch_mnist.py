#!/usr/bin/env python3
"""Download MNIST and write the 0-vs-8 subset as a dpstack CSV.

Needs network access; the library itself never downloads anything.
Digit 8 is labelled +1 and digit 0 is labelled -1; pixels are scaled to
[0, 1]. Usage:

    python3 scripts/fetch_mnist.py --out data/mnist-0v8.csv [--n 5000] [--seed 0]
"""

from __future__ import annotations

import argparse
import gzip
import hashlib
import struct
import sys
import urllib.request
from pathlib import Path

import numpy as np

MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)
FILES = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
}


def _download(name, cache):
    target = cache / name
    if not target.exists():
        for base in MIRRORS:
            try:
                with urllib.request.urlopen(base + name, timeout=60) as resp:
                    target.write_bytes(resp.read())
                break
            except OSError as exc:
                print(f"mirror {base} failed: {exc}", file=sys.stderr)
        else:
            raise SystemExit(f"could not download {name}")
    digest = hashlib.md5(target.read_bytes()).hexdigest()
    if digest != FILES[name]:
        target.unlink()
        raise SystemExit(f"checksum mismatch for {name}")
    return target


def _idx(path):
    with gzip.open(path, "rb") as fh:
        magic = struct.unpack(">I", fh.read(4))[0]
        ndim = magic & 0xFF
        shape = struct.unpack(">" + "I" * ndim, fh.read(4 * ndim))
        return np.frombuffer(fh.read(), dtype=np.uint8).reshape(shape)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="data/mnist-0v8.csv")
    ap.add_argument("--n", type=int, default=5000, help="number of samples to keep")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--cache", default=None, help="download cache directory (default: next to --out)")
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cache = Path(args.cache) if args.cache else out.parent
    cache.mkdir(parents=True, exist_ok=True)
    images = _idx(_download("train-images-idx3-ubyte.gz", cache)).reshape(-1, 28 * 28)
    labels = _idx(_download("train-labels-idx1-ubyte.gz", cache))

    keep = np.flatnonzero((labels == 0) | (labels == 8))
    rng = np.random.default_rng(args.seed)
    keep = np.sort(rng.choice(keep, size=min(args.n, keep.size), replace=False))
    X = images[keep].astype(float) / 255.0
    y = np.where(labels[keep] == 8, 1, -1)
    with open(out, "w") as fh:
        for yi, row in zip(y, X):
            fh.write(f"{yi}," + ",".join(f"{v:.6g}" for v in row) + "\n")
    print(f"wrote {len(y)} samples ({int((y > 0).sum())} eights) to {out}")


if __name__ == "__main__":
    main()
