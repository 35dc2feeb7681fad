"""Convert the 5000-digit MNIST sample bundled with mlxtend into gzipped IDX files.

The source CSV is sorted by class (500 rows per digit). Rows are interleaved
round-robin so that output row ``i`` holds digit ``i % 10``; any contiguous
prefix is then class balanced and row-order subsetting stays reproducible.

Usage::

    pip download --no-deps mlxtend==0.24.0 -d /tmp/mlx
    python scripts/make_mnist_subset.py /tmp/mlx/mlxtend-0.24.0-py3-none-any.whl data/
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main(wheel, out_dir):
    raw = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)

    by_class = [np.flatnonzero(labels == c) for c in range(10)]
    order = np.stack(by_class, axis=1).reshape(-1)
    pixels, labels = pixels[order], labels[order]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(labels)
    # mtime=0 keeps the gzip bytes reproducible
    with gzip.GzipFile(out / "mnist5k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(pixels.tobytes())
    with gzip.GzipFile(out / "mnist5k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
