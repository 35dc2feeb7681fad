"""Dataset loaders (MNIST IDX, CSV) and synthetic generators with known truth."""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, FormatError, ParameterError

__all__ = [
    "Dataset",
    "Standardizer",
    "one_hot",
    "load_idx",
    "load_csv",
    "split_rows",
    "dump_csv",
    "read_dump_csv",
    "synth_sparse_regression",
    "synth_two_class",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    task: str = "classification"
    split: str = "train"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise ParameterError(f"unknown task {self.task!r}")
        if self.features.ndim != 2 or self.targets.ndim != 2:
            raise FormatError("features and targets must be 2-D")
        if self.features.shape[0] != self.targets.shape[0]:
            raise FormatError(
                f"{self.features.shape[0]} feature rows but {self.targets.shape[0]} target rows"
            )
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise FormatError("dataset contains NaN or infinite values")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.task == other.task and self.split == other.split
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.targets, other.targets))

    __hash__ = None

    def __len__(self):
        return self.features.shape[0]

    def rows(self, start, stop, split=None):
        return replace(
            self,
            features=self.features[start:stop],
            targets=self.targets[start:stop],
            split=split or self.split,
        )


def one_hot(labels, n_classes=None):
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _read_bytes(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw, expected_magic, ndims, path):
    need = 4 + 4 * ndims
    if len(raw) < need:
        raise FormatError(f"{path}: truncated IDX header at offset {len(raw)}")
    magic = struct.unpack_from(">I", raw, 0)[0]
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    return struct.unpack_from(f">{ndims}I", raw, 4), need


def load_idx(images_path, labels_path, n_classes=10):
    """Parse an IDX image/label pair (optionally gzipped) into a Dataset.

    Pixels are scaled to [0, 1]; labels become one-hot rows.
    """
    img_raw = _read_bytes(images_path)
    lab_raw = _read_bytes(labels_path)
    (n_img, rows, cols), off = _idx_header(img_raw, IDX_IMAGES_MAGIC, 3, images_path)
    (n_lab,), loff = _idx_header(lab_raw, IDX_LABELS_MAGIC, 1, labels_path)
    if n_img != n_lab:
        raise FormatError(f"count mismatch at offset 4: {n_img} images vs {n_lab} labels")
    size = n_img * rows * cols
    if len(img_raw) - off < size:
        raise FormatError(f"{images_path}: truncated pixel data at offset {len(img_raw)}, expected {off + size} bytes")
    if len(lab_raw) - loff < n_lab:
        raise FormatError(f"{labels_path}: truncated label data at offset {len(lab_raw)}, expected {loff + n_lab} bytes")
    pixels = np.frombuffer(img_raw, dtype=np.uint8, count=size, offset=off)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=n_lab, offset=loff)
    if labels.size and labels.max() >= n_classes:
        raise FormatError(f"{labels_path}: label {labels.max()} outside 0..{n_classes - 1}")
    x = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    return Dataset(x, one_hot(labels, n_classes), "classification", "train",
                   meta={"image_shape": (rows, cols)})


def split_rows(ds, n_train, n_validation=0, n_test=0):
    """Cut a dataset into train/validation/test by row order (no shuffling)."""
    need = n_train + n_validation + n_test
    if need > len(ds):
        raise ConfigError(f"requested {need} rows but the dataset has {len(ds)}")
    bounds = np.cumsum([0, n_train, n_validation, n_test])
    names = ("train", "validation", "test")
    return {name: ds.rows(bounds[i], bounds[i + 1], split=name) for i, name in enumerate(names)}


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x):
        mean = x.mean(axis=0)
        sd = x.std(axis=0)
        # constant columns map to all zeros
        return cls(mean, np.where(sd > np.sqrt(VARIANCE_FLOOR), sd, 1.0))

    def __call__(self, x):
        return (x - self.mean) / self.scale


def load_csv(path, target_column, task, n_train=None, n_validation=0, n_test=0,
             standardize_targets=False, n_classes=None):
    """Read a headered numeric CSV into train/validation/test Datasets.

    Features are standardized with statistics from the train rows only.
    Classification targets are integer labels turned into one-hot rows.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise ConfigError(f"{path}: target column {target_column!r} not in header {header}")
        rows = []
        for r, line in enumerate(reader, start=2):
            if not line:
                continue
            if len(line) != len(header):
                raise FormatError(f"{path}: row {r} has {len(line)} cells, header has {len(header)}")
            try:
                rows.append([float(v) for v in line])
            except ValueError:
                c = next(i for i, v in enumerate(line) if not _is_float(v))
                raise FormatError(f"{path}: non-numeric cell {line[c]!r} at row {r}, column {header[c]!r}") from None
    table = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    t = header.index(target_column)
    x = np.delete(table, t, axis=1)
    raw_y = table[:, t]
    if task == "classification":
        if np.any(raw_y != np.round(raw_y)) or np.any(raw_y < 0):
            raise FormatError(f"{path}: classification targets must be non-negative integers")
        y = one_hot(raw_y.astype(np.int64), n_classes)
    else:
        y = raw_y[:, None]

    n_train = len(rows) - n_validation - n_test if n_train is None else n_train
    ds = Dataset(x, y, task, "train", meta={"columns": [h for i, h in enumerate(header) if i != t]})
    splits = split_rows(ds, n_train, n_validation, n_test)
    xs = Standardizer.fit(splits["train"].features)
    ys = Standardizer.fit(splits["train"].targets) if (standardize_targets and task == "regression") else None
    out = {}
    for name, part in splits.items():
        meta = dict(part.meta, feature_standardizer=xs, target_standardizer=ys)
        out[name] = replace(
            part,
            features=xs(part.features),
            targets=ys(part.targets) if ys is not None else part.targets,
            meta=meta,
        )
    return out


def _is_float(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


def dump_csv(ds, path):
    """Write features and targets with round-trip exact float formatting."""
    d, k = ds.features.shape[1], ds.targets.shape[1]
    with open(path, "w", newline="") as f:
        f.write(f"# task={ds.task} split={ds.split}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(d)] + [f"y{i}" for i in range(k)])
        for xr, yr in zip(ds.features, ds.targets):
            w.writerow([repr(float(v)) for v in xr] + [repr(float(v)) for v in yr])


def read_dump_csv(path):
    with open(path, newline="") as f:
        first = f.readline()
        if not first.startswith("# "):
            raise FormatError(f"{path}: missing '# task=... split=...' line at offset 0")
        tags = dict(kv.split("=", 1) for kv in first[2:].split())
        reader = csv.reader(f)
        header = next(reader)
        table = np.array([[float(v) for v in line] for line in reader if line], dtype=np.float64)
    d = sum(h.startswith("x") for h in header)
    table = table.reshape(-1, len(header))
    return Dataset(table[:, :d], table[:, d:], tags["task"], tags["split"])


def synth_sparse_regression(n, d, active_set, w_scale, noise_sd, rng):
    """X ~ N(0, 1), y = X w* + eps with w* nonzero only on ``active_set`` (0-based)."""
    active = sorted(set(int(j) for j in active_set))
    if any(j < 0 or j >= d for j in active):
        raise ParameterError(f"active set {active} not within 0..{d - 1}")
    gen = rng.generator
    x = gen.standard_normal((n, d))
    w = np.zeros(d)
    w[active] = w_scale
    y = x @ w + noise_sd * gen.standard_normal(n)
    return Dataset(x, y[:, None], "regression"), w


def synth_two_class(n, rng, separation=3.0):
    """Two Gaussian blobs in 2-D, one-hot targets; linearly separable for large separation."""
    gen = rng.generator
    labels = np.arange(n) % 2
    centers = np.array([[-separation / 2, 0.0], [separation / 2, 0.0]])
    x = centers[labels] + 0.5 * gen.standard_normal((n, 2))
    return Dataset(x, one_hot(labels, 2), "classification")
