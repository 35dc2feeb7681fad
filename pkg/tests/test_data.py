import gzip
import struct

import numpy as np
import pytest

from gsmprune.data import (
    Dataset,
    dump_csv,
    load_csv,
    load_idx,
    one_hot,
    read_dump_csv,
    split_rows,
    synth_sparse_regression,
    synth_two_class,
)
from gsmprune.errors import ConfigError, FormatError, ParameterError
from gsmprune.numerics import RngState

from conftest import DATA_DIR


def idx_images(pixels):
    n, r, c = pixels.shape
    return struct.pack(">IIII", 0x803, n, r, c) + pixels.astype(np.uint8).tobytes()


def idx_labels(labels):
    return struct.pack(">II", 0x801, len(labels)) + bytes(labels)


@pytest.fixture
def tiny_idx(tmp_path):
    pixels = np.array([[[0, 255], [128, 0]], [[255, 255], [0, 1]]])
    (tmp_path / "img").write_bytes(idx_images(pixels))
    (tmp_path / "lab").write_bytes(idx_labels([3, 7]))
    return tmp_path / "img", tmp_path / "lab"


class TestIdx:
    def test_two_images(self, tiny_idx):
        ds = load_idx(*tiny_idx)
        np.testing.assert_array_equal(ds.features, [[0, 1, 128 / 255, 0], [1, 1, 0, 1 / 255]])
        np.testing.assert_array_equal(ds.targets, one_hot([3, 7], 10))
        assert ds.meta["image_shape"] == (2, 2)

    def test_gzipped(self, tiny_idx, tmp_path):
        img, lab = tiny_idx
        (tmp_path / "img.gz").write_bytes(gzip.compress(img.read_bytes()))
        assert load_idx(tmp_path / "img.gz", lab) == load_idx(img, lab)

    def test_bad_magic(self, tiny_idx):
        img, lab = tiny_idx
        raw = bytearray(img.read_bytes())
        raw[3] = 0x01
        img.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="offset 0"):
            load_idx(img, lab)

    def test_truncated_pixels(self, tiny_idx):
        img, lab = tiny_idx
        img.write_bytes(img.read_bytes()[:-1])
        with pytest.raises(FormatError, match="truncated"):
            load_idx(img, lab)

    def test_truncated_header(self, tiny_idx):
        img, lab = tiny_idx
        img.write_bytes(img.read_bytes()[:6])
        with pytest.raises(FormatError, match="header"):
            load_idx(img, lab)

    def test_count_mismatch(self, tiny_idx):
        img, lab = tiny_idx
        lab.write_bytes(idx_labels([3]))
        with pytest.raises(FormatError, match="count mismatch"):
            load_idx(img, lab)

    def test_label_out_of_range(self, tiny_idx):
        img, lab = tiny_idx
        lab.write_bytes(idx_labels([3, 7]))
        with pytest.raises(FormatError, match="label"):
            load_idx(img, lab, n_classes=5)

    def test_bundled_subset(self):
        ds = load_idx(DATA_DIR / "mnist5k-images-idx3-ubyte.gz", DATA_DIR / "mnist5k-labels-idx1-ubyte.gz")
        assert ds.features.shape == (5000, 784)
        assert ds.features.min() >= 0 and ds.features.max() <= 1
        np.testing.assert_array_equal(ds.targets.sum(axis=1), 1.0)


def write(path, text):
    path.write_text(text)
    return path


class TestCsv:
    def test_three_rows(self, tmp_path):
        p = write(tmp_path / "t.csv", "a,b,y\n1,10,0.5\n2,10,1.5\n3,10,2.5\n")
        out = load_csv(p, "y", "regression")
        tr = out["train"]
        sd = np.std([1.0, 2.0, 3.0])
        np.testing.assert_allclose(tr.features[:, 0], (np.array([1, 2, 3]) - 2) / sd)
        np.testing.assert_array_equal(tr.features[:, 1], 0.0)
        np.testing.assert_array_equal(tr.targets[:, 0], [0.5, 1.5, 2.5])
        assert tr.meta["columns"] == ["a", "b"]

    def test_train_only_statistics(self, tmp_path):
        p = write(tmp_path / "t.csv", "x,y\n0,0\n2,0\n100,1\n")
        out = load_csv(p, "y", "classification", n_train=2, n_test=1)
        np.testing.assert_allclose(out["train"].features[:, 0], [-1.0, 1.0])
        np.testing.assert_allclose(out["test"].features[:, 0], [99.0])
        np.testing.assert_array_equal(out["test"].targets, [[0.0, 1.0]])

    def test_standardized_targets(self, tmp_path):
        p = write(tmp_path / "t.csv", "x,y\n0,1\n1,3\n2,100\n")
        out = load_csv(p, "y", "regression", n_train=2, n_test=1, standardize_targets=True)
        np.testing.assert_allclose(out["train"].targets[:, 0], [-1.0, 1.0])
        np.testing.assert_allclose(out["test"].targets[:, 0], [98.0])

    def test_missing_target(self, tmp_path):
        p = write(tmp_path / "t.csv", "a,b\n1,2\n")
        with pytest.raises(ConfigError, match="target column"):
            load_csv(p, "y", "regression")

    def test_non_numeric_cell(self, tmp_path):
        p = write(tmp_path / "t.csv", "a,b,y\n1,2,3\n4,oops,6\n")
        with pytest.raises(FormatError, match=r"row 3, column 'b'"):
            load_csv(p, "y", "regression")

    def test_ragged_row(self, tmp_path):
        p = write(tmp_path / "t.csv", "a,y\n1,2\n3\n")
        with pytest.raises(FormatError, match="row 3"):
            load_csv(p, "y", "regression")

    def test_too_many_rows_requested(self, tmp_path):
        p = write(tmp_path / "t.csv", "a,y\n1,2\n3,4\n")
        with pytest.raises(ConfigError):
            load_csv(p, "y", "regression", n_train=2, n_test=1)

    def test_fractional_class_label(self, tmp_path):
        p = write(tmp_path / "t.csv", "a,y\n1,0.5\n")
        with pytest.raises(FormatError):
            load_csv(p, "y", "classification")


class TestDatasetAndDump:
    def test_rejects_nan(self):
        with pytest.raises(FormatError):
            Dataset(np.array([[np.nan]]), np.zeros((1, 1)), "regression")

    def test_rejects_row_mismatch(self):
        with pytest.raises(FormatError):
            Dataset(np.zeros((2, 1)), np.zeros((3, 1)), "regression")

    def test_split_rows_order(self):
        ds = Dataset(np.arange(6.0)[:, None], np.zeros((6, 1)), "regression")
        parts = split_rows(ds, 3, 1, 2)
        np.testing.assert_array_equal(parts["validation"].features[:, 0], [3.0])
        assert parts["test"].split == "test"

    def test_dump_round_trip(self, tmp_path, rng):
        ds, _ = synth_sparse_regression(17, 4, [0, 2], 0.7, 0.1, rng)
        dump_csv(ds, tmp_path / "d.csv")
        back = read_dump_csv(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.targets, ds.targets)
        assert back.task == "regression"


class TestSynth:
    def test_noise_free_recovery(self, rng):
        ds, w = synth_sparse_regression(50, 6, [1, 4], 2.0, 0.0, rng)
        fit = np.linalg.lstsq(ds.features, ds.targets[:, 0], rcond=None)[0]
        np.testing.assert_allclose(fit, w, atol=1e-8)
        np.testing.assert_array_equal(np.flatnonzero(w), [1, 4])

    def test_deterministic(self):
        a, _ = synth_sparse_regression(10, 3, [0], 1.0, 0.5, RngState(4))
        b, _ = synth_sparse_regression(10, 3, [0], 1.0, 0.5, RngState(4))
        assert a == b
        assert synth_two_class(8, RngState(4)) == synth_two_class(8, RngState(4))

    def test_active_set_bounds(self, rng):
        with pytest.raises(ParameterError):
            synth_sparse_regression(10, 3, [3], 1.0, 0.0, rng)

    def test_two_class_balanced(self, rng):
        ds = synth_two_class(9, rng)
        np.testing.assert_array_equal(ds.targets.sum(axis=0), [5, 4])
