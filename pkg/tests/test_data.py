"""Dataset store, CSV round-trip, standardizer, seeded splits."""

import numpy as np
import pytest

from cdmkit.data import DataSplits, Dataset, Standardizer, split_indices
from cdmkit.errors import ConfigError


def _toy_dataset(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.5, 3.0, size=(n, 3))
    y = np.column_stack([x[:, 0] * x[:, 1], x[:, 2] ** 2, np.sin(x[:, 0]),
                         x.sum(axis=1), 1.0 / x[:, 1]])
    return Dataset(x, y)


class TestDatasetCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = _toy_dataset()
        # adversarial values for float formatting
        ds.x[0, 0] = 1.0 / 3.0
        ds.y[1, 2] = 1e-300
        ds.y[2, 3] = 1.2345678901234567e18
        path = tmp_path / "d.csv"
        ds.save_csv(path)
        back = Dataset.load_csv(path)
        np.testing.assert_array_equal(back.x, ds.x)
        np.testing.assert_array_equal(back.y, ds.y)

    def test_header_shape(self, tmp_path):
        ds = _toy_dataset()
        path = tmp_path / "d.csv"
        ds.save_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "x_1,x_2,x_3,y_1,y_2,y_3,y_4,y_5"

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ConfigError):
            Dataset.load_csv(path)


class TestSplits:
    def test_default_fractions_of_3000(self):
        tr, te, va = split_indices(3000, (0.85, 0.105, 0.045), seed=[1, 0])
        assert (len(tr), len(te), len(va)) == (2550, 315, 135)
        combined = np.sort(np.concatenate([tr, te, va]))
        np.testing.assert_array_equal(combined, np.arange(3000))

    def test_deterministic_given_seed(self):
        a = split_indices(100, (0.85, 0.105, 0.045), seed=[7, 3])
        b = split_indices(100, (0.85, 0.105, 0.045), seed=[7, 3])
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)

    def test_different_seeds_differ(self):
        a, _, _ = split_indices(100, (0.85, 0.105, 0.045), seed=[7, 3])
        b, _, _ = split_indices(100, (0.85, 0.105, 0.045), seed=[7, 4])
        assert not np.array_equal(a, b)

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            split_indices(10, (0.5, 0.4, 0.2), seed=0)


class TestStandardizer:
    def test_zero_mean_unit_variance(self):
        ds = _toy_dataset(200)
        std = Standardizer.fit(ds.x, ds.y)
        xs = std.transform_x(ds.x)
        np.testing.assert_allclose(xs.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(xs.std(axis=0), 1.0, rtol=1e-12)

    def test_round_trip(self):
        ds = _toy_dataset(50)
        std = Standardizer.fit(ds.x, ds.y)
        np.testing.assert_allclose(std.inverse_y(std.transform_y(ds.y)), ds.y, rtol=1e-12)

    def test_constant_feature_guard(self):
        x = np.ones((20, 2))
        y = np.random.default_rng(0).standard_normal((20, 3))
        std = Standardizer.fit(x, y)
        assert np.all(std.x_scale == 1.0)
        np.testing.assert_array_equal(std.transform_x(x), 0.0)


class TestDataSplits:
    def test_standardized_on_train_only(self):
        ds = _toy_dataset(300)
        splits = DataSplits.from_dataset(ds, seed=[0, 0])
        np.testing.assert_allclose(splits.y_train.mean(axis=0), 0.0, atol=1e-12)
        # test part is standardized with the train statistics, not its own
        assert abs(splits.y_test.mean()) > 1e-9

    def test_train_fraction_subsamples_prefix(self):
        ds = _toy_dataset(300)
        full = DataSplits.from_dataset(ds, seed=[0, 0])
        frac = DataSplits.from_dataset(ds, seed=[0, 0], train_fraction=0.5)
        assert frac.train_idx.size == round(0.5 * full.train_idx.size)
        np.testing.assert_array_equal(frac.train_idx, full.train_idx[: frac.train_idx.size])
        np.testing.assert_array_equal(frac.test_idx, full.test_idx)
        np.testing.assert_array_equal(frac.val_idx, full.val_idx)
