"""Tabular (x, y) sample store, per-feature standardization, seeded splits.

CSV files use a header row x_1..x_Dx, y_1..y_Dy and shortest round-trip
float formatting, so a written file reloads to bit-identical arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

_SCALE_FLOOR = 1e-12


@dataclass
class Dataset:
    x: np.ndarray  # (n, dim_x)
    y: np.ndarray  # (n, dim_y)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.y.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise ConfigError("dataset arrays must be 2-D with matching row counts")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim_x(self) -> int:
        return self.x.shape[1]

    @property
    def dim_y(self) -> int:
        return self.y.shape[1]

    def save_csv(self, path: str | Path) -> None:
        header = [f"x_{i + 1}" for i in range(self.dim_x)] + [
            f"y_{i + 1}" for i in range(self.dim_y)
        ]
        lines = [",".join(header)]
        for xi, yi in zip(self.x, self.y):
            lines.append(",".join(repr(float(v)) for v in (*xi, *yi)))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load_csv(cls, path: str | Path) -> "Dataset":
        text = Path(path).read_text().strip().splitlines()
        if not text:
            raise ConfigError(f"empty dataset file: {path}")
        header = [c.strip() for c in text[0].split(",")]
        dim_x = sum(1 for c in header if c.startswith("x_"))
        dim_y = sum(1 for c in header if c.startswith("y_"))
        if dim_x == 0 or dim_y == 0 or dim_x + dim_y != len(header):
            raise ConfigError(f"bad dataset header in {path}: {header}")
        rows = np.array(
            [[float(v) for v in line.split(",")] for line in text[1:]], dtype=np.float64
        )
        if rows.shape[1] != dim_x + dim_y:
            raise ConfigError(f"row width mismatch in {path}")
        return cls(rows[:, :dim_x], rows[:, dim_x:])


def split_indices(n: int, fractions: tuple[float, float, float], seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffle 0..n-1 and cut into (train, test, val) index arrays.

    Counts are rounded so they always sum to n; with the defaults and
    n=3000 this yields 2550/315/135.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = round(fractions[0] * n)
    n_test = round(fractions[1] * n)
    n_val = n - n_train - n_test
    if min(n_train, n_test, n_val) < 1:
        raise ConfigError(f"split of {n} samples leaves an empty part: {fractions}")
    return (
        perm[:n_train],
        perm[n_train : n_train + n_test],
        perm[n_train + n_test :],
    )


@dataclass
class Standardizer:
    """Per-feature affine map to zero mean and unit variance.

    Fitted on the training split only. Features with (near) zero spread
    keep scale 1 so constant columns pass through unchanged.
    """

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray

    @classmethod
    def fit(cls, x_train: np.ndarray, y_train: np.ndarray) -> "Standardizer":
        def stats(arr):
            mean = arr.mean(axis=0)
            scale = arr.std(axis=0)
            scale = np.where(scale > _SCALE_FLOOR, scale, 1.0)
            return mean, scale

        xm, xs = stats(np.asarray(x_train, dtype=np.float64))
        ym, ys = stats(np.asarray(y_train, dtype=np.float64))
        return cls(xm, xs, ym, ys)

    def transform_x(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.x_mean) / self.x_scale

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_scale

    def inverse_x(self, xs: np.ndarray) -> np.ndarray:
        return np.asarray(xs, dtype=np.float64) * self.x_scale + self.x_mean

    def inverse_y(self, ys: np.ndarray) -> np.ndarray:
        return np.asarray(ys, dtype=np.float64) * self.y_scale + self.y_mean


@dataclass
class DataSplits:
    """Standardized train/test/val arrays plus the fitted standardizer."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    standardizer: Standardizer
    train_idx: np.ndarray
    test_idx: np.ndarray
    val_idx: np.ndarray

    @classmethod
    def from_dataset(
        cls,
        dataset: Dataset,
        seed,
        fractions: tuple[float, float, float] = (0.85, 0.105, 0.045),
        train_fraction: float = 1.0,
    ) -> "DataSplits":
        """Split, optionally subsample the train part, and standardize.

        train_fraction < 1 keeps a prefix of the shuffled train indices;
        test and val are untouched so data-scarcity sweeps stay comparable.
        """
        tr, te, va = split_indices(dataset.n, fractions, seed)
        if not 0.0 < train_fraction <= 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1], got {train_fraction}")
        if train_fraction < 1.0:
            tr = tr[: max(1, round(train_fraction * tr.size))]
        std = Standardizer.fit(dataset.x[tr], dataset.y[tr])
        return cls(
            x_train=std.transform_x(dataset.x[tr]),
            y_train=std.transform_y(dataset.y[tr]),
            x_test=std.transform_x(dataset.x[te]),
            y_test=std.transform_y(dataset.y[te]),
            x_val=std.transform_x(dataset.x[va]),
            y_val=std.transform_y(dataset.y[va]),
            standardizer=std,
            train_idx=tr,
            test_idx=te,
            val_idx=va,
        )
