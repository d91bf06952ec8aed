"""Dataset generation, delimited-file ingestion, splitting, and
standardization, all with recorded provenance (generator config + seed, or
file path + SHA-256 digest)."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np


class FileFormatError(Exception):
    pass


class NonNumericCell(FileFormatError):
    pass


class MissingTarget(FileFormatError):
    pass


class CountsExceedN(Exception):
    pass


class NotFitted(Exception):
    pass


RNG_ALGORITHM = "numpy.random.default_rng (PCG64)"


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y row counts disagree")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()


def xsinx3(x):
    return x * np.sin(x**3)


def gen_xsinx3(n_train: int = 200, n_test: int = 500, noise_sd: float = 0.5,
               x_range: tuple = (0.0, 3.0), seed: int = 0):
    """Nonstationary 1-D benchmark: y = x sin(x^3) + noise.

    Train targets are noisy; test targets are the noiseless function values.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = x_range
    x_tr = rng.uniform(lo, hi, size=n_train)
    y_tr = xsinx3(x_tr) + noise_sd * rng.standard_normal(n_train)
    x_te = rng.uniform(lo, hi, size=n_test)
    y_te = xsinx3(x_te)
    prov = {
        "generator": "xsinx3",
        "seed": seed,
        "rng": RNG_ALGORITHM,
        "n_train": n_train,
        "n_test": n_test,
        "noise_sd": noise_sd,
        "x_range": list(x_range),
    }
    train = Dataset(x_tr, y_tr, provenance={**prov, "role": "train"})
    test = Dataset(x_te, y_te, provenance={**prov, "role": "test",
                                           "targets": "noiseless"})
    return train, test


def _bump_function(x):
    # smooth 1-D multi-bump curve, loosely in the spirit of the classic
    # 200-point pseudo-input toy set
    return (
        np.sin(1.5 * x)
        + 0.8 * np.cos(3.1 * x + 0.4)
        + 0.25 * x
    )


def gen_snelson_like(n_train: int = 200, noise_sd: float = 0.3,
                     x_range: tuple = (0.0, 6.0), seed: int = 0) -> Dataset:
    """Synthetic 1-D analog of the classic sparse-GP toy set."""
    rng = np.random.default_rng(seed)
    lo, hi = x_range
    x = rng.uniform(lo, hi, size=n_train)
    y = _bump_function(x) + noise_sd * rng.standard_normal(n_train)
    return Dataset(x, y, provenance={
        "generator": "snelson_like",
        "synthetic_analog": True,
        "seed": seed,
        "rng": RNG_ALGORITHM,
        "n_train": n_train,
        "noise_sd": noise_sd,
        "x_range": list(x_range),
    })


def _read_column(path):
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                vals.append(float(parts[0]))
            except ValueError as exc:
                raise FileFormatError(
                    f"{path}: non-numeric value at line {lineno}: {parts[0]!r}"
                ) from exc
    return np.array(vals)


def load_columns(inputs_path, outputs_path) -> Dataset:
    """Load the one-float-per-line input/output column file pair."""
    x = _read_column(inputs_path)
    y = _read_column(outputs_path)
    if x.shape[0] != y.shape[0]:
        raise FileFormatError(
            f"input file has {x.shape[0]} rows, output file has {y.shape[0]}"
        )
    return Dataset(x, y, provenance={
        "inputs_path": str(inputs_path),
        "outputs_path": str(outputs_path),
        "inputs_digest": _file_digest(inputs_path),
        "outputs_digest": _file_digest(outputs_path),
    })


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def load_csv(path, target, delimiter: str = ",", header: bool = True) -> Dataset:
    """Load a delimited numeric table; `target` selects the response column
    by header name or (possibly negative) index."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            names = next(reader) if header else None
        except StopIteration:
            raise FileFormatError(f"{path}: file is empty") from None
        for rownum, row in enumerate(reader, start=2 if header else 1):
            if not row or all(not c.strip() for c in row):
                continue
            rows.append((rownum, row))
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    ncols = len(rows[0][1])

    if isinstance(target, str) and not _is_int(target):
        if names is None:
            raise MissingTarget("target by name requires a header row")
        if target not in names:
            raise MissingTarget(f"target column {target!r} not in header {names}")
        t_idx = names.index(target)
    else:
        t_idx = int(target)
        if t_idx < 0:
            t_idx += ncols
        if not 0 <= t_idx < ncols:
            raise MissingTarget(f"target index {target} out of range for "
                                f"{ncols} columns")

    data = np.empty((len(rows), ncols))
    for i, (rownum, row) in enumerate(rows):
        if len(row) != ncols:
            raise FileFormatError(
                f"{path}: row {rownum} has {len(row)} cells, expected {ncols}"
            )
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError as exc:
                raise NonNumericCell(
                    f"{path}: non-numeric cell {cell!r} at row {rownum}, "
                    f"column {j + 1}"
                ) from exc
    feat_idx = [j for j in range(ncols) if j != t_idx]
    feature_names = [names[j] for j in feat_idx] if names else None
    return Dataset(
        data[:, feat_idx],
        data[:, t_idx],
        feature_names=feature_names,
        provenance={
            "path": str(path),
            "digest": _file_digest(path),
            "target": target,
            "delimiter": delimiter,
        },
    )


def _is_int(s):
    try:
        int(s)
        return True
    except (TypeError, ValueError):
        return False


def split(d: Dataset, train: float | int, seed: int = 0):
    """Random disjoint, exhaustive train/test split.

    `train` is a fraction in [0, 1] or an absolute training count.
    """
    n = d.n
    if isinstance(train, float) and 0 <= train <= 1:
        n_train = int(round(train * n))
    else:
        n_train = int(train)
    if n_train > n or n_train < 0:
        raise CountsExceedN(f"train count {n_train} invalid for N={n}")
    if n_train == n:
        import warnings
        warnings.warn("split produced an empty test set", UserWarning)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    tr, te = perm[:n_train], perm[n_train:]
    base = {"parent_digest": d.digest(), "split_seed": seed,
            "rng": RNG_ALGORITHM, **d.provenance}
    d_tr = Dataset(d.X[tr], d.y[tr], feature_names=d.feature_names,
                   provenance={**base, "role": "train"})
    d_te = Dataset(d.X[te], d.y[te], feature_names=d.feature_names,
                   provenance={**base, "role": "test"})
    d_tr.provenance["sibling_digest"] = d_te.digest()
    d_te.provenance["sibling_digest"] = d_tr.digest()
    return d_tr, d_te


@dataclass
class Standardizer:
    feature_mean: np.ndarray = None
    feature_scale: np.ndarray = None
    target_mean: float = None
    target_scale: float = None
    constant_features: np.ndarray = None
    fitted_on: str = None

    def fit(self, d: Dataset) -> "Standardizer":
        self.feature_mean = d.X.mean(axis=0)
        scale = d.X.std(axis=0)
        self.constant_features = scale == 0
        scale[self.constant_features] = 1.0
        self.feature_scale = scale
        self.target_mean = float(d.y.mean())
        ts = float(d.y.std())
        self.target_scale = ts if ts > 0 else 1.0
        self.fitted_on = d.digest()
        return self

    def _check(self):
        if self.feature_mean is None:
            raise NotFitted("standardizer has not been fitted")

    def apply(self, d: Dataset) -> Dataset:
        self._check()
        X = (d.X - self.feature_mean) / self.feature_scale
        y = (d.y - self.target_mean) / self.target_scale
        return Dataset(X, y, feature_names=d.feature_names,
                       provenance={**d.provenance,
                                   "standardized_with": self.fitted_on})

    def invert_predictions(self, mean, variance=None):
        """Map standardized predictions back to original target units."""
        self._check()
        mean = np.asarray(mean) * self.target_scale + self.target_mean
        if variance is None:
            return mean
        return mean, np.asarray(variance) * self.target_scale**2
