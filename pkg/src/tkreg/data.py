"""Dataset generation, loading and splitting.

The synthetic recipe: X has standard-normal entries, the true weight
vector has s nonzero entries at random positions with values
sign(h) * (1 - 0.3*u) for h ~ N(0,1) and u ~ U[0,1) (magnitudes in
(0.7, 1.0]), and y = X w + sigma * eps with eps ~ N(0,1).

Randomness comes from numpy's PCG64 generator.  A SeedSequence is spawned
into five substreams consumed in a fixed order -- design matrix, support
positions, signs, magnitudes, noise -- so every field of the dataset is
reproducible from the seed alone.  Gaussians use numpy's ziggurat
standard_normal.

File formats ("# tk-data v1" header comment optional in both):

* dense CSV: UTF-8, '.' decimal, ',' separator, one example per row,
  label in the last column (an optional non-numeric first row is read as
  feature names);
* sparse text: one example per line, "label idx:val idx:val ...", indices
  0-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataFormatError

__all__ = [
    "Dataset",
    "GroundTruth",
    "SplitSpec",
    "SyntheticSpec",
    "gen_synthetic",
    "load_dense_csv",
    "load_sparse",
    "save_dense_csv",
    "save_truth_json",
    "load_truth_json",
    "split",
]

FORMAT_TAG = "# tk-data v1"


@dataclass(frozen=True)
class GroundTruth:
    """True weights and their support, kept alongside synthetic data."""

    w_true: np.ndarray
    support: np.ndarray


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple | None = None
    truth: GroundTruth | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ValueError(
                f"inconsistent dataset shapes X {self.X.shape}, y {self.y.shape}"
            )

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    sparsity: int
    sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError(f"n and d must be >= 1, got n={self.n}, d={self.d}")
        if not 1 <= self.sparsity <= self.d:
            raise ValueError(
                f"sparsity must lie in [1, d={self.d}], got {self.sparsity}"
            )
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class SplitSpec:
    train: int
    validation: int
    test: int
    seed: int = 0

    def __post_init__(self):
        if min(self.train, self.validation, self.test) < 0:
            raise ValueError("split sizes must be non-negative")

    @property
    def total(self):
        return self.train + self.validation + self.test


def gen_synthetic(spec):
    """Dataset drawn from the synthetic recipe; deterministic per seed."""
    streams = np.random.SeedSequence(spec.seed).spawn(5)
    rng_x, rng_pos, rng_sign, rng_mag, rng_noise = map(np.random.default_rng, streams)
    X = rng_x.standard_normal((spec.n, spec.d))
    support = np.sort(rng_pos.permutation(spec.d)[: spec.sparsity])
    signs = np.sign(rng_sign.standard_normal(spec.sparsity))
    signs[signs == 0.0] = 1.0
    magnitudes = 1.0 - 0.3 * rng_mag.random(spec.sparsity)
    w = np.zeros(spec.d)
    w[support] = signs * magnitudes
    y = X @ w + spec.sigma * rng_noise.standard_normal(spec.n)
    return Dataset(X=X, y=y, truth=GroundTruth(w_true=w, support=support))


def split(dataset, spec):
    """Seed-deterministic disjoint (train, validation, test) datasets."""
    if spec.total > dataset.n:
        raise ValueError(
            f"split sizes sum to {spec.total} but the dataset has {dataset.n} rows"
        )
    order = np.random.default_rng(np.random.SeedSequence(spec.seed)).permutation(
        dataset.n
    )
    out = []
    offset = 0
    for size in (spec.train, spec.validation, spec.test):
        rows = np.sort(order[offset : offset + size])
        offset += size
        out.append(
            replace(dataset, X=dataset.X[rows], y=dataset.y[rows])
        )
    return tuple(out)


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def load_dense_csv(path, label_column=-1):
    """Read a dense CSV dataset.

    ``label_column`` picks the response column by integer position
    (negative from the end) or by name when a header row is present.
    """
    rows = []
    names = None
    width = None
    first = True
    for lineno, line in _data_lines(path):
        cells = [c.strip() for c in line.split(",")]
        if first:
            first = False
            try:
                rows.append([float(c) for c in cells])
                width = len(cells)
            except ValueError:
                names = tuple(cells)
            continue
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DataFormatError(
                f"{path}: line {lineno}: expected {width} columns, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    table = np.array(rows)
    if isinstance(label_column, str):
        if names is None or label_column not in names:
            raise DataFormatError(
                f"{path}: label column {label_column!r} not found in header"
            )
        label_idx = names.index(label_column)
    else:
        label_idx = int(label_column) % table.shape[1]
    y = table[:, label_idx]
    X = np.delete(table, label_idx, axis=1)
    if names is not None:
        names = tuple(nm for i, nm in enumerate(names) if i != label_idx)
    if X.shape[1] == 0:
        raise DataFormatError(f"{path}: no feature columns besides the label")
    return Dataset(X=X, y=y, feature_names=names)


def save_dense_csv(dataset, path, header=True):
    """Write a dataset as dense CSV, label last; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FORMAT_TAG + "\n")
        if header and dataset.feature_names is not None:
            fh.write(",".join([*dataset.feature_names, "label"]) + "\n")
        for row, label in zip(dataset.X, dataset.y):
            fh.write(",".join(repr(float(v)) for v in [*row, label]) + "\n")


def load_sparse(path, num_features=None):
    """Read the sparse "label idx:val ..." format; d inferred if not given."""
    entries = []
    labels = []
    max_idx = -1
    for lineno, line in _data_lines(path):
        parts = line.split()
        try:
            labels.append(float(parts[0]))
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: bad label: {exc}") from exc
        row = {}
        for token in parts[1:]:
            idx_str, _, val_str = token.partition(":")
            try:
                idx = int(idx_str)
                val = float(val_str)
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}: line {lineno}: bad entry {token!r}"
                ) from exc
            if idx < 0:
                raise DataFormatError(
                    f"{path}: line {lineno}: negative feature index {idx}"
                )
            row[idx] = val
            max_idx = max(max_idx, idx)
        entries.append(row)
    if not entries:
        raise DataFormatError(f"{path}: no data rows")
    d = num_features if num_features is not None else max_idx + 1
    if d < max_idx + 1:
        raise DataFormatError(
            f"{path}: feature index {max_idx} exceeds declared dimension {d}"
        )
    X = np.zeros((len(entries), d))
    for i, row in enumerate(entries):
        for idx, val in row.items():
            X[i, idx] = val
    return Dataset(X=X, y=np.array(labels))


def save_truth_json(truth, path):
    doc = {
        "w_true": [float(v) for v in truth.w_true],
        "support": [int(i) for i in truth.support],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_truth_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return GroundTruth(
        w_true=np.array(doc["w_true"], dtype=np.float64),
        support=np.array(doc["support"], dtype=np.int64),
    )
