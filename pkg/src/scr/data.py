"""Tabular datasets: CSV I/O, 70/10/20 splits, z-scoring, synthetic tasks."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, SplitError

LABEL_COLUMN = "label"


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (N, D)
    labels: np.ndarray  # (N,)
    feature_names: tuple[str, ...]
    modality_tag: str = ""
    standardized: bool = False

    def __post_init__(self):
        x = _frozen(self.features)
        y = _frozen(self.labels)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-d matrix, got {x.shape}")
        if y.shape != (x.shape[0],):
            raise DataError(f"{y.size} labels for {x.shape[0]} rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite values")
        names = tuple(self.feature_names) if self.feature_names else tuple(
            f"f{i}" for i in range(x.shape[1])
        )
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} feature names for {x.shape[1]} columns")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return replace(self, features=self.features[rows], labels=self.labels[rows])

    def with_features(self, features) -> "Dataset":
        return replace(self, features=features)

    def equals(self, other: "Dataset") -> bool:
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and self.feature_names == other.feature_names
        )


def _parse_number(cell: str, row: int, col: int) -> float:
    cell = cell.strip()
    if cell == "":
        return 0.0  # empty fiber cluster
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col}: not a number: {cell!r}") from None
    if not np.isfinite(value):
        raise DataError(f"row {row}, column {col}: non-finite value {cell!r}")
    return value


def load_csv(path, modality_tag: str | None = None) -> Dataset:
    """Read a CSV with a ``label`` column; every other column is a feature.

    Row numbers in error messages are 1-based file lines (header is line 1).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not any(c.strip() for c in rows[0]):
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    try:
        _parse_number(header[0], 1, 1)
        numeric_header = all(h != "" for h in header)
    except DataError:
        numeric_header = False
    if numeric_header:
        raise DataError(f"{path}: line 1 looks like data, a header row is required")
    if LABEL_COLUMN not in header:
        raise DataError(f"{path}: no '{LABEL_COLUMN}' column in header")
    label_col = header.index(LABEL_COLUMN)
    feat_cols = [j for j in range(len(header)) if j != label_col]
    if not feat_cols:
        raise DataError(f"{path}: no feature columns")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    if not body:
        raise DataError(f"{path}: no data rows")
    x = np.empty((len(body), len(feat_cols)))
    y = np.empty(len(body))
    for i, r in enumerate(body):
        line = i + 2
        if len(r) != len(header):
            raise DataError(f"row {line}: {len(r)} cells, header has {len(header)}")
        label_cell = r[label_col].strip()
        if label_cell == "":
            raise DataError(f"row {line}, column {label_col + 1}: empty label")
        y[i] = _parse_number(label_cell, line, label_col + 1)
        for k, j in enumerate(feat_cols):
            x[i, k] = _parse_number(r[j], line, j + 1)
    tag = modality_tag if modality_tag is not None else path.stem
    return Dataset(x, y, tuple(header[j] for j in feat_cols), tag)


def write_csv(dataset: Dataset, path) -> None:
    """Write ``label`` first, then features. ``repr`` floats round-trip exactly."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([LABEL_COLUMN, *dataset.feature_names])
    for y, row in zip(dataset.labels, dataset.features):
        w.writerow([repr(float(y)), *(repr(float(v)) for v in row)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# --- splitting ---------------------------------------------------------------


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int


def split_sizes(n: int) -> tuple[int, int, int]:
    # integer arithmetic: floor(0.7 * n) in floats misrounds e.g. n=10
    n_train = (7 * n) // 10
    n_val = n // 10
    return n_train, n_val, n - n_train - n_val


def split(n: int, seed: int) -> SplitIndices:
    """Seeded 70/10/20 shuffle split; flooring remainder goes to test."""
    if n < 10:
        raise SplitError(f"cannot split {n} rows 70/10/20 (need at least 10)")
    n_train, n_val, _ = split_sizes(n)
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(
        train=perm[:n_train],
        val=perm[n_train : n_train + n_val],
        test=perm[n_train + n_val :],
        seed=seed,
    )


# --- standardization ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # population std; 0 marks a constant column

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0.0

    def apply(self, dataset: Dataset) -> Dataset:
        return apply(self, dataset)


def fit_standardizer(dataset: Dataset, train_indices) -> Standardizer:
    train_indices = np.asarray(train_indices, dtype=np.int64)
    if train_indices.size == 0:
        raise ContractError("cannot fit a standardizer on zero rows")
    x = dataset.features[train_indices]
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # treat round-off-level spread as constant
    std = np.where(std <= 1e-12 * np.maximum(1.0, np.abs(mean)), 0.0, std)
    return Standardizer(_frozen(mean), _frozen(std))


def apply(standardizer: Standardizer, dataset: Dataset) -> Dataset:
    if dataset.standardized:
        raise ContractError("dataset is already standardized")
    if standardizer.mean.shape != (dataset.d,):
        raise ContractError(
            f"standardizer fitted on {standardizer.mean.size} features, dataset has {dataset.d}"
        )
    safe = np.where(standardizer.constant, 1.0, standardizer.std)
    z = (dataset.features - standardizer.mean) / safe
    z[:, standardizer.constant] = 0.0
    return replace(dataset, features=z, standardized=True)


# --- synthetic tasks ---------------------------------------------------------

LABEL_RANGE = (-3.0, 3.0)


@dataclass(frozen=True)
class SynthSpec:
    n_samples: int = 2000
    n_features: int = 100
    informative_indices: tuple[int, ...] = tuple(range(10))
    noise_std: float = 0.5
    nonlinear: bool = True
    seed: int = 0

    def __post_init__(self):
        idx = tuple(int(i) for i in self.informative_indices)
        if not idx:
            raise ContractError("at least one informative feature is required")
        if len(set(idx)) != len(idx) or min(idx) < 0 or max(idx) >= self.n_features:
            raise ContractError(f"informative indices {idx} invalid for {self.n_features} features")
        if self.noise_std < 0:
            raise ContractError("noise_std must be non-negative")
        object.__setattr__(self, "informative_indices", idx)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Everything needed to recompute the noiseless part of the labels."""

    n_features: int
    informative: tuple[int, ...]
    weights: np.ndarray  # linear weight per informative feature
    tanh_weights: np.ndarray  # zeros when linear
    scale: float
    offset: float

    def signal(self, features: np.ndarray) -> np.ndarray:
        xi = np.asarray(features, dtype=np.float64)[:, list(self.informative)]
        return xi @ self.weights + np.tanh(xi) @ self.tanh_weights

    def regenerate_labels(self, features: np.ndarray) -> np.ndarray:
        """Noise-free labels on the rescaled label axis."""
        return self.signal(features) * self.scale + self.offset

    def informative_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_features, dtype=bool)
        mask[list(self.informative)] = True
        return mask

    def full_weights(self) -> np.ndarray:
        w = np.zeros(self.n_features)
        w[list(self.informative)] = self.weights
        return w

    def write_sidecar(self, path) -> None:
        w = self.full_weights()
        mask = self.informative_mask()
        lines = ["feature_index,weight,informative"]
        lines += [f"{j},{float(w[j])!r},{int(mask[j])}" for j in range(self.n_features)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_sidecar(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(weights, informative_mask)`` from a ground-truth sidecar CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    order = np.argsort([int(r["feature_index"]) for r in rows])
    w = np.array([float(rows[i]["weight"]) for i in order])
    mask = np.array([rows[i]["informative"].strip() == "1" for i in order])
    return w, mask


def _random_weights(rng: np.random.Generator, k: int) -> np.ndarray:
    # magnitudes bounded away from zero so every informative feature matters
    return rng.uniform(0.5, 1.5, size=k) * rng.choice([-1.0, 1.0], size=k)


def generate_synthetic(spec: SynthSpec) -> tuple[Dataset, GroundTruth]:
    """Standard-normal features; label from the informative columns plus noise.

    The raw label is min-max mapped onto [-3, 3].
    """
    rng = np.random.default_rng(spec.seed)
    k = len(spec.informative_indices)
    weights = _random_weights(rng, k)
    tanh_weights = _random_weights(rng, k) if spec.nonlinear else np.zeros(k)
    x = rng.standard_normal((spec.n_samples, spec.n_features))
    truth = GroundTruth(
        spec.n_features, spec.informative_indices, weights, tanh_weights, 1.0, 0.0
    )
    raw = truth.signal(x)
    noise = rng.standard_normal(spec.n_samples) * spec.noise_std
    noisy = raw + noise
    lo, hi = float(noisy.min()), float(noisy.max())
    span = hi - lo
    a, b = LABEL_RANGE
    scale = (b - a) / span if span > 0 else 1.0
    offset = a - lo * scale if span > 0 else 0.0
    truth = replace(truth, scale=scale, offset=offset)
    if spec.noise_std == 0:
        y = truth.regenerate_labels(x)
    else:
        y = truth.regenerate_labels(x) + noise * scale
    names = tuple(f"f{j}" for j in range(spec.n_features))
    return Dataset(x, y, names, "synthetic"), truth
