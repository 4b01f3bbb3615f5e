"""Random feature corruption.

Each row gets exactly ``floor(c * D)`` positions replaced by values drawn
uniformly from the same column of the training split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ContractError


@dataclass(frozen=True)
class CorruptionConfig:
    rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ContractError(f"corruption rate must be in [0, 1], got {self.rate}")

    def n_replaced(self, n_features: int) -> int:
        # small epsilon keeps e.g. 0.7 * 10 from flooring to 6
        return int(math.floor(self.rate * n_features + 1e-9))


@dataclass(frozen=True, eq=False)
class ColumnPool:
    values: np.ndarray  # (N_train, D)

    @classmethod
    def from_dataset(cls, dataset: Dataset, train_indices=None) -> "ColumnPool":
        x = dataset.features if train_indices is None else dataset.features[train_indices]
        if x.shape[0] == 0:
            raise ContractError("empty column pool")
        return cls(np.asarray(x))

    @property
    def d(self) -> int:
        return self.values.shape[1]


def corruption_mask(n_rows: int, n_features: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean (n_rows, n_features) mask with exactly ``k`` True entries per row."""
    if k == 0:
        return np.zeros((n_rows, n_features), dtype=bool)
    keys = rng.random((n_rows, n_features))
    cols = np.argpartition(keys, k - 1, axis=1)[:, :k] if k < n_features else None
    mask = np.zeros((n_rows, n_features), dtype=bool)
    if cols is None:
        mask[:] = True
    else:
        np.put_along_axis(mask, cols, True, axis=1)
    return mask


def corrupt_batch(
    x: np.ndarray,
    pool: ColumnPool,
    config: CorruptionConfig,
    rng: np.random.Generator,
    labels: np.ndarray | None = None,
    return_mask: bool = False,
):
    """Return a corrupted copy of ``x``.

    If ``labels`` is given the result is ``(x_tilde, labels_copy)``; with
    ``return_mask`` the replacement mask is appended to the result.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != pool.d:
        raise ContractError(f"batch of shape {x.shape} does not match pool with {pool.d} columns")
    b, d = x.shape
    k = config.n_replaced(d)
    out = x.copy()
    mask = corruption_mask(b, d, k, rng)
    if k:
        rows, cols = np.nonzero(mask)
        donors = rng.integers(0, pool.values.shape[0], size=rows.size)
        out[rows, cols] = pool.values[donors, cols]
    result = [out]
    if labels is not None:
        result.append(np.array(labels, dtype=np.float64, copy=True))
    if return_mask:
        result.append(mask)
    return result[0] if len(result) == 1 else tuple(result)
