"""Grouped permutation feature importance.

Each permutation shuffles a random group of ``g`` feature columns in the
training rows, retrains, and charges the drop in test Pearson r to every
member of the group. A feature's score is its mean drop over the
permutations that included it.
"""

from __future__ import annotations

import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SplitIndices
from .errors import ContractError, NumericError
from .metrics import pearson_r
from .pipeline import ModelBundle, TrainPlan, predict, train_scr

# settings for the 953-feature cohort study; pass them explicitly to reproduce it
FULL_SCALE_GROUP_SIZE = 95
FULL_SCALE_N_PERMUTATIONS = 50_000


@dataclass
class ImportanceConfig:
    group_size: int | None = None  # None -> max(1, round(0.1 * D))
    n_permutations: int = 2000
    retrain: bool = True
    master_seed: int = 0
    workers: int = 1

    def resolve_group_size(self, d: int) -> int:
        g = max(1, int(round(0.1 * d))) if self.group_size is None else int(self.group_size)
        if not 1 <= g <= d:
            raise ContractError(f"group size {g} outside 1..{d}")
        return g


@dataclass
class ImportanceReport:
    feature_names: tuple[str, ...]
    delta_sum: np.ndarray
    counts: np.ndarray
    baseline_r: float
    group_size: int
    completed: int
    failed: int
    retrain: bool = True
    delta_sq_sum: np.ndarray | None = None

    @property
    def standard_error(self) -> np.ndarray:
        """Standard error of each mean drop; NaN below two inclusions."""
        if self.delta_sq_sum is None:
            return np.full(self.counts.shape, np.nan)
        n = self.counts.astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = self.delta_sum / n
            var = (self.delta_sq_sum - n * mean**2) / (n - 1)
            return np.where(n > 1, np.sqrt(np.maximum(var, 0.0) / n), np.nan)

    @property
    def mean_delta_r(self) -> np.ndarray:
        """Mean drop in r per feature; NaN where a feature was never sampled."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.delta_sum / np.maximum(self.counts, 1), np.nan)

    def ranking(self) -> np.ndarray:
        """Feature indices by descending mean drop; unsampled features last."""
        mean = self.mean_delta_r
        key = np.where(np.isnan(mean), -np.inf, mean)
        return np.lexsort((np.arange(key.size), -key))

    def top(self, k: int) -> np.ndarray:
        return self.ranking()[:k]

    def to_csv(self) -> str:
        mean = self.mean_delta_r
        buf = io.StringIO()
        buf.write(
            f"# baseline_r={self.baseline_r!r} failed_permutations={self.failed} "
            f"completed_permutations={self.completed} group_size={self.group_size} "
            f"retrain={str(self.retrain).lower()}\n"
        )
        buf.write("feature_index,feature_name,mean_delta_r,inclusion_count\n")
        for j in self.ranking():
            value = "" if np.isnan(mean[j]) else repr(float(mean[j]))
            buf.write(f"{j},{self.feature_names[j]},{value},{int(self.counts[j])}\n")
        return buf.getvalue()


def permute_group(dataset: Dataset, feature_indices, rng: np.random.Generator, rows=None) -> Dataset:
    """Shuffle each selected column independently, within ``rows`` if given."""
    idx = np.asarray(sorted(feature_indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= dataset.d):
        raise ContractError(f"feature index out of range 0..{dataset.d - 1}")
    if np.unique(idx).size != idx.size:
        raise ContractError("duplicate feature indices")
    x = np.array(dataset.features)
    rows = np.arange(dataset.n) if rows is None else np.asarray(rows, dtype=np.int64)
    for j in idx:
        x[rows, j] = x[rows[rng.permutation(rows.size)], j]
    return dataset.with_features(x)


def _draw_group(master_seed: int, i: int, d: int, g: int):
    rng = np.random.default_rng([int(master_seed), int(i)])
    return np.sort(rng.choice(d, size=g, replace=False)), rng


def _test_r(bundle: ModelBundle, dataset: Dataset, rows) -> float:
    test = dataset.subset(rows)
    return pearson_r(predict(bundle, test), test.labels)


# module-level state for worker processes (set by _init_worker)
_JOB: dict = {}


def _init_worker(job):
    _JOB.clear()
    _JOB.update(job)


def _run_one(i: int):
    """Returns ``(i, group, permuted_r)``; ``permuted_r`` is None on failure."""
    ds, split, plan = _JOB["dataset"], _JOB["split"], _JOB["plan"]
    group, rng = _draw_group(_JOB["master_seed"], i, ds.d, _JOB["group_size"])
    try:
        if _JOB["retrain"]:
            permuted = permute_group(ds, group, rng, rows=split.train)
            bundle, _ = train_scr(permuted, split, plan)
            r = _test_r(bundle, ds, split.test)
        else:
            permuted = permute_group(ds, group, rng, rows=split.test)
            r = _test_r(_JOB["baseline"], permuted, split.test)
    except NumericError:
        return i, group, None
    return i, group, r


def run_importance(
    dataset: Dataset,
    split: SplitIndices,
    plan: TrainPlan,
    config: ImportanceConfig,
    baseline: ModelBundle | None = None,
    progress=None,
) -> ImportanceReport:
    """Permutation importance; the result does not depend on ``config.workers``.

    With ``retrain=False`` the baseline model is kept and test-row features
    are shuffled instead (fast approximation, not the retraining procedure).
    """
    if config.n_permutations < 1:
        raise ContractError("n_permutations must be at least 1")
    g = config.resolve_group_size(dataset.d)
    if baseline is None:
        baseline, _ = train_scr(dataset, split, plan)
    baseline_r = _test_r(baseline, dataset, split.test)
    job = dict(
        dataset=dataset, split=split, plan=plan, master_seed=config.master_seed,
        group_size=g, retrain=config.retrain, baseline=baseline,
    )
    results: list = [None] * config.n_permutations
    ids = range(config.n_permutations)
    if config.workers <= 1:
        _init_worker(job)
        for i in ids:
            results[i] = _run_one(i)
            if progress:
                progress(i)
    else:
        chunk = max(1, config.n_permutations // (config.workers * 8))
        with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(job,)) as ex:
            for i, group, r in ex.map(_run_one, ids, chunksize=chunk):
                results[i] = (i, group, r)
                if progress:
                    progress(i)

    # aggregate in permutation order so float sums are schedule independent
    delta_sum = np.zeros(dataset.d)
    delta_sq_sum = np.zeros(dataset.d)
    counts = np.zeros(dataset.d, dtype=np.int64)
    failed = 0
    for _, group, r in results:
        if r is None:
            failed += 1
            continue
        delta = baseline_r - r
        delta_sum[group] += delta
        delta_sq_sum[group] += delta * delta
        counts[group] += 1
    return ImportanceReport(
        dataset.feature_names, delta_sum, counts, baseline_r, g,
        config.n_permutations - failed, failed, config.retrain, delta_sq_sum,
    )


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
