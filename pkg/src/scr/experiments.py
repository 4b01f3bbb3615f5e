"""Desk-scale synthetic experiments shared by scripts/ and the acceptance tests."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .data import SynthSpec, generate_synthetic, split
from .metrics import EvalResult
from .pipeline import Ablation, TrainPlan, evaluate_rows, train_scr

BENCHMARK_SPEC = SynthSpec(
    n_samples=2000, n_features=100, informative_indices=tuple(range(10)),
    noise_std=0.5, nonlinear=True, seed=0,
)
BENCHMARK_SEEDS = (0, 1, 2, 3, 4)


def benchmark_task(seed: int, spec: SynthSpec = BENCHMARK_SPEC):
    """Dataset, ground truth and split for one replicate."""
    dataset, truth = generate_synthetic(replace(spec, seed=seed))
    return dataset, truth, split(dataset.n, seed)


def run_mode(seed: int, plan: TrainPlan | None = None, ablation: Ablation | str = Ablation.FULL,
             spec: SynthSpec = BENCHMARK_SPEC) -> EvalResult:
    plan = TrainPlan() if plan is None else plan
    plan = replace(plan, ablation=Ablation(ablation), seed=seed)
    dataset, _, sp = benchmark_task(seed, spec)
    bundle, _ = train_scr(dataset, sp, plan)
    return evaluate_rows(bundle, dataset, sp.test)


def compare_modes(modes, seeds=BENCHMARK_SEEDS, plan: TrainPlan | None = None) -> dict[str, list[float]]:
    """Test Pearson r per mode and seed."""
    return {
        Ablation(m).value: [run_mode(s, plan, m).pearson_r for s in seeds] for m in modes
    }


SWEEPS = {
    "pretrain.threshold": (0.1, 0.2, 0.35, 0.5),
    "pretrain.corruption_rate": (0.3, 0.5, 0.7),
    "pretrain.temperature": (0.5, 1.0, 5.0, 10.0),
    "pretrain.batch_size": (64, 128, 256),
}


def plan_with(plan: TrainPlan, key: str, value) -> TrainPlan:
    section, name = key.split(".")
    return replace(plan, **{section: replace(getattr(plan, section), **{name: value})})


def sweep(key: str, values, seed: int = 0, plan: TrainPlan | None = None) -> list[float]:
    plan = TrainPlan() if plan is None else plan
    return [run_mode(seed, plan_with(plan, key, v)).pearson_r for v in values]


def summarize(values) -> str:
    v = np.asarray(values)
    return f"mean={v.mean():.4f} sd={v.std(ddof=1) if v.size > 1 else 0.0:.4f} min={v.min():.4f}"


def importance_recovery(master_seed: int, n_permutations: int = 2000, workers: int = 1,
                        task_seed: int = 0, group_size: int = 10, plan: TrainPlan | None = None):
    """Run grouped importance on the benchmark task.

    Returns the report and how many ground-truth informative features land in
    the top 20.
    """
    from .interpret import ImportanceConfig, run_importance

    plan = replace(TrainPlan() if plan is None else plan, seed=task_seed)
    dataset, truth, sp = benchmark_task(task_seed)
    config = ImportanceConfig(group_size=group_size, n_permutations=n_permutations,
                              master_seed=master_seed, workers=workers)
    report = run_importance(dataset, sp, plan, config)
    hits = len(set(report.top(20).tolist()) & set(truth.informative))
    return report, hits
