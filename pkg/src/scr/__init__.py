"""Supervised contrastive regression for tabular data."""

from .data import Dataset, SplitIndices, SynthSpec, generate_synthetic, load_csv, split
from .metrics import mse, pearson_r
from .pipeline import (
    Ablation,
    FinetuneConfig,
    ModelBundle,
    PretrainConfig,
    TrainPlan,
    ensemble_predict,
    load_bundle,
    predict,
    save_bundle,
    train_scr,
)

__all__ = [
    "Ablation", "Dataset", "FinetuneConfig", "ModelBundle", "PretrainConfig", "SplitIndices",
    "SynthSpec", "TrainPlan", "ensemble_predict", "generate_synthetic", "load_bundle", "load_csv",
    "mse", "pearson_r", "predict", "save_bundle", "split", "train_scr",
]
__version__ = "0.1.0"
