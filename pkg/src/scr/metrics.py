from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, UndefinedCorrelationError


@dataclass(frozen=True)
class EvalResult:
    pearson_r: float
    mse: float
    n: int

    def line(self) -> str:
        return f"pearson_r={self.pearson_r:.17g}, mse={self.mse:.17g}, n={self.n}"


def _pair(pred, truth, min_len):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ContractError(f"length mismatch: {pred.size} vs {truth.size}")
    if pred.size < min_len:
        raise ContractError(f"need at least {min_len} values, got {pred.size}")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(truth))):
        raise ContractError("non-finite value in metric input")
    return pred, truth


def pearson_r(pred, truth) -> float:
    """Sample Pearson correlation. Raises on zero variance rather than returning 0."""
    x, y = _pair(pred, truth, 2)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero variance: correlation is undefined")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def mse(pred, truth) -> float:
    x, y = _pair(pred, truth, 1)
    d = x - y
    return float(d @ d) / d.size


def evaluate(pred, truth) -> EvalResult:
    return EvalResult(pearson_r(pred, truth), mse(pred, truth), int(np.size(pred)))
