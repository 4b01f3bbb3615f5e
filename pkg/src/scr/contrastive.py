"""Label-distance pair determination and the supervised contrastive loss.

For anchor ``r`` with positive set ``P(r)`` and contrast set ``A(r)`` (every
other sample in the batch)::

    L_r = -1/|P(r)| * sum_{p in P(r)} log( exp(z_r.z_p/tau) / sum_{a in A(r)} exp(z_r.z_a/tau) )

Anchors without positives are skipped. The batch loss is the mean of ``L_r``
over contributing anchors (``reduction="mean"``) or their plain sum
(``reduction="sum"``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, DegenerateBatchError, NumericError

REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 1.0
    threshold: float = 0.35
    reduction: str = "mean"

    def __post_init__(self):
        for name in ("temperature", "threshold"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ContractError(f"{name} must be finite and positive, got {v}")
        if self.reduction not in REDUCTIONS:
            raise ContractError(f"reduction must be one of {REDUCTIONS}")


def determine_pairs(labels, threshold: float) -> np.ndarray:
    """Positive-pair mask: ``i != j`` and ``|y_i - y_j| < threshold``."""
    y = np.asarray(labels, dtype=np.float64).ravel()
    if not np.all(np.isfinite(y)):
        raise ContractError("non-finite label in pair determination")
    mask = np.abs(y[:, None] - y[None, :]) < threshold
    np.fill_diagonal(mask, False)
    return mask


def copy_pairs(batch_size: int) -> np.ndarray:
    """Mask over ``[X; X~]`` where each sample is positive only with its own copy."""
    m = 2 * batch_size
    mask = np.zeros((m, m), dtype=bool)
    i = np.arange(batch_size)
    mask[i, i + batch_size] = True
    mask[i + batch_size, i] = True
    return mask


def l2_normalize(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize; returns ``(z, norms)``. Norms below 1e-12 are an error."""
    raw = np.asarray(raw, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", raw, raw))
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise NumericError(f"cannot normalize row {bad[0]}: norm {norms[bad[0]]:.3g}")
    return raw / norms[:, None], norms


def l2_normalize_backward(z: np.ndarray, norms: np.ndarray, grad_z: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the raw rows given the gradient w.r.t. normalized rows."""
    radial = np.einsum("ij,ij->i", grad_z, z)
    return (grad_z - z * radial[:, None]) / norms[:, None]


class SupConResult(NamedTuple):
    loss: float
    grad: np.ndarray  # d loss / d z
    n_anchors: int


def supcon_loss(
    z: np.ndarray, mask: np.ndarray, temperature: float, reduction: str = "mean"
) -> SupConResult:
    z = np.asarray(z, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    m = z.shape[0]
    if m < 2:
        raise ContractError("contrastive loss needs at least two samples")
    if mask.shape != (m, m):
        raise ContractError(f"mask {mask.shape} does not match {m} embeddings")
    if not temperature > 0:
        raise ContractError("temperature must be positive")
    if reduction not in REDUCTIONS:
        raise ContractError(f"reduction must be one of {REDUCTIONS}")
    mask = mask & ~np.eye(m, dtype=bool)
    n_pos = mask.sum(axis=1)
    anchors = n_pos > 0
    n_anchors = int(anchors.sum())
    if n_anchors == 0:
        raise DegenerateBatchError("no anchor in the batch has a positive pair")

    weight = 1.0 / n_anchors if reduction == "mean" else 1.0
    pos = mask.astype(np.float64)
    inv_pos = np.zeros(m)
    inv_pos[anchors] = 1.0 / n_pos[anchors]

    shifted = z @ z.T
    shifted /= temperature
    np.fill_diagonal(shifted, -np.inf)
    shifted -= shifted.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1)
    np.fill_diagonal(shifted, 0.0)
    # L_r = log(denom_r) - mean_{p in P(r)} shifted_rp
    pos_sum = np.einsum("ij,ij->i", pos, shifted)
    per_anchor = np.log(denom[anchors]) - pos_sum[anchors] * inv_pos[anchors]
    loss = float(per_anchor.sum() * weight)

    # d L / d logits = softmax - positive weights, for contributing anchors only
    exp *= (anchors * weight / denom)[:, None]
    pos *= (inv_pos * weight)[:, None]
    exp -= pos
    grad = (exp + exp.T) @ z
    grad /= temperature
    return SupConResult(loss, grad, n_anchors)


def supcon_from_raw(
    raw: np.ndarray, mask: np.ndarray, temperature: float, reduction: str = "mean"
) -> SupConResult:
    """Normalize projector outputs, then apply :func:`supcon_loss`; the gradient
    is with respect to ``raw``."""
    z, norms = l2_normalize(raw)
    res = supcon_loss(z, mask, temperature, reduction)
    return SupConResult(res.loss, l2_normalize_backward(z, norms, res.grad), res.n_anchors)
