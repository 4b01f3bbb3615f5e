"""Finite-difference checks of the two training objectives.

Both compositions use the pipeline's layer topology (4-layer encoder,
2-layer projector or regressor) at a reduced width so that every parameter
can be perturbed in a few seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import ColumnPool, CorruptionConfig, corrupt_batch
from .contrastive import determine_pairs, supcon_from_raw
from .nncore import backward, concat_mlps, forward, grad_check
from .pipeline import TrainPlan, init_encoder, init_projector, init_regressor

TOLERANCE = 1e-5
N_SAMPLES = 8
N_FEATURES = 12
WIDTH = 16


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    n_params: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def _setup(seed: int, width: int):
    rng = np.random.default_rng(seed)
    plan = TrainPlan(hidden_dim=width, embedding_dim=width, seed=seed)
    x = rng.standard_normal((N_SAMPLES, N_FEATURES))
    y = rng.uniform(-1.0, 1.0, N_SAMPLES)
    return rng, plan, x, y


def check_mse_path(seed: int = 0, width: int = WIDTH, perturb: float = 0.0) -> CheckResult:
    """Encoder -> regressor -> mean squared error."""
    rng, plan, x, y = _setup(seed, width)
    net = concat_mlps(init_encoder(N_FEATURES, plan, rng), init_regressor(plan, rng))

    def loss_fn():
        out, cache = forward(net, x)
        resid = out[:, 0] - y
        grads, _ = backward(net, cache, (2.0 / y.size) * resid[:, None])
        if perturb:
            grads[0] = grads[0] + perturb
        return float(resid @ resid) / y.size, grads

    params = net.parameters()
    return CheckResult("mse", grad_check(loss_fn, params), sum(p.size for p in params))


def check_scr_path(
    seed: int = 0, width: int = WIDTH, perturb: float = 0.0, threshold: float = 0.35,
    temperature: float = 1.0,
) -> CheckResult:
    """Corruption -> encoder -> projector -> L2 normalization -> contrastive loss.

    The corrupted view is drawn once; gradients are with respect to the
    network parameters.
    """
    rng, plan, x, y = _setup(seed, width)
    pool = ColumnPool(rng.standard_normal((64, N_FEATURES)))
    x_tilde = corrupt_batch(x, pool, CorruptionConfig(0.5), rng)
    inputs = np.vstack([x, x_tilde])
    mask = determine_pairs(np.concatenate([y, y]), threshold)
    net = concat_mlps(init_encoder(N_FEATURES, plan, rng), init_projector(plan, rng))

    def loss_fn():
        out, cache = forward(net, inputs)
        res = supcon_from_raw(out, mask, temperature)
        grads, _ = backward(net, cache, res.grad)
        if perturb:
            grads[0] = grads[0] + perturb
        return res.loss, grads

    params = net.parameters()
    return CheckResult("scr", grad_check(loss_fn, params), sum(p.size for p in params))


def run_all(seed: int = 0, perturb: float = 0.0) -> list[CheckResult]:
    return [check_mse_path(seed, perturb=perturb), check_scr_path(seed, perturb=perturb)]
