"""Two-phase SCR training: contrastive pretraining of encoder + projector,
then MSE fine-tuning of a regressor on the frozen encoder.

All randomness is drawn from named streams derived from ``TrainPlan.seed``.
"""

from __future__ import annotations

import csv
import io
import time
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import augment
from .augment import ColumnPool, CorruptionConfig
from .contrastive import copy_pairs, determine_pairs, supcon_from_raw
from .data import Dataset, SplitIndices, Standardizer, fit_standardizer
from .errors import CheckpointError, ContractError, DegenerateBatchError
from .metrics import EvalResult, evaluate
from .nncore import (
    IDENTITY,
    RELU,
    AdamState,
    LineReader,
    Mlp,
    backward,
    concat_mlps,
    fmt_values,
    forward,
    init_mlp,
    mlp_adam_step,
    read_mlp,
    write_mlp,
)

# original large-cohort setting; the desk default below is 256
FULL_SCALE_PRETRAIN_BATCH_SIZE = 2048


class Ablation(str, Enum):
    FULL = "scr"
    NO_CORRUPTION = "no-corruption"
    SELF_SUPERVISED_PAIRS = "self-supervised-pairs"
    BASELINE_MLP = "baseline-mlp"


@dataclass
class PretrainConfig:
    batch_size: int = 256
    corruption_rate: float = 0.5
    temperature: float = 1.0
    threshold: float = 0.35
    lr: float = 1e-3
    patience: int = 3
    max_epochs: int = 200
    reduction: str = "mean"


@dataclass
class FinetuneConfig:
    batch_size: int = 128
    lr: float = 1e-3
    patience: int = 3
    max_epochs: int = 200


@dataclass
class TrainPlan:
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    ablation: Ablation = Ablation.FULL
    seed: int = 0
    hidden_dim: int = 256
    embedding_dim: int = 256
    encoder_layers: int = 4

    def __post_init__(self):
        self.ablation = Ablation(self.ablation)
        p, f = self.pretrain, self.finetune
        for name, v in [
            ("pretrain.batch_size", p.batch_size),
            ("pretrain.lr", p.lr),
            ("pretrain.max_epochs", p.max_epochs),
            ("finetune.batch_size", f.batch_size),
            ("finetune.lr", f.lr),
            ("finetune.max_epochs", f.max_epochs),
            ("hidden_dim", self.hidden_dim),
            ("embedding_dim", self.embedding_dim),
            ("encoder_layers", self.encoder_layers),
        ]:
            if not v > 0:
                raise ContractError(f"{name} must be positive, got {v}")
        if p.patience < 1 or f.patience < 1:
            raise ContractError("patience must be at least 1")
        CorruptionConfig(p.corruption_rate)


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose ("init", "batching", ...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


# --- reporting -----------------------------------------------------------------


@dataclass
class PhaseHistory:
    phase: str
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_epoch: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.val_losses[self.best_epoch - 1]


@dataclass
class TrainReport:
    phases: list[PhaseHistory] = field(default_factory=list)
    seconds: float = 0.0

    def phase(self, name: str) -> PhaseHistory | None:
        for p in self.phases:
            if p.phase == name:
                return p
        return None

    @property
    def final_val_loss(self) -> float:
        return self.phases[-1].best_val_loss

    def rows(self):
        for p in self.phases:
            for e, (tr, va) in enumerate(zip(p.train_losses, p.val_losses), start=1):
                yield e, p.phase, tr, va

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "phase", "train_loss", "val_loss"])
        for e, phase, tr, va in self.rows():
            w.writerow([e, phase, repr(tr), repr(va)])
        return buf.getvalue()


class EarlyStopping:
    """Stop once the monitored loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, loss: float) -> bool:
        """Record one epoch; returns True when it is a new best."""
        self.epoch += 1
        if loss < self.best:
            self.best = loss
            self.best_epoch = self.epoch
            return True
        return False

    @property
    def should_stop(self) -> bool:
        return self.epoch - self.best_epoch >= self.patience


def _snapshot(net: Mlp) -> list[np.ndarray]:
    return [p.copy() for p in net.parameters()]


# --- phase 1: contrastive pretraining ------------------------------------------


def _contrastive_views(x, y, ablation, pool, ccfg, rng, threshold, corrupt_fn):
    if ablation is Ablation.NO_CORRUPTION:
        return x, determine_pairs(y, threshold)
    x_tilde = corrupt_fn(x, pool, ccfg, rng)
    inputs = np.vstack([x, x_tilde])
    if ablation is Ablation.SELF_SUPERVISED_PAIRS:
        return inputs, copy_pairs(x.shape[0])
    return inputs, determine_pairs(np.concatenate([y, y]), threshold)


def init_encoder(d: int, plan: TrainPlan, rng: np.random.Generator) -> Mlp:
    dims = [d] + [plan.hidden_dim] * plan.encoder_layers
    return init_mlp(dims, rng, final_activation=RELU)


def init_projector(plan: TrainPlan, rng: np.random.Generator) -> Mlp:
    return init_mlp([plan.hidden_dim, plan.hidden_dim, plan.embedding_dim], rng, IDENTITY)


def init_regressor(plan: TrainPlan, rng: np.random.Generator, in_dim: int | None = None) -> Mlp:
    in_dim = plan.hidden_dim if in_dim is None else in_dim
    return init_mlp([in_dim, plan.hidden_dim, 1], rng, IDENTITY)


def pretrain(
    train: Dataset,
    val: Dataset,
    plan: TrainPlan,
    corrupt_fn: Callable = augment.corrupt_batch,
    encoder: Mlp | None = None,
    projector: Mlp | None = None,
) -> tuple[Mlp, Mlp, TrainReport]:
    """Train encoder and projector with the supervised contrastive loss.

    Early stopping monitors the contrastive loss on fixed validation batches
    (the validation views are corrupted once, with a dedicated stream). The
    final incomplete training batch of each epoch is dropped.
    """
    cfg = plan.pretrain
    ablation = plan.ablation
    if ablation is Ablation.BASELINE_MLP:
        raise ContractError("baseline-mlp mode has no pretraining phase")
    if val.n < 2:
        raise ContractError("pretraining needs at least two validation rows")
    init_rng = rng_stream(plan.seed, "init")
    if encoder is None:
        encoder = init_encoder(train.d, plan, init_rng)
    if projector is None:
        projector = init_projector(plan, init_rng)
    net = concat_mlps(encoder, projector)
    opt = AdamState.for_params(net.parameters(), learning_rate=cfg.lr)

    pool = ColumnPool.from_dataset(train)
    ccfg = CorruptionConfig(cfg.corruption_rate, plan.seed)
    batch_rng = rng_stream(plan.seed, "batching")
    corrupt_rng = rng_stream(plan.seed, "corruption")
    b = min(cfg.batch_size, train.n)
    if b < 2:
        raise ContractError("pretraining batch needs at least two rows")

    def loss_and_grads(inputs, mask):
        out, cache = forward(net, inputs)
        res = supcon_from_raw(out, mask, cfg.temperature, cfg.reduction)
        grads, _ = backward(net, cache, res.grad)
        return res.loss, grads

    # fixed validation batches
    val_order = rng_stream(plan.seed, "val-batches").permutation(val.n)
    val_rng = rng_stream(plan.seed, "val-corruption")
    val_batches = []
    for s in range(0, val.n, b):
        idx = val_order[s : s + b]
        if idx.size < 2:
            continue
        xv, yv = val.features[idx], val.labels[idx]
        val_batches.append(
            _contrastive_views(xv, yv, ablation, pool, ccfg, val_rng, cfg.threshold, corrupt_fn)
        )

    def val_loss():
        losses = []
        for inputs, mask in val_batches:
            try:
                out = net(inputs)
                losses.append(supcon_from_raw(out, mask, cfg.temperature, cfg.reduction).loss)
            except DegenerateBatchError:
                continue
        if not losses:
            raise DegenerateBatchError("no validation batch contains a positive pair")
        return float(np.mean(losses))

    hist = PhaseHistory("pretrain")
    stopper = EarlyStopping(cfg.patience)
    best = _snapshot(net)
    for _ in range(cfg.max_epochs):
        order = batch_rng.permutation(train.n)
        batch_losses = []
        for s in range(0, train.n - b + 1, b):
            idx = order[s : s + b]
            for attempt in range(2):
                inputs, mask = _contrastive_views(
                    train.features[idx], train.labels[idx], ablation, pool, ccfg,
                    corrupt_rng, cfg.threshold, corrupt_fn,
                )
                try:
                    loss, grads = loss_and_grads(inputs, mask)
                    break
                except DegenerateBatchError:
                    if attempt == 1:
                        raise
                    idx = batch_rng.choice(train.n, size=b, replace=False)
            mlp_adam_step(net, grads, opt)
            batch_losses.append(loss)
        hist.train_losses.append(float(np.mean(batch_losses)))
        hist.val_losses.append(val_loss())
        if stopper.update(hist.val_losses[-1]):
            best = _snapshot(net)
        if stopper.should_stop:
            break
    net.load_parameters(best)
    encoder.version += 1
    projector.version += 1
    hist.best_epoch = stopper.best_epoch
    hist.stop_epoch = stopper.epoch
    return encoder, projector, TrainReport([hist])


# --- phase 2: MSE regression -----------------------------------------------------


def _fit_mse(net: Mlp, x, y, xv, yv, cfg: FinetuneConfig, rng, phase: str) -> PhaseHistory:
    """Train every parameter of ``net`` on MSE; keeps the final partial batch."""
    opt = AdamState.for_params(net.parameters(), learning_rate=cfg.lr)
    hist = PhaseHistory(phase)
    stopper = EarlyStopping(cfg.patience)
    best = _snapshot(net)
    n = x.shape[0]
    for _ in range(cfg.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            out, cache = forward(net, x[idx])
            resid = out[:, 0] - y[idx]
            total += float(resid @ resid)
            g = (2.0 / idx.size) * resid[:, None]
            grads, _ = backward(net, cache, g)
            mlp_adam_step(net, grads, opt)
        hist.train_losses.append(total / n)
        resid = net(xv)[:, 0] - yv
        hist.val_losses.append(float(resid @ resid) / resid.size)
        if stopper.update(hist.val_losses[-1]):
            best = _snapshot(net)
        if stopper.should_stop:
            break
    net.load_parameters(best)
    hist.best_epoch = stopper.best_epoch
    hist.stop_epoch = stopper.epoch
    return hist


def finetune(
    encoder: Mlp, train: Dataset, val: Dataset, plan: TrainPlan, regressor: Mlp | None = None
) -> tuple[Mlp, TrainReport]:
    """Fit a regressor head on frozen encoder outputs.

    The encoder is only ever evaluated, so its outputs are computed once.
    """
    h_train = encoder(train.features)
    h_val = encoder(val.features)
    if regressor is None:
        regressor = init_regressor(plan, rng_stream(plan.seed, "init-regressor"), encoder.output_dim)
    hist = _fit_mse(
        regressor, h_train, train.labels, h_val, val.labels, plan.finetune,
        rng_stream(plan.seed, "finetune-batching"), "finetune",
    )
    return regressor, TrainReport([hist])


def train_baseline(train: Dataset, val: Dataset, plan: TrainPlan) -> tuple[Mlp, Mlp, TrainReport]:
    """Encoder + regressor trained jointly with MSE, no pretraining."""
    init_rng = rng_stream(plan.seed, "init")
    encoder = init_encoder(train.d, plan, init_rng)
    regressor = init_regressor(plan, rng_stream(plan.seed, "init-regressor"))
    net = concat_mlps(encoder, regressor)
    hist = _fit_mse(
        net, train.features, train.labels, val.features, val.labels, plan.finetune,
        rng_stream(plan.seed, "finetune-batching"), "finetune",
    )
    encoder.version += 1
    regressor.version += 1
    return encoder, regressor, TrainReport([hist])


# --- bundles -----------------------------------------------------------------------


@dataclass(eq=False)
class ModelBundle:
    encoder: Mlp
    regressor: Mlp
    standardizer: Standardizer
    projector: Mlp | None = None
    modality_tag: str = ""
    mode: str = Ablation.FULL.value

    def __post_init__(self):
        if self.regressor.input_dim != self.encoder.output_dim:
            raise ContractError("regressor input does not match encoder output")
        if self.projector is not None and self.projector.input_dim != self.encoder.output_dim:
            raise ContractError("projector input does not match encoder output")
        if self.standardizer.mean.size != self.encoder.input_dim:
            raise ContractError("standardizer width does not match encoder input")

    @property
    def n_features(self) -> int:
        return self.encoder.input_dim


def train_scr(
    dataset: Dataset,
    split: SplitIndices,
    plan: TrainPlan,
    corrupt_fn: Callable = augment.corrupt_batch,
) -> tuple[ModelBundle, TrainReport]:
    """Standardize on the training rows, pretrain (unless baseline), fine-tune."""
    start = time.perf_counter()
    std = fit_standardizer(dataset, split.train)
    z = std.apply(dataset)
    train, val = z.subset(split.train), z.subset(split.val)
    if plan.ablation is Ablation.BASELINE_MLP:
        encoder, regressor, report = train_baseline(train, val, plan)
        projector = None
    else:
        encoder, projector, report = pretrain(train, val, plan, corrupt_fn=corrupt_fn)
        regressor, ft = finetune(encoder, train, val, plan)
        report.phases.extend(ft.phases)
    report.seconds = time.perf_counter() - start
    bundle = ModelBundle(
        encoder, regressor, std, projector, dataset.modality_tag, plan.ablation.value
    )
    return bundle, report


def predict(bundle: ModelBundle, dataset: Dataset) -> np.ndarray:
    """Predictions for every row. Raw datasets are standardized with the
    bundle's standardizer; already-standardized ones are used as given."""
    if dataset.d != bundle.n_features:
        raise ContractError(
            f"dataset has {dataset.d} features, model expects {bundle.n_features}"
        )
    if not dataset.standardized:
        dataset = bundle.standardizer.apply(dataset)
    # blocked matmul can round a row differently depending on its position in
    # the batch; evaluating unique rows once keeps duplicates bit-identical
    rows, inverse = np.unique(dataset.features, axis=0, return_inverse=True)
    return bundle.regressor(bundle.encoder(rows))[:, 0][inverse.reshape(-1)]


def evaluate_rows(bundle: ModelBundle, dataset: Dataset, rows=None) -> EvalResult:
    ds = dataset if rows is None else dataset.subset(rows)
    return evaluate(predict(bundle, ds), ds.labels)


def ensemble_predict(bundles: Sequence[ModelBundle], datasets: Sequence[Dataset]) -> np.ndarray:
    """Row-wise mean of per-bundle predictions; datasets aligned by row order."""
    if not bundles or len(bundles) != len(datasets):
        raise ContractError(f"{len(bundles)} models for {len(datasets)} datasets")
    n = {ds.n for ds in datasets}
    if len(n) != 1:
        raise ContractError(f"datasets have different row counts: {sorted(n)}")
    preds = np.stack([predict(b, ds) for b, ds in zip(bundles, datasets)])
    # averaging offsets from the first model keeps identical models exact
    return preds[0] + (preds - preds[0]).mean(axis=0)


# --- checkpoints -------------------------------------------------------------------

CHECKPOINT_MAGIC = "scr-checkpoint"
CHECKPOINT_VERSION = 1


def bundle_to_text(bundle: ModelBundle) -> str:
    std = bundle.standardizer
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        f"modality {bundle.modality_tag.encode().hex() or '-'}",
        f"mode {bundle.mode}",
        f"standardizer {std.mean.size}",
        "mean " + fmt_values(std.mean),
        "std " + fmt_values(std.std),
    ]
    lines += write_mlp("encoder", bundle.encoder)
    if bundle.projector is not None:
        lines += write_mlp("projector", bundle.projector)
    lines += write_mlp("regressor", bundle.regressor)
    lines.append("end")
    return "\n".join(lines) + "\n"


def bundle_from_text(text: str) -> ModelBundle:
    r = LineReader(text)
    parts, off = r.next(CHECKPOINT_MAGIC)
    if parts != [str(CHECKPOINT_VERSION)]:
        raise CheckpointError(f"unsupported checkpoint version {parts}", off)
    parts, off = r.next("modality")
    try:
        tag = "" if parts == ["-"] else bytes.fromhex(parts[0]).decode()
    except (ValueError, IndexError):
        raise CheckpointError("bad modality tag", off) from None
    parts, off = r.next("mode")
    try:
        mode = Ablation(parts[0]).value
    except (ValueError, IndexError):
        raise CheckpointError("bad training mode", off) from None
    (d,) = r.ints("standardizer", 1)
    mean = r.floats("mean", d)
    std = r.floats("std", d)
    nets = {}
    while r.peek_tag() == "network":
        off = r.offset
        name, net = read_mlp(r)
        if name in nets or name not in ("encoder", "projector", "regressor"):
            raise CheckpointError(f"unexpected network '{name}'", off)
        nets[name] = net
    r.next("end")
    if not r.at_end():
        raise CheckpointError("trailing content after 'end'", r.offset)
    for required in ("encoder", "regressor"):
        if required not in nets:
            raise CheckpointError(f"checkpoint has no {required}", r.offset)
    try:
        return ModelBundle(
            nets["encoder"], nets["regressor"], Standardizer(mean, std),
            nets.get("projector"), tag, mode,
        )
    except ContractError as exc:
        raise CheckpointError(str(exc), 0) from None


def save_bundle(bundle: ModelBundle, path) -> None:
    Path(path).write_text(bundle_to_text(bundle), encoding="utf-8")


def load_bundle(path) -> ModelBundle:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError("checkpoint is not UTF-8", exc.start) from None
    return bundle_from_text(text)
