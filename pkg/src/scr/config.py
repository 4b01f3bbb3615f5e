"""Flat run configuration: dotted keys, ``key = value`` files, CLI overrides.

Precedence, lowest first: built-in defaults, ``SCR_SEED`` (seed only), the
config file, command-line flags.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .data import SynthSpec
from .errors import ConfigError, ContractError
from .interpret import ImportanceConfig
from .pipeline import Ablation, FinetuneConfig, PretrainConfig, TrainPlan, rng_stream


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str):
    t = str(text).strip().lower()
    return None if t in ("", "auto", "none") else int(t)


def _mode(text: str) -> str:
    return Ablation(str(text).strip()).value


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[str], Any]
    default: Any
    help: str = ""


KEYS = [
    Key("seed", int, 0, "master seed; every random stream derives from it"),
    Key("mode", _mode, "scr", "scr | no-corruption | self-supervised-pairs | baseline-mlp"),
    Key("data", str, "", "input dataset CSV"),
    Key("checkpoint", str, "", "checkpoint path (default <report_dir>/model.ckpt)"),
    Key("report_dir", str, "reports", "directory for reports"),
    Key("out", str, "", "synth: dataset output path"),
    Key("truth", str, "", "synth: ground-truth sidecar path"),
    Key("modality", str, "", "modality tag (default: data file stem)"),
    Key("workers", int, 1, "worker processes for importance and sweep"),
    Key("pretrain.batch_size", int, 256, "contrastive batch size b"),
    Key("pretrain.corruption_rate", float, 0.5, "corruption rate c"),
    Key("pretrain.temperature", float, 1.0, "temperature tau"),
    Key("pretrain.threshold", float, 0.35, "label difference threshold theta"),
    Key("pretrain.lr", float, 1e-3, ""),
    Key("pretrain.patience", int, 3, ""),
    Key("pretrain.max_epochs", int, 200, ""),
    Key("pretrain.reduction", str, "mean", "mean | sum over anchors"),
    Key("finetune.batch_size", int, 128, ""),
    Key("finetune.lr", float, 1e-3, ""),
    Key("finetune.patience", int, 3, ""),
    Key("finetune.max_epochs", int, 200, ""),
    Key("model.hidden_dim", int, 256, ""),
    Key("model.embedding_dim", int, 256, ""),
    Key("model.encoder_layers", int, 4, ""),
    Key("importance.group_size", _optional_int, None, "features per group (auto: 10% of D)"),
    Key("importance.n_permutations", int, 2000, ""),
    Key("importance.retrain", _bool, True, "false: shuffle test rows of a fixed model"),
    Key("synth.n_samples", int, 2000, ""),
    Key("synth.n_features", int, 100, ""),
    Key("synth.n_informative", int, 10, "the first k features are informative"),
    Key("synth.noise_std", float, 0.5, ""),
    Key("synth.nonlinear", _bool, True, ""),
]
KEY_MAP = {k.name: k for k in KEYS}


def normalize_key(name: str) -> str:
    return name.strip().replace("-", "_")


def parse_value(key: str, text) -> Any:
    key = normalize_key(key)
    if key not in KEY_MAP:
        raise ConfigError(f"unknown config key '{key}'")
    try:
        return KEY_MAP[key].parse(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for '{key}': {exc}") from None


def read_config_file(path) -> dict[str, Any]:
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            values[normalize_key(key)] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return values


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Resolved flat configuration."""

    def __init__(self, values: dict[str, Any] | None = None):
        self.values = {k.name: k.default for k in KEYS}
        for key, value in (values or {}).items():
            key = normalize_key(key)
            if key not in KEY_MAP:
                raise ConfigError(f"unknown config key '{key}'")
            self.values[key] = value

    @classmethod
    def resolve(cls, file_path=None, overrides: dict[str, Any] | None = None, env=None) -> "RunConfig":
        env = os.environ if env is None else env
        values = {}
        if env.get("SCR_SEED", "").strip():
            values["seed"] = parse_value("seed", env["SCR_SEED"])
        if file_path:
            values.update(read_config_file(file_path))
        values.update(overrides or {})
        return cls(values)

    def __getitem__(self, key):
        return self.values[normalize_key(key)]

    def with_value(self, key, value) -> "RunConfig":
        return RunConfig({**self.values, normalize_key(key): value})

    def to_text(self) -> str:
        return "".join(f"{k.name} = {_fmt(self.values[k.name])}\n" for k in KEYS)

    def derived_seed(self, name: str) -> int:
        return int(rng_stream(self["seed"], name).integers(2**31 - 1))

    def train_plan(self) -> TrainPlan:
        v = self.values
        try:
            return TrainPlan(
                pretrain=PretrainConfig(
                    batch_size=v["pretrain.batch_size"],
                    corruption_rate=v["pretrain.corruption_rate"],
                    temperature=v["pretrain.temperature"],
                    threshold=v["pretrain.threshold"],
                    lr=v["pretrain.lr"],
                    patience=v["pretrain.patience"],
                    max_epochs=v["pretrain.max_epochs"],
                    reduction=v["pretrain.reduction"],
                ),
                finetune=FinetuneConfig(
                    batch_size=v["finetune.batch_size"],
                    lr=v["finetune.lr"],
                    patience=v["finetune.patience"],
                    max_epochs=v["finetune.max_epochs"],
                ),
                ablation=Ablation(v["mode"]),
                seed=v["seed"],
                hidden_dim=v["model.hidden_dim"],
                embedding_dim=v["model.embedding_dim"],
                encoder_layers=v["model.encoder_layers"],
            )
        except ContractError as exc:
            raise ConfigError(str(exc)) from None

    def split_seed(self) -> int:
        return self.derived_seed("split")

    def importance_config(self) -> ImportanceConfig:
        return ImportanceConfig(
            group_size=self["importance.group_size"],
            n_permutations=self["importance.n_permutations"],
            retrain=self["importance.retrain"],
            master_seed=self.derived_seed("importance"),
            workers=self["workers"],
        )

    def synth_spec(self) -> SynthSpec:
        k = self["synth.n_informative"]
        try:
            return SynthSpec(
                n_samples=self["synth.n_samples"],
                n_features=self["synth.n_features"],
                informative_indices=tuple(range(k)),
                noise_std=self["synth.noise_std"],
                nonlinear=self["synth.nonlinear"],
                seed=self.derived_seed("synth"),
            )
        except ContractError as exc:
            raise ConfigError(str(exc)) from None
