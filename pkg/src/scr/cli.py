"""``scr`` command-line front end.

Every config key is also a flag: ``--pretrain.batch-size 256`` sets
``pretrain.batch_size``. Exit codes: 0 ok, 2 usage/config, 3 data, 4 numeric.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path


from . import selfcheck
from .config import KEYS, RunConfig, parse_value
from .data import load_csv, split, write_csv, generate_synthetic
from .errors import ConfigError, ScrError
from .interpret import run_importance
from .metrics import evaluate
from .pipeline import ensemble_predict, evaluate_rows, load_bundle, predict, save_bundle, train_scr

SWEEP_KEYS = {
    "pretrain.batch_size": "pretrain.batch_size",
    "pretrain.corruption_rate": "pretrain.corruption_rate",
    "pretrain.temperature": "pretrain.temperature",
    "pretrain.threshold": "pretrain.threshold",
    "seed": "seed",
    "b": "pretrain.batch_size",
    "c": "pretrain.corruption_rate",
    "tau": "pretrain.temperature",
    "theta": "pretrain.threshold",
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat 'key = value' config file")
    group = parser.add_argument_group("config keys")
    for key in KEYS:
        flag = "--" + key.name.replace("_", "-")
        group.add_argument(flag, dest="cfg:" + key.name, default=None, metavar="V", help=key.help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scr", description="Supervised contrastive regression")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in [
        ("synth", "write a synthetic dataset and its ground-truth sidecar"),
        ("train", "train a model and report test metrics"),
        ("importance", "grouped permutation feature importance"),
    ]:
        _add_config_flags(sub.add_parser(name, help=help_))

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on a dataset")
    _add_config_flags(p)

    p = sub.add_parser("ensemble", help="average predictions of several checkpoints")
    _add_config_flags(p)
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--datasets", nargs="+", required=True)
    p.add_argument("--predictions-out", help="write per-model and ensemble predictions CSV")

    p = sub.add_parser("sweep", help="test metrics across values of one hyperparameter")
    _add_config_flags(p)
    p.add_argument("key", help="one of: " + ", ".join(SWEEP_KEYS))
    p.add_argument("values", nargs="+")

    p = sub.add_parser("gradcheck", help="finite-difference gradient self-check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def _resolve(args) -> RunConfig:
    overrides = {}
    for dest, value in vars(args).items():
        if dest.startswith("cfg:") and value is not None:
            key = dest[4:]
            overrides[key] = parse_value(key, value)
    return RunConfig.resolve(args.config, overrides)


def _report_dir(cfg: RunConfig) -> Path:
    path = Path(cfg["report_dir"])
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    return path


def _load(cfg: RunConfig, path=None):
    path = path or cfg["data"]
    if not path:
        raise ConfigError("no dataset given (set 'data')")
    return load_csv(path, modality_tag=cfg["modality"] or None)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def cmd_synth(cfg: RunConfig, out=print) -> int:
    report = _report_dir(cfg)
    data_path = Path(cfg["out"] or report / "synthetic.csv")
    truth_path = Path(cfg["truth"] or data_path.with_suffix(".truth.csv"))
    data_path.parent.mkdir(parents=True, exist_ok=True)
    dataset, truth = generate_synthetic(cfg.synth_spec())
    write_csv(dataset, data_path)
    truth.write_sidecar(truth_path)
    out(f"wrote {data_path} ({dataset.n} rows, {dataset.d} features) and {truth_path}")
    return 0


def _train_once(cfg: RunConfig, dataset):
    sp = split(dataset.n, cfg.split_seed())
    bundle, report = train_scr(dataset, sp, cfg.train_plan())
    return bundle, report, evaluate_rows(bundle, dataset, sp.test)


def cmd_train(cfg: RunConfig, out=print) -> int:
    dataset = _load(cfg)
    report_dir = _report_dir(cfg)
    bundle, report, result = _train_once(cfg, dataset)
    ckpt = Path(cfg["checkpoint"] or report_dir / "model.ckpt")
    save_bundle(bundle, ckpt)
    _write(report_dir / "train_report.csv", report.to_csv())
    _write(report_dir / "metrics.txt", result.line() + "\n")
    lines = [
        "# Training summary",
        "",
        f"- mode: {cfg['mode']}",
        f"- dataset: {dataset.n} rows x {dataset.d} features ({dataset.modality_tag})",
        f"- checkpoint: {ckpt}",
    ]
    for p in report.phases:
        lines.append(
            f"- {p.phase}: best epoch {p.best_epoch} of {p.stop_epoch}, "
            f"val loss {p.best_val_loss:.6g}"
        )
    lines += ["", "| metric | value |", "|---|---|",
              f"| test pearson_r | {result.pearson_r:.6f} |",
              f"| test mse | {result.mse:.6f} |", f"| n | {result.n} |"]
    _write(report_dir / "summary.md", "\n".join(lines) + "\n")
    out(result.line())
    return 0


def cmd_evaluate(cfg: RunConfig, out=print) -> int:
    if not cfg["checkpoint"]:
        raise ConfigError("no checkpoint given")
    bundle = load_bundle(cfg["checkpoint"])
    dataset = _load(cfg)
    out(evaluate_rows(bundle, dataset).line())
    return 0


def cmd_ensemble(cfg: RunConfig, checkpoints, datasets, predictions_out=None, out=print) -> int:
    if len(checkpoints) != len(datasets):
        raise ConfigError(f"{len(checkpoints)} checkpoints but {len(datasets)} datasets")
    bundles = [load_bundle(c) for c in checkpoints]
    data = [_load(cfg, d) for d in datasets]
    pred = ensemble_predict(bundles, data)
    if predictions_out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"model_{i}" for i in range(len(bundles))] + ["ensemble", "label"])
        per = [predict(b, d) for b, d in zip(bundles, data)]
        for row in range(pred.size):
            w.writerow([repr(float(p[row])) for p in per] + [repr(float(pred[row])), repr(float(data[0].labels[row]))])
        _write(Path(predictions_out), buf.getvalue())
    out(evaluate(pred, data[0].labels).line())
    return 0


def cmd_importance(cfg: RunConfig, out=print) -> int:
    dataset = _load(cfg)
    report_dir = _report_dir(cfg)
    sp = split(dataset.n, cfg.split_seed())
    report = run_importance(dataset, sp, cfg.train_plan(), cfg.importance_config())
    _write(report_dir / "importance.csv", report.to_csv())
    top = ", ".join(dataset.feature_names[j] for j in report.top(10))
    out(f"baseline_r={report.baseline_r:.6f} completed={report.completed} "
        f"failed={report.failed} top10: {top}")
    return 0


def _sweep_point(args):
    cfg, dataset = args
    _, _, result = _train_once(cfg, dataset)
    return result


def cmd_sweep(cfg: RunConfig, key: str, values, out=print) -> int:
    if key not in SWEEP_KEYS:
        raise ConfigError(f"cannot sweep '{key}'; choose from {', '.join(SWEEP_KEYS)}")
    key = SWEEP_KEYS[key]
    parsed = [parse_value(key, v) for v in values]
    dataset = _load(cfg)
    report_dir = _report_dir(cfg)
    jobs = [(cfg.with_value(key, v), dataset) for v in parsed]
    for job_cfg, _ in jobs:
        job_cfg.train_plan()  # validate every point before training any
    if cfg["workers"] > 1:
        with ProcessPoolExecutor(cfg["workers"]) as ex:
            results = list(ex.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    buf = io.StringIO()
    buf.write("key,value,pearson_r,mse,n\n")
    for v, r in zip(parsed, results):
        buf.write(f"{key},{v},{r.pearson_r!r},{r.mse!r},{r.n}\n")
    _write(report_dir / "sweep.csv", buf.getvalue())
    rs = [r.pearson_r for r in results]
    out(buf.getvalue().rstrip("\n"))
    out(f"range of pearson_r: {max(rs) - min(rs):.6f}")
    return 0


def cmd_gradcheck(seed: int = 0, perturb: float = 0.0, out=print) -> int:
    results = selfcheck.run_all(seed, perturb)
    for r in results:
        status = "pass" if r.passed else "FAIL"
        out(f"{r.name}: max_rel_error={r.max_rel_error:.3e} params={r.n_params} {status}")
    return 0 if all(r.passed for r in results) else 4


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seed, args.perturb)
        cfg = _resolve(args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "ensemble":
            return cmd_ensemble(cfg, args.checkpoints, args.datasets, args.predictions_out)
        if args.command == "importance":
            return cmd_importance(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.key, args.values)
    except ScrError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: code={exc.exit_code} kind={type(exc).__name__} message={msg}", file=sys.stderr)
        return exc.exit_code
    return 2


if __name__ == "__main__":
    sys.exit(main())
