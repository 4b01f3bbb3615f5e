"""Regenerate the frozen checkpoint fixture under tests/data.

Only rerun this when the checkpoint format or the model is meant to change;
the golden test exists to catch unintended drift.
"""

from pathlib import Path

from scr.data import SynthSpec, generate_synthetic, split, write_csv
from scr.pipeline import FinetuneConfig, PretrainConfig, TrainPlan, predict, save_bundle, train_scr

OUT = Path(__file__).resolve().parent.parent / "tests" / "data"


def main():
    ds, _ = generate_synthetic(SynthSpec(n_samples=200, n_features=8, informative_indices=(0, 3), seed=11))
    plan = TrainPlan(pretrain=PretrainConfig(batch_size=32, max_epochs=3),
                     finetune=FinetuneConfig(max_epochs=3), hidden_dim=8, embedding_dim=4, seed=11)
    bundle, _ = train_scr(ds, split(ds.n, 11), plan)
    OUT.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle, OUT / "golden.ckpt")
    inputs = ds.subset(range(25))
    write_csv(inputs, OUT / "golden_inputs.csv")
    preds = predict(bundle, inputs)
    (OUT / "golden_predictions.txt").write_text("\n".join(repr(float(p)) for p in preds) + "\n")


if __name__ == "__main__":
    main()
