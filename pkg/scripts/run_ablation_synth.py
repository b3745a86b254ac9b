"""Pooling x fine-tuning grid on a separable synthetic corpus at desk scale.

    python3 scripts/run_ablation_synth.py --out results/ablation --seeds 0 1 2
"""

import argparse
import logging
from pathlib import Path

from permdroid.corpus import synth_generate
from permdroid.experiments import AblationSpec, emit_report, run_ablation
from permdroid.model import ModelConfig, TrainConfig
from permdroid.tokenizer import build_vocab


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/ablation", help="output prefix")
    ap.add_argument("--n-train", type=int, default=500)
    ap.add_argument("--n-test", type=int, default=200)
    ap.add_argument("--noise", type=float, default=0.0)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--lr", type=float, default=3e-3)
    ap.add_argument("--pretrain-mlm", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    train_set = synth_generate(args.n_train // 2, args.n_train - args.n_train // 2, noise=args.noise, seed=0)
    test_set = synth_generate(args.n_test // 2, args.n_test - args.n_test // 2, seed=100, salt="test")
    vocab = build_vocab(train_set)
    report = run_ablation(train_set, vocab, ModelConfig(vocab_size=len(vocab)),
                          TrainConfig(epochs=args.epochs, learning_rate=args.lr),
                          AblationSpec(seeds=tuple(args.seeds), pretrain=args.pretrain_mlm),
                          test_records=test_set)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    for path in emit_report(report, args.out):
        print(path)
    for cell in report.cells:
        print(f"{cell.cell_id:28s} accuracy {cell.mean('accuracy'):.3f}  mcc {cell.mean('mcc'):.3f}")


if __name__ == "__main__":
    main()
