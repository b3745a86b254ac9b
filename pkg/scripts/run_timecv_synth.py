"""Temporal cross-validation on a synthetic corpus whose malware markers
drift every few years.

    python3 scripts/run_timecv_synth.py --out results/timecv --seeds 0 1 2
"""

import argparse
import logging
from pathlib import Path

from permdroid.corpus import synth_drift_corpus
from permdroid.experiments import emit_report, run_timecv
from permdroid.model import LAST_HIDDEN_MEAN, ModelConfig, TrainConfig
from permdroid.tokenizer import build_vocab

YEARS = [2010, 2011, 2014, 2015, 2018, 2019, 2023]
TRAIN_SETS = [[2010, 2011], [2014, 2015], [2018, 2019]]
TEST_SETS = [[2014, 2015], [2018, 2019], [2023]]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/timecv", help="output prefix; the seed is appended")
    ap.add_argument("--per-year", type=int, default=200)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--lr", type=float, default=3e-3)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    for seed in args.seeds:
        records = synth_drift_corpus(YEARS, per_year=args.per_year, seed=seed)
        vocab = build_vocab(records)
        report = run_timecv(records, TRAIN_SETS, TEST_SETS, vocab,
                            ModelConfig(vocab_size=len(vocab), pooling=LAST_HIDDEN_MEAN),
                            TrainConfig(learning_rate=args.lr), seed=seed)
        for path in emit_report(report, f"{args.out}_seed{seed}"):
            print(path)
        for cell in report.cells:
            drop = cell.extra.get("degradation")
            tail = f"  degradation {drop:.3f}" if drop is not None else ""
            print(f"seed {seed} {cell.cell_id:34s} accuracy {cell.mean('accuracy'):.3f}{tail}")


if __name__ == "__main__":
    main()
