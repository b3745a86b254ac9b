"""Command-line entry point: ``permdroid <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import PermdroidError

log = logging.getLogger("permdroid")


# ------------------------------------------------------------------ helpers

def _year_sets(text: str) -> list[list[int]]:
    """``"2014,2015;2018,2019;2023"`` -> ``[[2014, 2015], [2018, 2019], [2023]]``."""
    return [[int(y) for y in part.split(",") if y.strip()] for part in text.split(";") if part.strip()]


def _population(text: str) -> Optional[int]:
    if text.lower() in ("inf", "infinite", "none"):
        return None
    return int(text)


def _vocab_and_configs(args, records):
    from .model import ModelConfig, TrainConfig, load_configs
    from .tokenizer import Vocabulary, build_vocab

    vocab = Vocabulary.load(args.vocab) if getattr(args, "vocab", None) else build_vocab(records)
    if getattr(args, "config", None):
        mc, tc = load_configs(args.config, len(vocab))
    else:
        mc, tc = ModelConfig(vocab_size=len(vocab)), TrainConfig()
    if mc.vocab_size != len(vocab):
        mc = mc.replace(vocab_size=len(vocab))
    if getattr(args, "epochs", None):
        tc = tc.replace(epochs=args.epochs)
    if getattr(args, "seed", None) is not None:
        tc = tc.replace(seed=args.seed)
    return vocab, mc, tc


def _labeled(records):
    return [r for r in records if r.label is not None]


def _emit(report, out: str) -> None:
    from .experiments import emit_report

    for p in emit_report(report, out):
        print(p)


# -------------------------------------------------------------- subcommands

def cmd_extract(args) -> int:
    from .apk_extract import batch_extract

    summary = batch_extract(args.apks, args.out, args.warnings, workers=args.workers)
    print(json.dumps(summary.as_dict(), indent=1))
    return 0


def cmd_label(args) -> int:
    from .corpus import ThresholdRule, attach_flags, label_by_flags, read_corpus, read_flag_index, write_corpus

    records = read_corpus(args.input)
    if args.flag_index:
        records = attach_flags(records, read_flag_index(args.flag_index))
    labeled, dropped = label_by_flags(records, ThresholdRule(args.benign_max, args.malware_min))
    write_corpus(args.out, labeled)
    n_m = sum(r.label == 1 for r in labeled)
    print(json.dumps({"benign": len(labeled) - n_m, "malware": n_m, "dropped": dropped}))
    return 0


def cmd_sample_size(args) -> int:
    from .corpus import sample_size

    print(sample_size(args.population, args.confidence, args.margin, args.proportion))
    return 0


def cmd_synth(args) -> int:
    from .corpus import synth_drift_corpus, synth_flags, synth_generate, write_corpus

    if args.drift_years:
        years = [int(y) for y in args.drift_years.split(",")]
        records = synth_drift_corpus(years, args.per_year, args.vocab_size, args.seed)
    else:
        records = synth_generate(args.benign, args.malware, args.vocab_size, noise=args.noise,
                                 seed=args.seed, salt=args.salt)
    if args.flags:
        records = synth_flags(records, seed=args.seed)
    write_corpus(args.out, records)
    print(f"{len(records)} records -> {args.out}")
    return 0


def cmd_vocab(args) -> int:
    from .corpus import read_corpus
    from .tokenizer import build_vocab

    vocab = build_vocab(read_corpus(args.input), args.mode, args.min_count)
    vocab.save(args.out)
    print(f"{len(vocab)} tokens -> {args.out}")
    return 0


def cmd_train(args) -> int:
    from .corpus import read_corpus
    from .model import LAST_HIDDEN_MEAN, POOLER, pretrain_mlm, save_checkpoint, train
    from .model.training import holdout_split

    records = read_corpus(args.data)
    vocab, mc, tc = _vocab_and_configs(args, records)
    if args.pooling:
        mc = mc.replace(pooling=POOLER if args.pooling == "pooler" else LAST_HIDDEN_MEAN)
    if args.freeze_encoder:
        mc = mc.replace(fine_tune_encoder=False)
    init = None
    if args.pretrain_mlm:
        pre = pretrain_mlm(records, vocab, mc, tc)
        init = pre.params
        log.info("pretraining losses: %s", pre.losses)
    labeled = _labeled(records)
    train_set, eval_set = holdout_split(labeled, tc.eval_fraction, tc.seed)
    result = train(train_set, vocab, mc, tc, eval_records=eval_set, init_params=init)
    for s in result.trace:
        print(json.dumps(dataclasses.asdict(s)))
    save_checkpoint(args.out, result.params, mc, tc)
    return 0


def cmd_ablation(args) -> int:
    from .corpus import read_corpus
    from .experiments import AblationSpec, run_ablation

    records = _labeled(read_corpus(args.data))
    vocab, mc, tc = _vocab_and_configs(args, records)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    spec = AblationSpec(folds=args.folds or None, split=args.split, seeds=seeds, pretrain=args.pretrain_mlm)
    test = _labeled(read_corpus(args.test)) if args.test else None
    _emit(run_ablation(records, vocab, mc, tc, spec, test_records=test), args.out)
    return 0


def _read_rules(path: Optional[str]):
    from .corpus import STANDARD_RULES, ThresholdRule

    if not path:
        return list(STANDARD_RULES)
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    rules = []
    for item in raw:
        if isinstance(item, dict):
            rules.append(ThresholdRule(int(item["benign_max"]), int(item["malware_min"])))
        else:
            rules.append(ThresholdRule(int(item[0]), int(item[1])))
    return rules


def cmd_threshold_sweep(args) -> int:
    from .corpus import read_corpus
    from .experiments import run_threshold_sweep

    pool = read_corpus(args.flags)
    eval_set = _labeled(read_corpus(args.eval))
    vocab, mc, tc = _vocab_and_configs(args, pool + eval_set)
    report = run_threshold_sweep(pool, _read_rules(args.rules), eval_set, vocab, mc, tc,
                                 sample_per_class=args.sample_per_class, confidence=args.confidence,
                                 margin=args.margin, seed=args.seed or 0)
    _emit(report, args.out)
    print(json.dumps({k: report.meta.get(k) for k in ("best", "best_unique", "best_mcc")}))
    return 0


def cmd_timecv(args) -> int:
    from .corpus import read_corpus
    from .experiments import run_timecv

    records = _labeled(read_corpus(args.data))
    vocab, mc, tc = _vocab_and_configs(args, records)
    report = run_timecv(records, _year_sets(args.train_years), _year_sets(args.test_years),
                        vocab, mc, tc, holdout=args.holdout, seed=args.seed or 0)
    _emit(report, args.out)
    return 0


def cmd_report(args) -> int:
    from .experiments import emit_report, load_report

    report = load_report(args.input)
    src = Path(args.input)
    prefix = args.out or str(src.with_suffix(""))
    for p in emit_report(report, prefix, formats=(args.format,)):
        print(p)
    return 0


def cmd_snapshot(args) -> int:
    from .integrity import snapshot

    m = snapshot(args.root, args.include or None)
    m.save(args.out)
    print(f"{len(m.entries)} entries -> {args.out}")
    return 0


def cmd_sentinels(args) -> int:
    from .integrity import SentinelSpec, create_sentinels

    spec = SentinelSpec(Path(args.dir), tuple(args.formats.split(",")), args.count, args.seed)
    for p in create_sentinels(spec):
        print(p)
    return 0


def cmd_diff(args) -> int:
    from .integrity import SnapshotManifest, diff

    report = diff(SnapshotManifest.load(args.before), SnapshotManifest.load(args.after))
    if args.out:
        report.save(args.out)
    print(json.dumps(report.to_dict()))
    return 0 if report.clean else 1


# ------------------------------------------------------------------- parser

def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vocab", help="vocabulary JSON (built from the data when omitted)")
    p.add_argument("--config", help='JSON {"model": {...}, "train": {...}}')
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="permdroid", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="APK directory -> permissions CSV")
    p.add_argument("--apks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--warnings")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("label", help="assign labels from VirusTotal flag counts")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--benign-max", type=int, required=True)
    p.add_argument("--malware-min", type=int, required=True)
    p.add_argument("--flag-index", help="sha256,year,market,vt_detection CSV to merge first")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("sample-size", help="Cochran sample size with finite-population correction")
    p.add_argument("--population", type=_population, required=True, help="integer or 'inf'")
    p.add_argument("--confidence", type=float, required=True)
    p.add_argument("--margin", type=float, required=True)
    p.add_argument("--proportion", type=float, default=0.5)
    p.set_defaults(func=cmd_sample_size)

    p = sub.add_parser("synth", help="generate a synthetic labelled corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--benign", type=int, default=250)
    p.add_argument("--malware", type=int, default=250)
    p.add_argument("--vocab-size", type=int, default=30)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--salt", default="synth")
    p.add_argument("--flags", action="store_true", help="attach synthetic vt_flags")
    p.add_argument("--drift-years", help="comma-separated years for a drifting corpus")
    p.add_argument("--per-year", type=int, default=200)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("vocab", help="build a vocabulary from a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("split", "whole"), default="split")
    p.add_argument("--min-count", type=int, default=1)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("train", help="train a classifier and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_model_args(p)
    p.add_argument("--pooling", choices=("pooler", "last-hidden"))
    p.add_argument("--freeze-encoder", action="store_true")
    p.add_argument("--pretrain-mlm", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablation", help="pooling x fine-tuning grid")
    p.add_argument("--data", required=True)
    p.add_argument("--test", help="fixed test CSV instead of k-fold")
    p.add_argument("--out", default="ablation")
    _add_model_args(p)
    p.add_argument("--folds", type=int, default=5, help="0 for a single holdout split")
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seeds", default="0")
    p.add_argument("--pretrain-mlm", action="store_true")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("threshold-sweep", help="one cell per flag threshold rule")
    p.add_argument("--flags", required=True, help="corpus CSV with vt_flags")
    p.add_argument("--eval", required=True, help="independently labelled CSV")
    p.add_argument("--rules", help="JSON list of [benign_max, malware_min]; default: the nine standard rules")
    p.add_argument("--out", default="threshold_sweep")
    _add_model_args(p)
    p.add_argument("--sample-per-class", type=int)
    p.add_argument("--confidence", type=float, default=0.99)
    p.add_argument("--margin", type=float, default=0.015)
    p.set_defaults(func=cmd_threshold_sweep)

    p = sub.add_parser("timecv", help="train on past years, test on later years")
    p.add_argument("--data", required=True)
    p.add_argument("--train-years", required=True, help="e.g. '2010,2011' or '2010,2011;2014,2015'")
    p.add_argument("--test-years", required=True, help="e.g. '2014,2015;2018,2019;2023'")
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--out", default="timecv")
    _add_model_args(p)
    p.set_defaults(func=cmd_timecv)

    p = sub.add_parser("report", help="re-render a JSON report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("csv", "plotdata", "json"), required=True)
    p.add_argument("--out", help="output prefix (default: input path without .json)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("snapshot", help="hash a directory tree")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--include", action="append", help="fnmatch pattern; repeatable")
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("sentinels", help="write seeded sentinel files")
    p.add_argument("--dir", required=True)
    p.add_argument("--formats", default="apk,py,docx,sh,bak")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sentinels)

    p = sub.add_parser("diff", help="compare two snapshots; exit status 1 when they differ")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diff)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PermdroidError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
