"""Experiment grids: pooling x fine-tuning ablation, flag-threshold sweep and
temporal (train-on-past, test-on-future) cross-validation."""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..corpus import (
    BENIGN,
    MALWARE,
    CorpusRecord,
    ThresholdRule,
    dataset_hash,
    label_by_flags,
    partition_by_year,
    sample_size,
    stratified_sample,
)
from ..errors import BadK, EmptyBucket
from ..model import LAST_HIDDEN_MEAN, POOLER, ModelConfig, TrainConfig, evaluate, pretrain_mlm, train
from ..model.training import holdout_split
from ..tokenizer import Vocabulary
from .metrics import EvalMetrics, confusion, metrics
from .report import HEADLINE, Cell, Report

log = logging.getLogger(__name__)


def cell_seed(master_seed: int, cell_id: str) -> int:
    """Per-cell seed that does not depend on scheduling order."""
    digest = hashlib.sha256(f"{master_seed}:{cell_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """K disjoint folds covering range(n); sizes differ by at most one."""
    if k < 2 or k > n:
        raise BadK(f"need 2 <= K <= n, got K={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def fit_and_score(train_records: Sequence[CorpusRecord], test_records: Sequence[CorpusRecord],
                  vocab: Vocabulary, model_config: ModelConfig, train_config: TrainConfig,
                  pretrain: bool = False) -> tuple[dict, EvalMetrics]:
    """Train on one split and score on the other; returns (fold record, metrics)."""
    init = None
    if pretrain:
        init = pretrain_mlm(train_records, vocab, model_config, train_config).params
    result = train(train_records, vocab, model_config, train_config, eval_records=[], init_params=init)
    probs, loss = evaluate(result.params, model_config, test_records, vocab)
    labels = [r.label for r in test_records]
    cm = confusion(probs.argmax(1), labels)
    m = metrics(cm, probs[:, 1], labels, test_loss=loss)
    fold = {"metrics": m.as_dict(), "confusion": cm.as_dict(), "n_train": len(train_records),
            "n_test": len(test_records), "train_loss": [s.train_loss for s in result.trace]}
    return fold, m


def summarize(all_metrics: Sequence[EvalMetrics]) -> dict[str, dict[str, Optional[float]]]:
    out = {}
    for name in HEADLINE:
        vals = [m.headline()[name] for m in all_metrics]
        vals = [v for v in vals if v is not None]
        if vals:
            out[name] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        else:
            out[name] = {"mean": None, "std": None}
    return out


def _sum_confusion(folds: Sequence[dict]) -> dict[str, int]:
    keys = ("tp", "tn", "fp", "fn")
    return {k: int(sum(f["confusion"][k] for f in folds)) for k in keys}


def _configs(mc: ModelConfig, tc: TrainConfig) -> dict:
    return {"model": asdict(mc), "train": asdict(tc)}


# ---------------------------------------------------------------- ablation

ABLATION_CELLS = (
    ("exp1", POOLER, False),
    ("exp2", LAST_HIDDEN_MEAN, False),
    ("exp3", POOLER, True),
    ("exp4", LAST_HIDDEN_MEAN, True),
)


@dataclass(frozen=True)
class AblationSpec:
    folds: Optional[int] = 5  # None: a single holdout split of size 1 - split
    split: float = 0.8
    seeds: tuple[int, ...] = (0,)
    pretrain: bool = False
    cells: tuple = ABLATION_CELLS


def run_ablation(records: Sequence[CorpusRecord], vocab: Vocabulary, model_config: ModelConfig,
                 train_config: TrainConfig, spec: AblationSpec = AblationSpec(),
                 test_records: Optional[Sequence[CorpusRecord]] = None) -> Report:
    """Pooler / last-hidden-mean x frozen / fine-tuned grid.

    Records are sorted by id first, so fold assignment (and therefore every
    metric) is independent of input order. With ``test_records`` the folds
    are replaced by that fixed train/test pair.
    """
    records = sorted(records, key=lambda r: r.id)
    dhash = dataset_hash(list(records) + list(test_records or []))
    report = Report("ablation", meta={"dataset_hash": dhash, "n_records": len(records),
                                      "folds": spec.folds, "seeds": list(spec.seeds)})
    for cell_id, pooling, fine_tune in spec.cells:
        t0 = time.perf_counter()
        mc = model_config.replace(pooling=pooling, fine_tune_encoder=fine_tune)
        folds, scored, seeds = [], [], []
        for master in spec.seeds:
            s = cell_seed(master, cell_id)
            seeds.append(s)
            tc = train_config.replace(seed=s)
            if test_records is not None:
                splits = [(list(records), list(test_records))]
            elif spec.folds:
                parts = kfold_split(len(records), spec.folds, master)
                splits = []
                for i, test_idx in enumerate(parts):
                    train_idx = np.sort(np.concatenate([p for j, p in enumerate(parts) if j != i]))
                    splits.append(([records[j] for j in train_idx], [records[j] for j in test_idx]))
            else:
                tr, te = holdout_split(records, 1 - spec.split, master)
                splits = [(tr, te)]
            for fold_no, (tr, te) in enumerate(splits):
                fold, m = fit_and_score(tr, te, vocab, mc, tc, spec.pretrain)
                fold.update(seed=master, fold=fold_no)
                folds.append(fold)
                scored.append(m)
        report.cells.append(Cell(
            cell_id, {"pooling": pooling, "fine_tune": fine_tune}, seed=seeds[0],
            dataset_hash=dhash, config=_configs(mc, train_config), folds=folds,
            summary=summarize(scored), confusion=_sum_confusion(folds),
            extra={"cell_seeds": seeds, "pretrain": spec.pretrain},
            wall_time=time.perf_counter() - t0))
        log.info("%s: accuracy %.3f", cell_id, report.cells[-1].mean("accuracy"))
    return report


# ---------------------------------------------------------- threshold sweep

def run_threshold_sweep(flag_records: Sequence[CorpusRecord], rules: Sequence[ThresholdRule],
                        eval_records: Sequence[CorpusRecord], vocab: Vocabulary,
                        model_config: ModelConfig, train_config: TrainConfig,
                        sample_per_class: Optional[int] = None, confidence: float = 0.99,
                        margin: float = 0.015, seed: int = 0) -> Report:
    """Label the flag-indexed pool with each rule, sample, train, and score on
    an independently labelled evaluation set. The best rule is chosen by MCC.

    Per-class sample sizes come from ``sample_per_class`` when given, else
    from the Cochran calculator over the class population. Cells tied on MCC
    are ranked by test loss; ``meta["mcc_ties"]`` lists them.
    """
    flag_records = sorted(flag_records, key=lambda r: r.id)
    eval_hash = dataset_hash(eval_records)
    report = Report("threshold_sweep", meta={"eval_hash": eval_hash, "n_pool": len(flag_records),
                                             "confidence": confidence, "margin": margin,
                                             "sample_per_class": sample_per_class, "seed": seed})
    for i, rule in enumerate(rules, 1):
        cell_id = f"exp{i}"
        t0 = time.perf_counter()
        labeled, dropped = label_by_flags(flag_records, rule)
        n_b = sum(r.label == BENIGN for r in labeled)
        n_m = len(labeled) - n_b
        if sample_per_class is not None:
            want_b, want_m = min(sample_per_class, n_b), min(sample_per_class, n_m)
        else:
            want_b = min(n_b, sample_size(n_b, confidence, margin)) if n_b else 0
            want_m = min(n_m, sample_size(n_m, confidence, margin)) if n_m else 0
        s = cell_seed(seed, cell_id)
        counts = {"benign": n_b, "malware": n_m, "dropped": dropped,
                  "sample_benign": want_b, "sample_malware": want_m}
        params = {"benign_max": rule.benign_max, "malware_min": rule.malware_min, "rule": rule.name}
        if want_b == 0 or want_m == 0:
            report.cells.append(Cell(cell_id, params, status="EmptyClass", seed=s, extra={"counts": counts}))
            continue
        sample = stratified_sample(labeled, want_b, want_m, s)
        tc = train_config.replace(seed=s)
        fold, m = fit_and_score(sample, eval_records, vocab, model_config, tc)
        report.cells.append(Cell(
            cell_id, params, seed=s, dataset_hash=dataset_hash(sample),
            config=_configs(model_config, tc), folds=[fold], summary=summarize([m]),
            confusion=fold["confusion"], extra={"counts": counts, "eval_hash": eval_hash},
            wall_time=time.perf_counter() - t0))

    scored = [c for c in report.cells if c.status == "ok"]
    if scored:
        # highest MCC wins; equal MCC falls back to the lower test loss
        ranked = sorted(scored, key=lambda c: (-c.mean("mcc"), c.mean("test_loss"), c.cell_id))
        top = ranked[0]
        ties = [c.cell_id for c in scored if c.mean("mcc") == top.mean("mcc")]
        runner_up = ranked[1] if len(ranked) > 1 else None
        unique = runner_up is None or (runner_up.mean("mcc"), runner_up.mean("test_loss")) != \
            (top.mean("mcc"), top.mean("test_loss"))
        report.meta.update(best=top.cell_id, best_rule=top.params["rule"], best_mcc=top.mean("mcc"),
                           best_unique=unique, mcc_ties=ties)
    report.series["mcc"] = [[c.cell_id, c.mean("mcc")] for c in scored]
    report.series["accuracy"] = [[c.cell_id, c.mean("accuracy")] for c in scored]
    return report


# ------------------------------------------------------------ temporal CV

def _label(years) -> str:
    ys = sorted(years)
    return "-".join(map(str, ys)) if len(ys) <= 2 else ",".join(map(str, ys))


def run_timecv(records: Sequence[CorpusRecord], train_sets: Sequence[Sequence[int]],
               test_sets: Sequence[Sequence[int]], vocab: Vocabulary, model_config: ModelConfig,
               train_config: TrainConfig, holdout: float = 0.2, seed: int = 0) -> Report:
    """Train once per training period, then score a same-period holdout and
    every strictly later test period.

    ``extra["degradation"]`` on future cells is
    (acc_same_period - acc_future) / acc_same_period.
    """
    records = sorted(records, key=lambda r: r.id)
    report = Report("timecv", meta={"dataset_hash": dataset_hash(records), "holdout": holdout,
                                    "seed": seed, "train_sets": [sorted(s) for s in train_sets],
                                    "test_sets": [sorted(s) for s in test_sets]})
    test_buckets = partition_by_year(records, test_sets)
    for train_years, train_bucket in zip(train_sets, partition_by_year(records, train_sets)):
        tl = _label(train_years)
        later = [(ts, b) for ts, b in zip(test_sets, test_buckets) if min(ts) > max(train_years)]
        if not train_bucket.records:
            for ts, _ in [(train_years, None)] + later:
                report.cells.append(Cell(f"train={tl}|test={_label(ts)}",
                                         {"train_years": tl, "test_years": _label(ts)},
                                         status=EmptyBucket.__name__))
            continue
        t0 = time.perf_counter()
        s = cell_seed(seed, tl)
        tc = train_config.replace(seed=s)
        tr, te = holdout_split(train_bucket.records, holdout, s)
        result = train(tr, vocab, model_config, tc, eval_records=[])
        train_time = time.perf_counter() - t0

        def score(test, test_label):
            t1 = time.perf_counter()
            probs, loss = evaluate(result.params, model_config, test, vocab)
            labels = [r.label for r in test]
            cm = confusion(probs.argmax(1), labels)
            m = metrics(cm, probs[:, 1], labels, test_loss=loss)
            return Cell(f"train={tl}|test={test_label}", {"train_years": tl, "test_years": test_label},
                        seed=s, dataset_hash=dataset_hash(test), config=_configs(model_config, tc),
                        folds=[{"metrics": m.as_dict(), "confusion": cm.as_dict(),
                                "n_train": len(tr), "n_test": len(test)}],
                        summary=summarize([m]), confusion=cm.as_dict(),
                        wall_time=time.perf_counter() - t1 + train_time), m

        same, m_same = score(te, tl)
        same.extra["same_period"] = True
        report.cells.append(same)
        acc_series = [[tl, m_same.accuracy.weighted]]
        f1_series = [[tl, m_same.f1.weighted]]
        for ts, bucket in later:
            label = _label(ts)
            if not bucket.records:
                report.cells.append(Cell(f"train={tl}|test={label}", {"train_years": tl, "test_years": label},
                                         status=EmptyBucket.__name__, seed=s))
                continue
            cell, m = score(bucket.records, label)
            base = m_same.accuracy.weighted
            cell.extra["degradation"] = (base - m.accuracy.weighted) / base if base else None
            report.cells.append(cell)
            acc_series.append([label, m.accuracy.weighted])
            f1_series.append([label, m.f1.weighted])
        report.series[f"accuracy[train={tl}]"] = acc_series
        report.series[f"f1[train={tl}]"] = f1_series
    return report
