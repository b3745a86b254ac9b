"""Binary classification metrics with malware (label 1) as the positive class."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import LengthMismatch


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return asdict(self)


def confusion(predictions: Sequence[int], labels: Sequence[int]) -> ConfusionMatrix:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise LengthMismatch(f"{len(p)} predictions vs {len(y)} labels")
    return ConfusionMatrix(
        tp=int(((p == 1) & (y == 1)).sum()),
        tn=int(((p == 0) & (y == 0)).sum()),
        fp=int(((p == 1) & (y == 0)).sum()),
        fn=int(((p == 0) & (y == 1)).sum()),
    )


@dataclass(frozen=True)
class Averaged:
    per_class: tuple[float, float]  # (benign, malware)
    macro: float
    weighted: float

    def as_dict(self) -> dict:
        return {"per_class": list(self.per_class), "macro": self.macro, "weighted": self.weighted}

    @classmethod
    def from_dict(cls, d: dict) -> "Averaged":
        return cls(tuple(d["per_class"]), d["macro"], d["weighted"])


@dataclass(frozen=True)
class EvalMetrics:
    """Per-class accuracy is the class recall, so ``accuracy.macro`` is the
    balanced accuracy and ``accuracy.weighted`` the plain accuracy."""
    accuracy: Averaged
    precision: Averaged
    recall: Averaged
    f1: Averaged
    mcc: float
    auc_roc: Optional[float] = None
    test_loss: Optional[float] = None

    def headline(self) -> dict[str, Optional[float]]:
        return {
            "accuracy": self.accuracy.weighted,
            "precision": self.precision.weighted,
            "recall": self.recall.weighted,
            "f1": self.f1.weighted,
            "mcc": self.mcc,
            "auc_roc": self.auc_roc,
            "test_loss": self.test_loss,
        }

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy.as_dict(),
            "precision": self.precision.as_dict(),
            "recall": self.recall.as_dict(),
            "f1": self.f1.as_dict(),
            "mcc": self.mcc,
            "auc_roc": self.auc_roc,
            "test_loss": self.test_loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalMetrics":
        return cls(*(Averaged.from_dict(d[k]) for k in ("accuracy", "precision", "recall", "f1")),
                   mcc=d["mcc"], auc_roc=d["auc_roc"], test_loss=d["test_loss"])


def _div(a: float, b: float) -> float:
    return a / b if b else 0.0


def _average(per_class: tuple[float, float], support: tuple[int, int]) -> Averaged:
    n = support[0] + support[1]
    weighted = _div(per_class[0] * support[0] + per_class[1] * support[1], n)
    return Averaged(per_class, (per_class[0] + per_class[1]) / 2, weighted)


def mcc(cm: ConfusionMatrix) -> float:
    """Matthews correlation; 0 when any marginal is empty."""
    tp, tn, fp, fn = int(cm.tp), int(cm.tn), int(cm.fp), int(cm.fn)
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def auc_roc(scores: Sequence[float], labels: Sequence[int]) -> Optional[float]:
    """Rank-statistic AUC: P(score_pos > score_neg) with ties counted half.

    ``None`` when either class is absent.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise LengthMismatch(f"{len(s)} scores vs {len(y)} labels")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    # mid-ranks handle ties exactly
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    midrank = upper - (counts - 1) / 2.0
    ranks = midrank[inverse]
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def metrics(cm: ConfusionMatrix, scores: Optional[Sequence[float]] = None,
            labels: Optional[Sequence[int]] = None, test_loss: Optional[float] = None) -> EvalMetrics:
    tp, tn, fp, fn = int(cm.tp), int(cm.tn), int(cm.fp), int(cm.fn)
    support = (tn + fp, tp + fn)
    precision = (_div(tn, tn + fn), _div(tp, tp + fp))
    recall = (_div(tn, tn + fp), _div(tp, tp + fn))
    f1 = tuple(_div(2 * p * r, p + r) for p, r in zip(precision, recall))
    accuracy = _average(recall, support)
    # the weighted recall equals (tp + tn) / n; compute it directly to avoid round-off
    accuracy = Averaged(accuracy.per_class, accuracy.macro, _div(tp + tn, cm.total))
    auc = auc_roc(scores, labels) if scores is not None and labels is not None else None
    return EvalMetrics(accuracy, _average(precision, support), _average(recall, support),
                       _average(f1, support), mcc(cm), auc, test_loss)
