"""Training loops (classification and masked-token pretraining) and inference."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..corpus import CorpusRecord
from ..errors import BadLabel, EmptyDataset, NoMaskedPositions
from ..tokenizer import MASK, N_SPECIAL, Vocabulary, encode_batch
from . import encoder as E
from .config import ModelConfig, TrainConfig
from .optim import AdamWState, adamw_step, lr_schedule


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    eval_loss: Optional[float] = None
    eval_accuracy: Optional[float] = None
    lr: float = 0.0


@dataclass
class TrainResult:
    params: E.Params
    model_config: ModelConfig
    train_config: TrainConfig
    trace: list[EpochStats] = field(default_factory=list)
    eval_records: list[CorpusRecord] = field(default_factory=list)


def _labels(records: Sequence[CorpusRecord]) -> np.ndarray:
    labels = [r.label for r in records]
    if any(l not in (0, 1) for l in labels):
        raise BadLabel("training records must be labelled 0 or 1")
    return np.array(labels, dtype=np.int64)


def holdout_split(records: Sequence[CorpusRecord], eval_fraction: float, seed: int
                  ) -> tuple[list[CorpusRecord], list[CorpusRecord]]:
    """Deterministic train/eval split, independent of input order."""
    ordered = sorted(records, key=lambda r: r.id)
    perm = np.random.default_rng([seed, 7]).permutation(len(ordered))
    n_eval = int(round(eval_fraction * len(ordered)))
    ev = [ordered[i] for i in sorted(perm[:n_eval])]
    tr = [ordered[i] for i in sorted(perm[n_eval:])]
    return tr, ev


def _seed_params(cfg: ModelConfig, tcfg: TrainConfig, init: Optional[E.Params]) -> E.Params:
    params = E.init_params(cfg, tcfg.seed, tcfg.dtype)
    if init is not None:
        for k, v in init.items():
            if k in params and params[k].shape == v.shape:
                params[k] = np.array(v, dtype=tcfg.dtype)
    return params


def predict_proba(params: E.Params, cfg: ModelConfig, texts: Sequence[str], vocab: Vocabulary,
                  batch_size: int = 64) -> np.ndarray:
    """(n, 2) class probabilities, evaluation mode (no dropout)."""
    out = np.zeros((len(texts), cfg.n_classes), dtype=np.float64)
    for s in range(0, len(texts), batch_size):
        ids, mask = encode_batch(texts[s:s + batch_size], vocab, cfg.max_len)
        out[s:s + len(ids)] = E.forward(params, cfg, ids, mask)["probs"]
    return out


def evaluate(params: E.Params, cfg: ModelConfig, records: Sequence[CorpusRecord], vocab: Vocabulary,
             batch_size: int = 64) -> tuple[np.ndarray, float]:
    """Probabilities and mean cross-entropy on labelled ``records``."""
    probs = predict_proba(params, cfg, [r.text for r in records], vocab, batch_size)
    y = _labels(records)
    eps = np.finfo(np.float64).tiny
    loss = float(-np.log(np.maximum(probs[np.arange(len(y)), y], eps)).mean()) if len(y) else float("nan")
    return probs, loss


@dataclass(frozen=True)
class Prediction:
    probs: tuple[float, float]
    label: int


def predict(params: E.Params, cfg: ModelConfig, records: Sequence[CorpusRecord], vocab: Vocabulary,
            batch_size: int = 64) -> list[Prediction]:
    """Argmax class per record; equal probabilities resolve to 0 (benign)."""
    probs = predict_proba(params, cfg, [r.text for r in records], vocab, batch_size)
    return [Prediction((float(p[0]), float(p[1])), int(np.argmax(p))) for p in probs]


def train(records: Sequence[CorpusRecord], vocab: Vocabulary, model_config: ModelConfig,
          train_config: TrainConfig, eval_records: Optional[Sequence[CorpusRecord]] = None,
          init_params: Optional[E.Params] = None) -> TrainResult:
    """Mini-batch AdamW training with linear warmup/decay.

    Without ``eval_records`` a seeded ``eval_fraction`` holdout is carved out
    of ``records``. The trace is bit-reproducible for a fixed seed and BLAS
    thread count.
    """
    if not records:
        raise EmptyDataset("no training records")
    cfg, tcfg = model_config, train_config
    if eval_records is None and tcfg.eval_fraction > 0:
        records, eval_records = holdout_split(records, tcfg.eval_fraction, tcfg.seed)
        if not records:
            raise EmptyDataset("holdout split left no training records")
    eval_records = list(eval_records or [])

    y = _labels(records)
    ids, mask = encode_batch([r.text for r in records], vocab, cfg.max_len)
    params = _seed_params(cfg, tcfg, init_params)
    trainable = [k for k in params if cfg.fine_tune_encoder or not E.is_encoder_param(k)]

    n = len(records)
    steps_per_epoch = math.ceil(n / tcfg.batch_size)
    total = steps_per_epoch * tcfg.epochs
    shuffle_rng = np.random.default_rng([tcfg.seed, 1])
    dropout_rng = np.random.default_rng([tcfg.seed, 2])
    state = AdamWState()
    result = TrainResult(params, cfg, tcfg, eval_records=eval_records)
    step = 0
    for epoch in range(tcfg.epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        lr = 0.0
        for s in range(0, n, tcfg.batch_size):
            b = order[s:s + tcfg.batch_size]
            loss, grads = E.value_and_grad(params, cfg, ids[b], mask[b], y[b], dropout_rng)
            step += 1
            lr = lr_schedule(step, total + 1, tcfg.warmup_fraction, tcfg.learning_rate)
            adamw_step(params, grads, state, tcfg, lr, trainable)
            losses.append(loss)
        stats = EpochStats(epoch + 1, float(np.mean(losses)), lr=lr)
        if eval_records:
            probs, eval_loss = evaluate(params, cfg, eval_records, vocab)
            stats.eval_loss = eval_loss
            stats.eval_accuracy = float((probs.argmax(1) == _labels(eval_records)).mean())
        result.trace.append(stats)
    return result


@dataclass
class PretrainResult:
    params: E.Params
    losses: list[float]


def mask_tokens(ids: np.ndarray, mask: np.ndarray, vocab_size: int, mask_prob: float,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """BERT-style corruption: returns (corrupted ids, bool array of target positions).

    Only real, non-special tokens are eligible; a chosen token becomes [MASK]
    80% of the time, a random token 10%, and stays unchanged otherwise.
    """
    eligible = (mask == 1) & (ids >= N_SPECIAL)
    chosen = eligible & (rng.random(ids.shape) < mask_prob)
    roll = rng.random(ids.shape)
    randoms = rng.integers(N_SPECIAL, max(vocab_size, N_SPECIAL + 1), size=ids.shape)
    out = ids.copy()
    out[chosen & (roll < 0.8)] = MASK
    swap = chosen & (roll >= 0.8) & (roll < 0.9)
    out[swap] = randoms[swap]
    return out, chosen


def mlm_value_and_grad(params: E.Params, cfg: ModelConfig, ids, mask, targets, chosen, rng=None):
    """Masked-token cross-entropy with the output projection tied to the
    token embeddings (plus a free ``mlm.bias``)."""
    hidden, cache = E.encoder_forward(params, cfg, ids, mask, rng)
    hs = hidden[chosen]
    tok = params["embeddings.token"]
    logits = hs @ tok.T + params["mlm.bias"]
    loss, dlogits = E.cross_entropy(logits, targets[chosen])
    grads = E.zeros_like_params(params)
    grads["embeddings.token"] += dlogits.T @ hs
    grads["mlm.bias"] += dlogits.sum(0)
    dhidden = np.zeros_like(hidden)
    dhidden[chosen] = dlogits @ tok
    E.encoder_backward(params, cfg, cache, dhidden, grads)
    return loss, grads


def pretrain_mlm(records: Sequence[CorpusRecord], vocab: Vocabulary, model_config: ModelConfig,
                 train_config: TrainConfig, mask_prob: float = 0.15,
                 init_params: Optional[E.Params] = None) -> PretrainResult:
    """Masked-token pretraining of the encoder; labels are ignored.

    The returned parameters can seed :func:`train` via ``init_params``.
    """
    if not records:
        raise EmptyDataset("no pretraining records")
    if mask_prob <= 0:
        raise NoMaskedPositions("mask_prob must be > 0")
    cfg, tcfg = model_config, train_config
    ids, mask = encode_batch([r.text for r in records], vocab, cfg.max_len)
    params = _seed_params(cfg, tcfg, init_params)
    params["mlm.bias"] = np.zeros(cfg.vocab_size, dtype=tcfg.dtype)
    names = [k for k in params if E.is_encoder_param(k) or k == "mlm.bias"]

    n = len(records)
    total = math.ceil(n / tcfg.batch_size) * tcfg.epochs
    rng = np.random.default_rng([tcfg.seed, 3])
    dropout_rng = np.random.default_rng([tcfg.seed, 4])
    state = AdamWState()
    losses = []
    step = 0
    for _ in range(tcfg.epochs):
        order = rng.permutation(n)
        epoch_losses, weights = [], []
        for s in range(0, n, tcfg.batch_size):
            b = order[s:s + tcfg.batch_size]
            corrupted, chosen = mask_tokens(ids[b], mask[b], cfg.vocab_size, mask_prob, rng)
            step += 1
            if not chosen.any():
                continue
            loss, grads = mlm_value_and_grad(params, cfg, corrupted, mask[b], ids[b], chosen, dropout_rng)
            lr = lr_schedule(step, total + 1, tcfg.warmup_fraction, tcfg.learning_rate)
            adamw_step(params, grads, state, tcfg, lr, names)
            epoch_losses.append(loss)
            weights.append(int(chosen.sum()))
        if not weights:
            raise NoMaskedPositions("no token was selected for masking in a whole epoch")
        losses.append(float(np.average(epoch_losses, weights=weights)))
    params.pop("mlm.bias")
    return PretrainResult(params, losses)
