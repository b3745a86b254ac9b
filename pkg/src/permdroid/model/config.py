from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from typing import Union

POOLER = "pooler"
LAST_HIDDEN_MEAN = "last_hidden_mean"
POOLING_MODES = (POOLER, LAST_HIDDEN_MEAN)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 64
    dropout: float = 0.1
    pooling: str = POOLER
    head_hidden: int = 128
    n_classes: int = 2
    fine_tune_encoder: bool = True

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}")
        if self.head_hidden < 1 or self.n_classes != 2:
            raise ValueError("head_hidden >= 1 and n_classes == 2 required")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def bert_base(cls, vocab_size: int = 30522, **kw) -> "ModelConfig":
        """bert-base-sized encoder with the 768 -> 128 -> 2 head."""
        base = dict(d_model=768, n_layers=12, n_heads=12, d_ff=3072, max_len=512)
        base.update(kw)
        return cls(vocab_size=vocab_size, **base)

    def replace(self, **kw) -> "ModelConfig":
        d = asdict(self)
        d.update(kw)
        return ModelConfig(**d)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3  # 2e-5 for a pretrained bert-base
    batch_size: int = 16
    epochs: int = 5
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    precision: str = "f32"
    eval_fraction: float = 0.2

    def __post_init__(self):
        if not 0 <= self.warmup_fraction <= 1:
            raise ValueError("warmup_fraction must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.precision not in ("f32", "f64"):
            raise ValueError("precision must be f32 or f64")

    @property
    def dtype(self):
        import numpy as np
        return np.float32 if self.precision == "f32" else np.float64

    def replace(self, **kw) -> "TrainConfig":
        d = asdict(self)
        d.update(kw)
        return TrainConfig(**d)


def config_from_dict(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


def load_configs(path: Union[str, os.PathLike], vocab_size: int) -> tuple[ModelConfig, TrainConfig]:
    """JSON file ``{"model": {...}, "train": {...}}``; both sections optional."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    model = dict(d.get("model", {}))
    model.setdefault("vocab_size", vocab_size)
    return config_from_dict(ModelConfig, model), config_from_dict(TrainConfig, d.get("train", {}))
