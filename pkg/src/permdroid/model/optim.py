"""AdamW with decoupled weight decay and a linear warmup/decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .config import TrainConfig
from .encoder import Params, no_weight_decay


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: Params, grads: Params, state: AdamWState, cfg: TrainConfig, lr: float,
               names: Optional[Iterable[str]] = None) -> tuple[Params, AdamWState]:
    """One in-place AdamW update of ``names`` (default: every gradient).

    p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p); biases and norm
    parameters are not decayed. Parameters outside ``names`` are untouched.
    """
    b1, b2, eps, wd = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay
    state.step += 1
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name in (grads.keys() if names is None else names):
        p, g = params[name], grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        if wd and not no_weight_decay(name):
            update = update + wd * p
        p -= lr * update
    return params, state


def lr_schedule(step: int, total_steps: int, warmup_fraction: float, base_lr: float) -> float:
    """Linear 0 -> base_lr over the warmup steps, then linear decay to 0."""
    if total_steps <= 0 or step >= total_steps:
        return 0.0
    warmup = int(warmup_fraction * total_steps)
    if step < warmup:
        return base_lr * step / warmup
    return base_lr * (total_steps - step) / (total_steps - warmup)
