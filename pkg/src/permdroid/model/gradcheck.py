"""Central finite-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from . import encoder as E
from .config import ModelConfig


def numeric_grad(params: E.Params, cfg: ModelConfig, ids, mask, labels, eps: float = 1e-5) -> E.Params:
    """Central differences of the mean loss w.r.t. every parameter entry.

    Uses only the forward pass, so it shares no code with the backward pass.
    """
    def f() -> float:
        logits = E.forward(params, cfg, ids, mask)["logits"]
        return E.cross_entropy(logits, labels)[0]

    out = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = f()
            flat[i] = orig - eps
            minus = f()
            flat[i] = orig
            gflat[i] = (plus - minus) / (2 * eps)
        out[name] = g
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).

    The floor keeps structurally-zero gradients (e.g. the key bias, which
    softmax is invariant to) from turning round-off into huge ratios.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max()) if analytic.size else 0.0


def check_gradients(params: E.Params, cfg: ModelConfig, ids, mask, labels, eps: float = 1e-5
                    ) -> dict[str, float]:
    """Per-tensor relative error between backward() and finite differences."""
    analytic = E.backward(params, cfg, ids, mask, labels)
    numeric = numeric_grad(params, cfg, ids, mask, labels, eps)
    return {k: relative_error(analytic[k], numeric[k]) for k in params}
