"""Transformer encoder + classification head in plain numpy, with an exact
hand-derived backward pass.

Parameters live in a flat ``dict[str, ndarray]``. Activations are row-major
``(batch, time, d_model)``; weights are stored ``(in, out)`` so every linear
map is ``x @ W + b``.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..errors import NonFiniteActivation, ShapeMismatch
from .config import LAST_HIDDEN_MEAN, POOLER, ModelConfig

Params = dict[str, np.ndarray]

LN_EPS = 1e-12
MASK_NEG = -1e9
_GELU_C = math.sqrt(2.0 / math.pi)


def is_encoder_param(name: str) -> bool:
    return name.startswith("embeddings.") or name.startswith("layer")


def no_weight_decay(name: str) -> bool:
    return name.endswith(".bias") or "_norm." in name


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2
    return out * std


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32, std: float = 0.02) -> Params:
    """Truncated-normal weights (sigma ``std``), zero biases, unit norm scales."""
    rng = np.random.default_rng(seed)
    d, f = cfg.d_model, cfg.d_ff
    p: Params = {
        "embeddings.token": _trunc_normal(rng, (cfg.vocab_size, d), std),
        "embeddings.position": _trunc_normal(rng, (cfg.max_len, d), std),
    }
    for l in range(cfg.n_layers):
        pre = f"layer{l}."
        for proj in ("q", "k", "v", "o"):
            p[pre + f"attn.{proj}.weight"] = _trunc_normal(rng, (d, d), std)
            p[pre + f"attn.{proj}.bias"] = np.zeros(d)
        p[pre + "attn_norm.weight"] = np.ones(d)
        p[pre + "attn_norm.bias"] = np.zeros(d)
        p[pre + "ffn.in.weight"] = _trunc_normal(rng, (d, f), std)
        p[pre + "ffn.in.bias"] = np.zeros(f)
        p[pre + "ffn.out.weight"] = _trunc_normal(rng, (f, d), std)
        p[pre + "ffn.out.bias"] = np.zeros(d)
        p[pre + "ffn_norm.weight"] = np.ones(d)
        p[pre + "ffn_norm.bias"] = np.zeros(d)
    p["pooler.weight"] = _trunc_normal(rng, (d, d), std)
    p["pooler.bias"] = np.zeros(d)
    p["head.fc1.weight"] = _trunc_normal(rng, (d, cfg.head_hidden), std)
    p["head.fc1.bias"] = np.zeros(cfg.head_hidden)
    p["head.fc2.weight"] = _trunc_normal(rng, (cfg.head_hidden, cfg.n_classes), std)
    p["head.fc2.bias"] = np.zeros(cfg.n_classes)
    return {k: np.ascontiguousarray(v, dtype=dtype) for k, v in p.items()}


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_params(cfg.replace(), 0, np.float32).items()}


# ----------------------------------------------------------------- primitives

def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def _gelu_tanh(u: np.ndarray) -> np.ndarray:
    u2 = u * u
    return np.tanh(_GELU_C * u * (1.0 + 0.044715 * u2))


def gelu(u: np.ndarray, t: Optional[np.ndarray] = None) -> np.ndarray:
    """tanh approximation of GELU (the original BERT activation)."""
    if t is None:
        t = _gelu_tanh(u)
    return 0.5 * u * (1.0 + t)


def gelu_grad(u: np.ndarray, t: Optional[np.ndarray] = None) -> np.ndarray:
    if t is None:
        t = _gelu_tanh(u)
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * u * u)


def layer_norm(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def layer_norm_backward(dy, cache):
    xhat, inv, g = cache
    n = xhat.shape[-1]
    dxhat = dy * g
    dx = inv / n * (n * dxhat - dxhat.sum(-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(-1, keepdims=True))
    return dx, (dy * xhat).reshape(-1, n).sum(0), dy.reshape(-1, n).sum(0)


def _dropout(x, rate, rng):
    if rng is None or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * keep, keep


def _split_heads(x, h):
    b, t, d = x.shape
    return x.reshape(b, t, h, d // h).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _linear_grads(x, dy, p, grads, name):
    d_in, d_out = x.shape[-1], dy.shape[-1]
    grads[name + ".weight"] += x.reshape(-1, d_in).T @ dy.reshape(-1, d_out)
    grads[name + ".bias"] += dy.reshape(-1, d_out).sum(0)
    return dy @ p[name + ".weight"].T


# -------------------------------------------------------------------- encoder

def _check_inputs(cfg: ModelConfig, ids: np.ndarray, mask: np.ndarray) -> None:
    if ids.ndim != 2 or mask.shape != ids.shape:
        raise ShapeMismatch(f"ids {ids.shape} and mask {mask.shape} must be equal 2-D shapes")
    if ids.shape[1] > cfg.max_len:
        raise ShapeMismatch(f"sequence length {ids.shape[1]} exceeds max_len {cfg.max_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ShapeMismatch("token id outside vocabulary")


def encoder_forward(params: Params, cfg: ModelConfig, ids, mask, rng=None):
    """Token + position embeddings followed by post-norm transformer layers.

    Passing ``rng`` enables dropout (training mode). Returns the final hidden
    states and a cache for :func:`encoder_backward`.
    """
    ids = np.asarray(ids)
    mask = np.asarray(mask)
    _check_inputs(cfg, ids, mask)
    dtype = params["embeddings.token"].dtype
    B, T = ids.shape
    H = cfg.n_heads
    dh = cfg.d_model // H
    scale = dtype.type(1.0 / math.sqrt(dh))

    x = params["embeddings.token"][ids] + params["embeddings.position"][:T]
    x, keep0 = _dropout(x, cfg.dropout, rng)
    bias = ((1 - mask.astype(dtype)) * dtype.type(MASK_NEG))[:, None, None, :]

    layers = []
    for l in range(cfg.n_layers):
        pre = f"layer{l}."
        q = x @ params[pre + "attn.q.weight"] + params[pre + "attn.q.bias"]
        k = x @ params[pre + "attn.k.weight"] + params[pre + "attn.k.bias"]
        v = x @ params[pre + "attn.v.weight"] + params[pre + "attn.v.bias"]
        qh, kh, vh = _split_heads(q, H), _split_heads(k, H), _split_heads(v, H)
        probs = softmax(qh @ kh.transpose(0, 1, 3, 2) * scale + bias)
        ctx = _merge_heads(probs @ vh)
        a = ctx @ params[pre + "attn.o.weight"] + params[pre + "attn.o.bias"]
        a, keep1 = _dropout(a, cfg.dropout, rng)
        h1, ln1 = layer_norm(x + a, params[pre + "attn_norm.weight"], params[pre + "attn_norm.bias"])
        u = h1 @ params[pre + "ffn.in.weight"] + params[pre + "ffn.in.bias"]
        t = _gelu_tanh(u)
        g = gelu(u, t)
        f = g @ params[pre + "ffn.out.weight"] + params[pre + "ffn.out.bias"]
        f, keep2 = _dropout(f, cfg.dropout, rng)
        out, ln2 = layer_norm(h1 + f, params[pre + "ffn_norm.weight"], params[pre + "ffn_norm.bias"])
        layers.append(dict(x=x, qh=qh, kh=kh, vh=vh, probs=probs, ctx=ctx, keep1=keep1, ln1=ln1,
                           h1=h1, u=u, t=t, g=g, keep2=keep2, ln2=ln2))
        x = out
    cache = dict(ids=ids, mask=mask, keep0=keep0, layers=layers, scale=scale)
    return x, cache


def encoder_backward(params: Params, cfg: ModelConfig, cache, dhidden, grads: Params) -> None:
    """Accumulate encoder/embedding gradients of ``dhidden`` into ``grads``."""
    H = cfg.n_heads
    dx = dhidden
    for l in reversed(range(cfg.n_layers)):
        pre = f"layer{l}."
        c = cache["layers"][l]
        dres2, dg2, db2 = layer_norm_backward(dx, c["ln2"])
        grads[pre + "ffn_norm.weight"] += dg2
        grads[pre + "ffn_norm.bias"] += db2
        df = dres2 if c["keep2"] is None else dres2 * c["keep2"]
        dgel = _linear_grads(c["g"], df, params, grads, pre + "ffn.out")
        du = dgel * gelu_grad(c["u"], c["t"])
        dh1 = dres2 + _linear_grads(c["h1"], du, params, grads, pre + "ffn.in")
        dres1, dg1, db1 = layer_norm_backward(dh1, c["ln1"])
        grads[pre + "attn_norm.weight"] += dg1
        grads[pre + "attn_norm.bias"] += db1
        da = dres1 if c["keep1"] is None else dres1 * c["keep1"]
        dctx = _split_heads(_linear_grads(c["ctx"], da, params, grads, pre + "attn.o"), H)
        probs = c["probs"]
        dprobs = dctx @ c["vh"].transpose(0, 1, 3, 2)
        dvh = probs.transpose(0, 1, 3, 2) @ dctx
        ds = probs * (dprobs - (dprobs * probs).sum(-1, keepdims=True)) * cache["scale"]
        dqh = ds @ c["kh"]
        dkh = ds.transpose(0, 1, 3, 2) @ c["qh"]
        x = c["x"]
        dx = dres1.copy()
        for proj, dproj in (("q", dqh), ("k", dkh), ("v", dvh)):
            dx += _linear_grads(x, _merge_heads(dproj), params, grads, pre + f"attn.{proj}")
    if cache["keep0"] is not None:
        dx = dx * cache["keep0"]
    ids = cache["ids"]
    T = ids.shape[1]
    d = dx.shape[-1]
    np.add.at(grads["embeddings.token"], ids.reshape(-1), dx.reshape(-1, d))
    grads["embeddings.position"][:T] += dx.sum(0)


# ----------------------------------------------------------------------- head

def head_forward(params: Params, cfg: ModelConfig, hidden, mask, rng=None):
    mask = np.asarray(mask)
    if cfg.pooling == POOLER:
        pooled = np.tanh(hidden[:, 0] @ params["pooler.weight"] + params["pooler.bias"])
        denom = None
    elif cfg.pooling == LAST_HIDDEN_MEAN:
        m = mask.astype(hidden.dtype)
        denom = m.sum(1, keepdims=True)
        pooled = (hidden * m[..., None]).sum(1) / denom
    else:
        raise ValueError(cfg.pooling)
    pd, keep = _dropout(pooled, cfg.dropout, rng)
    z1 = pd @ params["head.fc1.weight"] + params["head.fc1.bias"]
    r = np.maximum(z1, 0)
    logits = r @ params["head.fc2.weight"] + params["head.fc2.bias"]
    if not np.isfinite(logits).all():
        raise NonFiniteActivation("non-finite logits")
    cache = dict(hidden=hidden, mask=mask, pooled=pooled, pd=pd, keep=keep, z1=z1, r=r, denom=denom)
    return pooled, logits, cache


def head_backward(params: Params, cfg: ModelConfig, cache, dlogits, grads: Params):
    """Head/pooler gradients; returns d(loss)/d(hidden)."""
    dr = _linear_grads(cache["r"], dlogits, params, grads, "head.fc2")
    dz1 = dr * (cache["z1"] > 0)
    dpd = _linear_grads(cache["pd"], dz1, params, grads, "head.fc1")
    dpooled = dpd if cache["keep"] is None else dpd * cache["keep"]
    hidden = cache["hidden"]
    dhidden = np.zeros_like(hidden)
    if cfg.pooling == POOLER:
        dz = dpooled * (1 - cache["pooled"] ** 2)
        dhidden[:, 0] = _linear_grads(hidden[:, 0], dz, params, grads, "pooler")
    else:
        m = cache["mask"].astype(hidden.dtype)
        dhidden += (dpooled / cache["denom"])[:, None, :] * m[..., None]
    return dhidden


# ---------------------------------------------------------------- full model

def forward(params: Params, cfg: ModelConfig, ids, mask, rng=None, return_cache: bool = False):
    """Encoder + pooling + two-layer head.

    Returns a dict with ``hidden`` (B,T,d), ``pooled`` (B,d), ``logits`` and
    ``probs`` (B,2) and per-layer ``attentions`` (B,H,T,T).
    """
    hidden, enc_cache = encoder_forward(params, cfg, ids, mask, rng)
    pooled, logits, head_cache = head_forward(params, cfg, hidden, mask, rng)
    out = dict(hidden=hidden, pooled=pooled, logits=logits, probs=softmax(logits),
               attentions=[c["probs"] for c in enc_cache["layers"]])
    if return_cache:
        return out, (enc_cache, head_cache)
    return out


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. ``logits``."""
    from ..errors import BadLabel
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"labels {labels.shape} vs logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise BadLabel(f"labels must lie in [0, {logits.shape[1]})")
    n = logits.shape[0]
    lsm = log_softmax(logits)
    loss = -lsm[np.arange(n), labels].mean()
    d = np.exp(lsm)
    d[np.arange(n), labels] -= 1
    return float(loss), d / n


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def value_and_grad(params: Params, cfg: ModelConfig, ids, mask, labels,
                   rng: Optional[np.random.Generator] = None) -> tuple[float, Params]:
    """Mean loss and exact gradients for every tensor in ``params``.

    With ``cfg.fine_tune_encoder`` false the encoder and embedding gradients
    are returned as zeros and the encoder backward pass is skipped.
    """
    out, (enc_cache, head_cache) = forward(params, cfg, ids, mask, rng, return_cache=True)
    loss, dlogits = cross_entropy(out["logits"], labels)
    grads = zeros_like_params(params)
    dhidden = head_backward(params, cfg, head_cache, dlogits, grads)
    if cfg.fine_tune_encoder:
        encoder_backward(params, cfg, enc_cache, dhidden, grads)
    return loss, grads


def backward(params: Params, cfg: ModelConfig, ids, mask, labels, rng=None) -> Params:
    return value_and_grad(params, cfg, ids, mask, labels, rng)[1]
