import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from permdroid.corpus import CorpusRecord, synth_generate
from permdroid.errors import (
    BadLabel,
    BadMagic,
    EmptyDataset,
    HeaderMismatch,
    NoMaskedPositions,
    NonFiniteActivation,
    ShapeMismatch,
)
from permdroid.model import (
    LAST_HIDDEN_MEAN,
    POOLER,
    AdamWState,
    ModelConfig,
    TrainConfig,
    adamw_step,
    backward,
    forward,
    init_params,
    load_checkpoint,
    load_configs,
    loss,
    lr_schedule,
    predict,
    pretrain_mlm,
    save_checkpoint,
    train,
    value_and_grad,
)
from permdroid.model import encoder as E
from permdroid.model.encoder import is_encoder_param, layer_norm
from permdroid.model.gradcheck import check_gradients
from permdroid.model.training import mask_tokens
from permdroid.tokenizer import CLS, N_SPECIAL, PAD, SEP, build_vocab, encode_batch


def tiny(pooling=POOLER, **kw):
    base = dict(vocab_size=12, d_model=8, n_layers=1, n_heads=2, d_ff=16, max_len=4,
                dropout=0.0, pooling=pooling, head_hidden=6)
    base.update(kw)
    return ModelConfig(**base)


def batch(rng, b, t, vocab=12, lengths=None):
    ids = rng.integers(N_SPECIAL, vocab, size=(b, t))
    ids[:, 0] = CLS
    mask = np.ones((b, t), dtype=np.int64)
    for i, n in enumerate(lengths or [t] * b):
        ids[i, n - 1] = SEP
        ids[i, n:] = PAD
        mask[i, n:] = 0
    return ids, mask


# ------------------------------------------------------------------ forward

@pytest.mark.parametrize("pooling", [POOLER, LAST_HIDDEN_MEAN])
def test_shapes(pooling):
    cfg = ModelConfig(vocab_size=20, d_model=16, n_layers=2, n_heads=4, d_ff=32, max_len=8, pooling=pooling)
    p = init_params(cfg, 0)
    ids, mask = batch(np.random.default_rng(0), 2, 8, 20, [8, 5])
    out = forward(p, cfg, ids, mask)
    assert out["hidden"].shape == (2, 8, 16)
    assert out["pooled"].shape == (2, 16)
    assert out["logits"].shape == out["probs"].shape == (2, 2)
    assert [a.shape for a in out["attentions"]] == [(2, 4, 8, 8)] * 2


def test_attention_and_softmax_rows_normalised():
    cfg = ModelConfig(vocab_size=30, max_len=16)
    p = init_params(cfg, 3)
    ids, mask = batch(np.random.default_rng(1), 5, 16, 30, [16, 9, 4, 2, 12])
    out = forward(p, cfg, ids, mask)
    for att in out["attentions"]:
        np.testing.assert_allclose(att.sum(-1), 1.0, atol=1e-6)
        # padding keys receive no attention
        assert np.all(att * (1 - mask)[:, None, None, :] == 0)
    np.testing.assert_allclose(out["probs"].sum(-1), 1.0, atol=1e-6)


def test_layer_norm_statistics():
    x = np.random.default_rng(0).normal(3, 5, size=(4, 7, 32))
    y, (xhat, _, _) = layer_norm(x, np.ones(32), np.zeros(32))
    assert np.abs(xhat.mean(-1)).max() < 1e-5
    assert np.abs(xhat.var(-1) - 1).max() < 1e-4


def test_zero_weight_head():
    cfg = ModelConfig(vocab_size=20, d_model=16, n_heads=4, max_len=8)
    p = init_params(cfg, 0)
    p["head.fc1.weight"][:] = 0
    p["head.fc2.weight"][:] = 0
    p["head.fc2.bias"][:] = (0.3, -0.3)
    out = forward(p, cfg, *batch(np.random.default_rng(0), 3, 8, 20))
    np.testing.assert_allclose(out["logits"], [[0.3, -0.3]] * 3, atol=1e-7)
    e = np.exp([0.3, -0.3])
    np.testing.assert_allclose(out["probs"], [e / e.sum()] * 3, rtol=1e-6)


@pytest.mark.parametrize("pooling", [POOLER, LAST_HIDDEN_MEAN])
def test_padding_invariance(pooling):
    cfg = ModelConfig(vocab_size=30, max_len=32, pooling=pooling)
    p = init_params(cfg, 5)
    ids, mask = batch(np.random.default_rng(2), 4, 10, 30, [10, 7, 3, 2])
    base = forward(p, cfg, ids, mask)
    pad = np.zeros((4, 22), dtype=ids.dtype)
    wide = forward(p, cfg, np.hstack([ids, pad]), np.hstack([mask, pad]))
    np.testing.assert_allclose(wide["logits"], base["logits"], atol=1e-6)
    np.testing.assert_allclose(wide["pooled"], base["pooled"], atol=1e-6)


def test_poolings_differ_only_in_pooled_vector():
    a, b = tiny(POOLER), tiny(LAST_HIDDEN_MEAN)
    p = init_params(a, 0, np.float64)
    ids, mask = batch(np.random.default_rng(0), 3, 4, lengths=[4, 3, 2])
    oa, ob = forward(p, a, ids, mask), forward(p, b, ids, mask)
    np.testing.assert_array_equal(oa["hidden"], ob["hidden"])
    assert oa["pooled"].shape == ob["pooled"].shape
    m = mask[..., None]
    np.testing.assert_allclose(ob["pooled"], (ob["hidden"] * m).sum(1) / m.sum(1))
    np.testing.assert_allclose(oa["pooled"], np.tanh(oa["hidden"][:, 0] @ p["pooler.weight"] + p["pooler.bias"]))


def test_input_errors():
    cfg = tiny()
    p = init_params(cfg, 0)
    ids, mask = batch(np.random.default_rng(0), 2, 4)
    with pytest.raises(ShapeMismatch):
        forward(p, cfg, np.hstack([ids, ids]), np.hstack([mask, mask]))  # T > max_len
    with pytest.raises(ShapeMismatch):
        forward(p, cfg, ids, mask[:, :3])
    with pytest.raises(ShapeMismatch):
        forward(p, cfg, ids + 100, mask)
    p["head.fc2.bias"][:] = np.inf
    with pytest.raises(NonFiniteActivation):
        forward(p, cfg, ids, mask)


# ------------------------------------------------------------------ loss

def test_loss_values():
    assert loss(np.zeros((1, 2)), [0]) == pytest.approx(math.log(2), abs=1e-12)
    assert loss(np.array([[10.0, -10.0]]), [0]) == pytest.approx(math.log1p(math.exp(-20)), rel=1e-6)
    assert loss(np.array([[10.0, -10.0]]), [0]) == pytest.approx(2.06e-9, rel=1e-2)
    with pytest.raises(BadLabel):
        loss(np.zeros((1, 2)), [2])


# ------------------------------------------------------------------ gradients

@pytest.mark.parametrize("pooling", [POOLER, LAST_HIDDEN_MEAN])
@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(pooling, seed):
    cfg = tiny(pooling)
    p = init_params(cfg, seed, np.float64)
    ids, mask = batch(np.random.default_rng(seed), 3, 4, lengths=[4, 3, 2])
    errs = check_gradients(p, cfg, ids, mask, np.array([0, 1, 1]))
    assert max(errs.values()) < 1e-4, errs


@pytest.mark.parametrize("pooling", [POOLER, LAST_HIDDEN_MEAN])
def test_gradients_with_large_init(pooling):
    # large weights make every gradient clearly non-zero (saturation, sharp attention)
    cfg = tiny(pooling, n_layers=2)
    p = init_params(cfg, 11, np.float64, std=0.5)
    ids, mask = batch(np.random.default_rng(11), 3, 4, lengths=[4, 3, 2])
    errs = check_gradients(p, cfg, ids, mask, np.array([1, 0, 1]))
    assert max(errs.values()) < 1e-4, errs


def test_frozen_encoder_gradients_are_zero():
    cfg = tiny(fine_tune_encoder=False)
    p = init_params(cfg, 0, np.float64)
    ids, mask = batch(np.random.default_rng(0), 3, 4)
    g = backward(p, cfg, ids, mask, [0, 1, 0])
    for name, grad in g.items():
        if is_encoder_param(name):
            assert not grad.any(), name
    assert g["head.fc2.weight"].any()


def test_mean_reduction_over_batch():
    cfg = tiny()
    p = init_params(cfg, 1, np.float64, std=0.3)
    ids, mask = batch(np.random.default_rng(4), 2, 4)
    x, y = (ids[:1], mask[:1]), (ids[1:], mask[1:])
    gx = backward(p, cfg, *x, [1])
    gy = backward(p, cfg, *y, [0])
    gxx = backward(p, cfg, np.vstack([x[0], x[0]]), np.vstack([x[1], x[1]]), [1, 1])
    gxy = backward(p, cfg, ids, mask, [1, 0])
    gxxy = backward(p, cfg, np.vstack([x[0], ids]), np.vstack([x[1], mask]), [1, 1, 0])
    for k in p:
        np.testing.assert_allclose(gxx[k], gx[k], atol=1e-12)
        np.testing.assert_allclose(gxy[k], (gx[k] + gy[k]) / 2, atol=1e-12)
        # duplicating x: y's share drops from 1/2 to 1/3
        np.testing.assert_allclose(gxxy[k], (2 * gx[k] + gy[k]) / 3, atol=1e-12)


# ------------------------------------------------------------------ optimiser

def test_adamw_zero_gradient_pure_decay():
    tc = TrainConfig(weight_decay=0.01)
    p = {"w.weight": np.array([1.0, -2.0]), "w.bias": np.array([3.0]), "x_norm.weight": np.array([1.5])}
    g = {k: np.zeros_like(v) for k, v in p.items()}
    adamw_step(p, g, AdamWState(), tc, lr=0.1)
    np.testing.assert_allclose(p["w.weight"], np.array([1.0, -2.0]) * (1 - 0.001), rtol=1e-15)
    assert p["w.bias"][0] == 3.0 and p["x_norm.weight"][0] == 1.5


def test_adamw_first_step_scalar():
    tc = TrainConfig(weight_decay=0.0)
    p = {"w.weight": np.array([0.0])}
    adamw_step(p, {"w.weight": np.array([1.0])}, AdamWState(), tc, lr=0.01)
    assert p["w.weight"][0] == pytest.approx(-0.01 / (1 + 1e-8), rel=1e-12)


def test_adamw_degenerate_betas():
    tc = TrainConfig(adam_beta1=0.0, adam_beta2=0.0, weight_decay=0.1)
    p0 = np.array([0.5, -1.0, 2.0])
    g = np.array([0.2, -3.0, 0.0])
    p = {"w.weight": p0.copy()}
    state = AdamWState()
    adamw_step(p, {"w.weight": g}, state, tc, lr=0.05)
    expected = p0 - 0.05 * g / (np.abs(g) + 1e-8) - 0.05 * 0.1 * p0
    np.testing.assert_allclose(p["w.weight"], expected, rtol=1e-12)
    assert state.step == 1


def test_adamw_updates_only_named():
    p = {"a.weight": np.ones(2), "b.weight": np.ones(2)}
    g = {k: np.ones(2) for k in p}
    adamw_step(p, g, AdamWState(), TrainConfig(), 0.1, names=["a.weight"])
    assert (p["b.weight"] == 1).all() and (p["a.weight"] < 1).all()


def test_schedule():
    assert lr_schedule(0, 100, 0.1, 1e-3) == 0.0
    assert lr_schedule(10, 100, 0.1, 1e-3) == pytest.approx(1e-3)
    assert lr_schedule(5, 100, 0.1, 1e-3) == pytest.approx(5e-4)
    assert lr_schedule(55, 100, 0.1, 1e-3) == pytest.approx(5e-4)
    assert lr_schedule(100, 100, 0.1, 1e-3) == 0.0
    assert lr_schedule(0, 100, 0.0, 1e-3) == pytest.approx(1e-3)


@given(total=st.integers(1, 500), frac=st.floats(0, 1), step=st.integers(0, 500))
def test_schedule_bounded(total, frac, step):
    lr = lr_schedule(min(step, total), total, frac, 2e-3)
    assert 0.0 <= lr <= 2e-3


# ------------------------------------------------------------------ training

@pytest.fixture(scope="module")
def small_corpus():
    records = synth_generate(40, 40, seed=0)
    return records, build_vocab(records)


def quick(vocab, **kw):
    mc = ModelConfig(vocab_size=len(vocab), d_model=16, n_layers=1, n_heads=2, d_ff=32, max_len=24,
                     head_hidden=8, **kw)
    return mc, TrainConfig(epochs=2, batch_size=16, seed=3)


def test_training_deterministic(small_corpus):
    records, vocab = small_corpus
    mc, tc = quick(vocab)
    a = train(records, vocab, mc, tc)
    b = train(records, vocab, mc, tc)
    assert [s.train_loss for s in a.trace] == [s.train_loss for s in b.trace]
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert len(a.eval_records) == 16  # eval_fraction 0.2 of 80


def test_empty_dataset(small_corpus):
    _, vocab = small_corpus
    with pytest.raises(EmptyDataset):
        train([], vocab, *quick(vocab))


def test_unlabelled_training_record(small_corpus):
    records, vocab = small_corpus
    with pytest.raises(BadLabel):
        train([CorpusRecord("x", "a")], vocab, *quick(vocab), eval_records=[])


def test_frozen_training_leaves_encoder_bit_identical(small_corpus):
    records, vocab = small_corpus
    mc, tc = quick(vocab, fine_tune_encoder=False)
    before = init_params(mc, tc.seed, tc.dtype)
    after = train(records, vocab, mc, tc).params
    for k in before:
        if is_encoder_param(k):
            assert np.array_equal(before[k], after[k]), k
        elif k.startswith("head."):
            assert not np.array_equal(before[k], after[k]), k


def test_f64_precision(small_corpus):
    records, vocab = small_corpus
    mc, tc = quick(vocab)
    res = train(records, vocab, mc, tc.replace(precision="f64", epochs=1))
    assert all(v.dtype == np.float64 for v in res.params.values())


# ------------------------------------------------------------------ MLM

def test_mask_tokens_never_masks_specials():
    rng = np.random.default_rng(0)
    ids, mask = batch(rng, 50, 12, 40, lengths=list(rng.integers(2, 13, size=50)))
    corrupted, chosen = mask_tokens(ids, mask, 40, 0.5, rng)
    assert not chosen[ids < N_SPECIAL].any()
    assert not chosen[mask == 0].any()
    assert np.array_equal(corrupted[~chosen], ids[~chosen])
    frac_mask = (corrupted[chosen] == 4).mean()
    assert 0.7 < frac_mask < 0.9


def test_mlm_loss_decreases_on_repeated_sequence():
    text = "android.permission.SEND_SMS android.permission.INTERNET com.x.CUSTOM_PERM"
    records = [CorpusRecord(f"{i:04d}", text) for i in range(64)]
    vocab = build_vocab(records)
    mc = ModelConfig(vocab_size=len(vocab), d_model=16, n_layers=1, n_heads=2, d_ff=32, max_len=16,
                     head_hidden=8, dropout=0.0)
    tc = TrainConfig(epochs=3, batch_size=8, seed=0, learning_rate=3e-3)
    res = pretrain_mlm(records, vocab, mc, tc)
    assert len(res.losses) == 3
    assert all(b <= a + 1e-3 for a, b in zip(res.losses, res.losses[1:]))
    assert "mlm.bias" not in res.params
    # the pretrained encoder seeds fine-tuning
    labelled = [CorpusRecord(r.id, r.text, i % 2) for i, r in enumerate(records)]
    train(labelled, vocab, mc, tc.replace(epochs=1), init_params=res.params)


def test_mlm_zero_mask_prob(small_corpus):
    records, vocab = small_corpus
    with pytest.raises(NoMaskedPositions):
        pretrain_mlm(records, vocab, *quick(vocab), mask_prob=0.0)


# ------------------------------------------------------------------ prediction

def _head_only(vocab, b2):
    mc = ModelConfig(vocab_size=len(vocab), d_model=16, n_heads=2, max_len=24)
    p = init_params(mc, 0)
    p["head.fc2.weight"][:] = 0
    p["head.fc2.bias"][:] = b2
    return mc, p


def test_predict_argmax_and_tie(small_corpus):
    records, vocab = small_corpus
    mc, p = _head_only(vocab, (0.3, -0.3))
    assert {pr.label for pr in predict(p, mc, records[:5], vocab)} == {0}
    mc, p = _head_only(vocab, (0.0, 0.0))
    preds = predict(p, mc, records[:5], vocab)
    assert all(pr.label == 0 and pr.probs == (0.5, 0.5) for pr in preds)


def test_batched_prediction_matches_single(small_corpus):
    records, vocab = small_corpus
    mc = ModelConfig(vocab_size=len(vocab), d_model=16, n_heads=2, max_len=24)
    p = init_params(mc, 9)
    together = predict(p, mc, records, vocab, batch_size=64)
    alone = [predict(p, mc, [r], vocab)[0] for r in records]
    assert [a.label for a in together] == [b.label for b in alone]
    np.testing.assert_allclose([a.probs for a in together], [b.probs for b in alone], rtol=0, atol=1e-7)


# ------------------------------------------------------------------ checkpoints and configs

def test_checkpoint_round_trip(tmp_path):
    cfg = tiny()
    tc = TrainConfig(seed=4)
    for dtype in (np.float32, np.float64):
        p = init_params(cfg, 1, dtype)
        path = tmp_path / "m.ptc"
        save_checkpoint(path, p, cfg, tc)
        q, mc, tc2 = load_checkpoint(path)
        assert mc == cfg and tc2 == tc
        assert set(q) == set(p)
        assert all(q[k].dtype == p[k].dtype and q[k].tobytes() == p[k].tobytes() for k in p)


def test_checkpoint_errors(tmp_path):
    cfg = tiny()
    path = tmp_path / "m.ptc"
    save_checkpoint(path, init_params(cfg, 0), cfg)
    data = path.read_bytes()
    (tmp_path / "trunc.ptc").write_bytes(data[:-5])
    with pytest.raises(HeaderMismatch):
        load_checkpoint(tmp_path / "trunc.ptc")
    (tmp_path / "extra.ptc").write_bytes(data + b"\0")
    with pytest.raises(HeaderMismatch):
        load_checkpoint(tmp_path / "extra.ptc")
    (tmp_path / "magic.ptc").write_bytes(b"PTC2" + data[4:])
    with pytest.raises(BadMagic):
        load_checkpoint(tmp_path / "magic.ptc")
    (tmp_path / "hdr.ptc").write_bytes(data[:12] + b"]" + data[13:])
    with pytest.raises(HeaderMismatch):
        load_checkpoint(tmp_path / "hdr.ptc")


def test_checkpoint_bytes_deterministic(tmp_path):
    cfg = tiny()
    save_checkpoint(tmp_path / "a", init_params(cfg, 2), cfg)
    save_checkpoint(tmp_path / "b", init_params(cfg, 2), cfg)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"model": {"d_model": 32, "n_heads": 4}, "train": {"epochs": 2}}')
    mc, tc = load_configs(path, vocab_size=50)
    assert (mc.vocab_size, mc.d_model, tc.epochs) == (50, 32, 2)
    path.write_text('{"model": {"depth": 3}}')
    with pytest.raises(ValueError):
        load_configs(path, 50)


def test_config_invariants():
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=10, d_model=10, n_heads=3)
    with pytest.raises(ValueError):
        TrainConfig(warmup_fraction=1.5)
    big = ModelConfig.bert_base()
    assert (big.d_model, big.n_layers, big.head_hidden) == (768, 12, 128)
