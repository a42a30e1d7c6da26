import math

import numpy as np
import pytest

from clinli import tensor as T
from clinli import tokenizer as tk
from clinli import transformer as tr
from clinli.errors import ConfigError, DataError
from clinli.synth import SynthSpec, generate_corpus

from oracles import finite_diff_grad, loop_multi_head_attention, rel_err


def small_vocab():
    return tk.Vocabulary(list(tk.SPECIAL_TOKENS) + list("abcdefgh"))


def tiny_model(seed=0, **overrides):
    cfg = dict(d_e=8, num_heads=2, num_blocks=2, d_ff=16, max_len=8, dropout=0.0)
    cfg.update(overrides)
    return tr.TransformerClassifier(tr.TransformerConfig(**cfg), small_vocab(), seed=seed)


class TestConfig:
    def test_head_divisibility_enforced(self):
        with pytest.raises(ConfigError):
            tr.TransformerConfig(d_e=10, num_heads=3)

    def test_defaults(self):
        cfg = tr.TransformerConfig()
        assert (cfg.d_e, cfg.num_heads, cfg.num_blocks, cfg.d_ff, cfg.max_len) == (64, 4, 2, 128, 64)
        assert cfg.d_k == 16


class TestEmbed:
    def test_zero_tables_give_zero(self):
        model = tiny_model()
        enc = model.encode("a", "b")
        zt = T.Tensor(np.zeros((len(model.vocab), 8)))
        zp = T.Tensor(np.zeros((8, 8)))
        zs = T.Tensor(np.zeros((2, 8)))
        out = tr.embed(enc, zt, zp, zs)
        np.testing.assert_array_equal(out.data, np.zeros((8, 8)))

    def test_rows_are_triple_sums(self):
        rng = np.random.default_rng(2)
        model = tiny_model()
        enc = model.encode("a b c", "d e")
        tok = rng.normal(size=(len(model.vocab), 8))
        pos = rng.normal(size=(8, 8))
        seg = rng.normal(size=(2, 8))
        out = tr.embed(enc, T.Tensor(tok), T.Tensor(pos), T.Tensor(seg)).data
        for i in range(8):
            expected = tok[enc.token_ids[i]] + pos[enc.position_ids[i]] + seg[enc.segment_ids[i]]
            np.testing.assert_allclose(out[i], expected, atol=0)

    def test_out_of_bounds_id_rejected(self):
        model = tiny_model()
        enc = model.encode("a", "b")
        enc.token_ids[1] = 999
        with pytest.raises(DataError):
            tr.embed(enc, model.token_table, model.pos_table, model.seg_table)


def random_attention_params(rng, d_e):
    return tr.AttentionParams(
        wq=T.Tensor(rng.uniform(-1, 1, (d_e, d_e)), requires_grad=True),
        bq=T.Tensor(rng.uniform(-0.2, 0.2, d_e), requires_grad=True),
        wk=T.Tensor(rng.uniform(-1, 1, (d_e, d_e)), requires_grad=True),
        bk=T.Tensor(rng.uniform(-0.2, 0.2, d_e), requires_grad=True),
        wv=T.Tensor(rng.uniform(-1, 1, (d_e, d_e)), requires_grad=True),
        bv=T.Tensor(rng.uniform(-0.2, 0.2, d_e), requires_grad=True),
        wo=T.Tensor(rng.uniform(-1, 1, (d_e, d_e)), requires_grad=True),
        bo=T.Tensor(rng.uniform(-0.2, 0.2, d_e), requires_grad=True),
    )


class TestMultiHeadAttention:
    def test_single_position_identity_projections(self):
        d_e = 4
        eye = T.Tensor(np.eye(d_e))
        zero = T.Tensor(np.zeros(d_e))
        p = tr.AttentionParams(wq=eye, bq=zero, wk=eye, bk=zero, wv=eye, bv=zero, wo=eye, bo=zero)
        x = T.Tensor(np.array([[0.3, -0.7, 1.1, 0.0]]))
        out = tr.multi_head_attention(x, [1], p, num_heads=1)
        np.testing.assert_allclose(out.data, x.data, atol=1e-12)

    def test_mask_forces_single_key(self):
        rng = np.random.default_rng(3)
        d_e, length = 4, 5
        p = random_attention_params(rng, d_e)
        x = T.Tensor(rng.uniform(-1, 1, (length, d_e)))
        mask = [0, 0, 1, 0, 0]
        out, weights = tr.multi_head_attention(x, mask, p, num_heads=2, return_weights=True)
        for w in weights:
            np.testing.assert_allclose(w[:, 2], 1.0, atol=1e-12)
            np.testing.assert_allclose(np.delete(w, 2, axis=1), 0.0, atol=1e-12)
        v = T.add(T.matmul(x, p.wv), p.bv).data
        expected = np.tile(np.concatenate([v[2, :2], v[2, 2:]]), (length, 1)) @ p.wo.data + p.bo.data
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(17)
        d_e, length = 4, 3
        p = random_attention_params(rng, d_e)
        x0 = rng.uniform(-1, 1, (length, d_e))
        mask = [1, 1, 1]
        out = tr.multi_head_attention(T.Tensor(x0), mask, p, num_heads=2)
        oracle = loop_multi_head_attention(
            x0, mask,
            p.wq.data, p.bq.data, p.wk.data, p.bk.data,
            p.wv.data, p.bv.data, p.wo.data, p.bo.data,
            num_heads=2,
        )
        assert np.max(np.abs(out.data - oracle)) <= 1e-10

    def test_attention_rows_stochastic_over_unmasked_keys(self):
        rng = np.random.default_rng(23)
        d_e, length = 8, 6
        p = random_attention_params(rng, d_e)
        x = T.Tensor(rng.uniform(-1, 1, (length, d_e)))
        mask = [1, 1, 1, 1, 0, 0]
        _, weights = tr.multi_head_attention(x, mask, p, num_heads=2, return_weights=True)
        for w in weights:
            np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)
            np.testing.assert_allclose(w[:, 4:], 0.0, atol=1e-12)


def random_block_params(rng, d_e, d_ff):
    return tr.BlockParams(
        attn=random_attention_params(rng, d_e),
        ln1_gain=T.Tensor(rng.uniform(0.5, 1.5, d_e), requires_grad=True),
        ln1_bias=T.Tensor(rng.uniform(-0.2, 0.2, d_e), requires_grad=True),
        ffn_w1=T.Tensor(rng.uniform(-1, 1, (d_e, d_ff)), requires_grad=True),
        ffn_b1=T.Tensor(rng.uniform(-0.2, 0.2, d_ff), requires_grad=True),
        ffn_w2=T.Tensor(rng.uniform(-1, 1, (d_ff, d_e)), requires_grad=True),
        ffn_b2=T.Tensor(rng.uniform(-0.2, 0.2, d_e), requires_grad=True),
        ln2_gain=T.Tensor(rng.uniform(0.5, 1.5, d_e), requires_grad=True),
        ln2_bias=T.Tensor(rng.uniform(-0.2, 0.2, d_e), requires_grad=True),
    )


class TestTransformerBlock:
    def test_zero_weights_still_finite(self):
        d_e, d_ff = 4, 8
        zero_mat = lambda *s: T.Tensor(np.zeros(s))
        bp = tr.BlockParams(
            attn=tr.AttentionParams(
                wq=zero_mat(d_e, d_e), bq=zero_mat(d_e), wk=zero_mat(d_e, d_e), bk=zero_mat(d_e),
                wv=zero_mat(d_e, d_e), bv=zero_mat(d_e), wo=zero_mat(d_e, d_e), bo=zero_mat(d_e),
            ),
            ln1_gain=T.Tensor(np.ones(d_e)), ln1_bias=zero_mat(d_e),
            ffn_w1=zero_mat(d_e, d_ff), ffn_b1=zero_mat(d_ff),
            ffn_w2=zero_mat(d_ff, d_e), ffn_b2=zero_mat(d_e),
            ln2_gain=T.Tensor(np.ones(d_e)), ln2_bias=zero_mat(d_e),
        )
        x = T.Tensor(np.random.default_rng(1).uniform(-1, 1, (3, d_e)))
        out = tr.transformer_block(x, [1, 1, 1], bp, num_heads=2)
        assert np.all(np.isfinite(out.data))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        bp = random_block_params(rng, 4, 8)
        x0 = rng.uniform(-1, 1, (4, 4))
        out = tr.transformer_block(T.Tensor(x0), [1] * 4, bp, num_heads=2).data
        perm = x0.copy()
        perm[[1, 3]] = perm[[3, 1]]
        out_perm = tr.transformer_block(T.Tensor(perm), [1] * 4, bp, num_heads=2).data
        np.testing.assert_allclose(out_perm[[3, 1]], out[[1, 3]], atol=1e-12)
        np.testing.assert_allclose(out_perm[[0, 2]], out[[0, 2]], atol=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(41)
        d_e, d_ff, length = 4, 8, 4
        bp = random_block_params(rng, d_e, d_ff)
        x0 = rng.uniform(-1, 1, (length, d_e))
        c = rng.uniform(-1, 1, (length, d_e))
        mask = [1, 1, 1, 0]

        x = T.Tensor(x0, requires_grad=True)
        out = tr.transformer_block(x, mask, bp, num_heads=2)
        T.sum_all(T.mul(out, T.Tensor(c))).backward()

        def f(a):
            res = tr.transformer_block(T.Tensor(a), mask, bp, num_heads=2)
            return float((res.data * c).sum())

        assert rel_err(x.grad, finite_diff_grad(f, x0.copy())) < 1e-4

        def f_w(a):
            saved = bp.ffn_w1.data
            bp.ffn_w1.data = a
            try:
                res = tr.transformer_block(T.Tensor(x0), mask, bp, num_heads=2)
                return float((res.data * c).sum())
            finally:
                bp.ffn_w1.data = saved

        assert rel_err(bp.ffn_w1.grad, finite_diff_grad(f_w, bp.ffn_w1.data.copy())) < 1e-4


class TestClassify:
    def test_zero_head_uniform(self):
        model = tiny_model()
        model.cls_w.data[:] = 0.0
        model.cls_b.data[:] = 0.0
        probs = model.predict_proba("a b", "c")
        np.testing.assert_allclose(probs, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_bias_domination(self):
        model = tiny_model()
        model.cls_w.data[:] = 0.0
        model.cls_b.data[:] = np.array([10.0, 0.0, 0.0])
        probs = model.predict_proba("a b", "c")
        assert int(np.argmax(probs)) == 0
        np.testing.assert_allclose(probs[0], math.exp(10) / (math.exp(10) + 2), rtol=1e-12)

    def test_probabilities_sum_to_one(self):
        model = tiny_model(seed=3)
        corpus = generate_corpus(SynthSpec(count=9, seed=1))
        for ex in corpus:
            probs = model.predict_proba(ex.premise[:20], ex.hypothesis[:20])
            np.testing.assert_allclose(probs.sum(), 1.0, atol=1e-9)
            assert np.all(probs > 0) and np.all(probs < 1)

    def test_padding_invariance(self):
        model = tiny_model(seed=7, max_len=16)
        enc_short = tk.encode_pair("a b", "c", model.vocab, max_len=8)
        enc_long = tk.encode_pair("a b", "c", model.vocab, max_len=16)
        # same content, more padding
        assert enc_long.token_ids[:8] == enc_short.token_ids
        p_short = model.forward(enc_short).data
        p_long = model.forward(enc_long).data
        np.testing.assert_allclose(p_long, p_short, atol=1e-9)

    def test_deterministic_inference(self):
        model = tiny_model(seed=11)
        a = model.predict_proba("a b c", "d")
        b = model.predict_proba("a b c", "d")
        np.testing.assert_array_equal(a, b)


class TestParameterPlumbing:
    def test_parameter_names_stable_and_loadable(self):
        model = tiny_model(seed=1)
        other = tiny_model(seed=2)
        arrays = {k: v.data.copy() for k, v in model.parameters().items()}
        other.load_parameters(arrays)
        np.testing.assert_array_equal(
            other.predict_proba("a b", "c d"), model.predict_proba("a b", "c d")
        )

    def test_load_rejects_wrong_names(self):
        model = tiny_model()
        arrays = {k: v.data.copy() for k, v in model.parameters().items()}
        arrays.pop("cls.w")
        with pytest.raises(DataError):
            model.load_parameters(arrays)

    def test_reset_head_only_touches_head(self):
        model = tiny_model(seed=1)
        before = {k: v.data.copy() for k, v in model.parameters().items()}
        model.reset_head(seed=99)
        after = model.parameters()
        for name in before:
            if name.startswith("cls."):
                continue
            np.testing.assert_array_equal(after[name].data, before[name])
        assert not np.array_equal(after["cls.w"].data, before["cls.w"])
