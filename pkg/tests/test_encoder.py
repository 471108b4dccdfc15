import numpy as np
import pytest

from duolens.bundle import BundleError, TensorBundle
from duolens.encoder import (
    EncoderConfig,
    EncoderError,
    EncoderModel,
    canonical_param_shapes,
    forward,
    pool,
    pooled_for_text,
    random_encoder_bundle,
    tiny_config,
    wrap_with_specials,
)
from duolens.tensor import Tensor, softmax
from duolens.tokenizers import Encoding

from oracles import encoder_forward_reference


def zero_bundle(cfg: EncoderConfig) -> TensorBundle:
    b = TensorBundle()
    for name, shape in canonical_param_shapes(cfg).items():
        b.add(name, Tensor(np.zeros(shape, dtype=np.float32)))
    return b


@pytest.fixture(scope="module")
def tiny_model():
    cfg = tiny_config()
    return EncoderModel(cfg, random_encoder_bundle(cfg, 7))


class TestConfig:
    def test_hidden_divisible_by_heads(self):
        with pytest.raises(EncoderError, match="divisible"):
            EncoderConfig(100, 65, 2, 4, 256, 512, 1e-5, 0, "mean")

    def test_position_offset_limited(self):
        with pytest.raises(EncoderError, match="position_offset"):
            EncoderConfig(100, 64, 2, 4, 256, 512, 1e-5, 1, "mean")

    def test_metadata_roundtrip(self):
        cfg = tiny_config("cls")
        assert EncoderConfig.from_metadata(cfg.to_metadata()) == cfg


class TestForward:
    def test_zero_weights_give_constant_rows(self):
        cfg = tiny_config()
        model = EncoderModel(cfg, zero_bundle(cfg))
        out = forward(model, Encoding([1, 2, 3, 4, 5], [1] * 5)).data
        assert np.allclose(out, out[0])

    def test_deterministic(self, tiny_model):
        enc = Encoding([5, 9, 100, 870], [1] * 4)
        a = forward(tiny_model, enc).data
        b = forward(tiny_model, enc).data
        assert a.tobytes() == b.tobytes()

    def test_matches_reference_oracle(self, tiny_model):
        rng = np.random.default_rng(0)
        ids = rng.integers(0, 1000, size=9).tolist()
        mask = [1] * 7 + [0] * 2
        got = forward(tiny_model, Encoding(ids, mask)).data
        want = encoder_forward_reference(tiny_model.params, tiny_model.config, ids, mask)
        assert np.max(np.abs(got - want)) < 1e-5

    def test_matches_reference_oracle_many_seeds(self):
        # Small-but-real config so 100 seeds stay fast.
        cfg = EncoderConfig(50, 16, 2, 4, 32, 64, 1e-5, 0, "mean")
        for seed in range(100):
            rng = np.random.default_rng(seed)
            model = EncoderModel(cfg, random_encoder_bundle(cfg, seed))
            n = int(rng.integers(2, 8))
            ids = rng.integers(0, 50, size=n).tolist()
            mask = [1] * n
            got = forward(model, Encoding(ids, mask)).data
            want = encoder_forward_reference(model.params, cfg, ids, mask)
            assert np.max(np.abs(got - want)) < 1e-5

    def test_over_length_rejected(self, tiny_model):
        n = tiny_model.config.max_positions + 1
        with pytest.raises(EncoderError, match="chunk"):
            forward(tiny_model, Encoding([0] * n, [1] * n))

    def test_id_out_of_range(self, tiny_model):
        with pytest.raises(EncoderError, match="token id"):
            forward(tiny_model, Encoding([1000], [1]))

    def test_missing_parameter_is_schema_error(self):
        cfg = tiny_config()
        b = random_encoder_bundle(cfg, 0)
        del b.entries["layer.1.ffn.w2"]
        with pytest.raises(BundleError, match="layer.1.ffn.w2"):
            EncoderModel(cfg, b)

    def test_wrong_shape_is_schema_error(self):
        cfg = tiny_config()
        b = random_encoder_bundle(cfg, 0)
        b.entries["embed.word"] = Tensor(np.zeros((10, 64), dtype=np.float32))
        with pytest.raises(BundleError, match="embed.word"):
            EncoderModel(cfg, b)

    def test_position_offset_shifts_table_lookup(self):
        cfg0 = EncoderConfig(20, 16, 1, 2, 32, 8, 1e-5, 0, "mean")
        cfg2 = EncoderConfig(20, 16, 1, 2, 32, 8, 1e-5, 2, "mean")
        b0 = random_encoder_bundle(cfg0, 5)
        b2 = TensorBundle()
        for name, t in b0.entries.items():
            if name == "embed.pos":
                shifted = np.zeros((8 + 2, 16), dtype=np.float32)
                shifted[2:] = t.data
                b2.add(name, Tensor(shifted))
            else:
                b2.add(name, Tensor(t.data.copy()))
        m0 = EncoderModel(cfg0, b0)
        m2 = EncoderModel(cfg2, b2)
        enc = Encoding([3, 1, 4, 1], [1] * 4)
        assert np.array_equal(forward(m0, enc).data, forward(m2, enc).data)

    def test_pad_content_never_leaks_into_unmasked_states(self, tiny_model):
        rng = np.random.default_rng(2)
        ids = rng.integers(0, 1000, size=6).tolist()
        enc1 = Encoding(ids + [0, 0, 0], [1] * 6 + [0] * 3)
        enc2 = Encoding(ids + [999, 123, 7], [1] * 6 + [0] * 3)
        h1 = forward(tiny_model, enc1).data[:6]
        h2 = forward(tiny_model, enc2).data[:6]
        assert np.max(np.abs(h1 - h2)) < 1e-6

    def test_masked_attention_weights_vanish(self):
        # the mechanism forward uses: -1e9 additive bias before softmax
        scores = Tensor([[0.3, -0.2, 0.5 - 1e9, 0.1 - 1e9]])
        w = softmax(scores).data[0]
        assert abs(w.sum() - 1.0) < 1e-6
        assert w[2] < 1e-7 and w[3] < 1e-7


class TestPool:
    def test_single_row_both_modes(self):
        h = Tensor(np.arange(8, dtype=np.float32).reshape(1, 8))
        assert np.array_equal(pool(h, [1], "cls").data, h.data[0])
        assert np.array_equal(pool(h, [1], "mean").data, h.data[0])

    def test_mean_ignores_masked_rows(self):
        rng = np.random.default_rng(0)
        rows = rng.normal(size=(4, 6)).astype(np.float32)
        got = pool(Tensor(rows), [1, 1, 0, 0], "mean").data
        assert np.allclose(got, (rows[0] + rows[1]) / 2, atol=1e-7)
        rows2 = rows.copy()
        rows2[2:] = 99.0
        got2 = pool(Tensor(rows2), [1, 1, 0, 0], "mean").data
        assert np.array_equal(got, got2)

    def test_all_zero_mask_rejected(self):
        with pytest.raises(EncoderError, match="all zero"):
            pool(Tensor(np.ones((2, 3))), [0, 0], "mean")

    def test_padding_invariance_through_full_forward(self, tiny_model):
        rng = np.random.default_rng(4)
        ids = rng.integers(0, 1000, size=10).tolist()
        base = forward(tiny_model, Encoding(ids, [1] * 10))
        p1 = pool(base, [1] * 10, "mean").data
        padded = Encoding(ids + [0] * 5, [1] * 10 + [0] * 5)
        p2 = pool(forward(tiny_model, padded), padded.attention_mask, "mean").data
        assert np.max(np.abs(p1 - p2)) < 1e-6


class TestHelpers:
    def test_wrap_with_specials(self, vocab):
        enc = wrap_with_specials(vocab, [10, 11])
        assert enc.ids == [vocab.cls_id, 10, 11, vocab.sep_id]
        assert enc.attention_mask == [1, 1, 1, 1]

    def test_pooled_for_text_truncates_to_window(self, tiny_model, vocab):
        text = " ".join(f"tok{4 + (i % 900)}" for i in range(600))
        vec = pooled_for_text(tiny_model, vocab, text, window=512)
        assert vec.shape == (64,)
