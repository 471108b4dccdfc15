"""Transformer-encoder forward pass over DLT parameter bundles.

Post-norm stack (original BERT/RoBERTa ordering): token + position (+ type 0)
embeddings, embedding layer-norm, then per layer multi-head self-attention
with additive masking, residual, layer-norm, GELU feed-forward, residual,
layer-norm. Weight matrices are stored input-major, i.e. y = x @ w + b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import BundleError, TensorBundle
from .tensor import Tensor, gelu, layer_norm, matmul, softmax
from .tokenizers import Encoding, Vocab, encode

CLS_POOL = "cls"
MEAN_POOL = "mean"

_MASK_BIAS = -1e9


class EncoderError(ValueError):
    """Invalid encoder input or configuration."""


@dataclass
class EncoderConfig:
    vocab_size: int
    hidden: int
    layers: int
    heads: int
    ffn: int
    max_positions: int
    layer_norm_eps: float
    position_offset: int
    pooling: str

    def __post_init__(self) -> None:
        if self.hidden % self.heads != 0:
            raise EncoderError(f"hidden={self.hidden} not divisible by heads={self.heads}")
        if self.position_offset not in (0, 2):
            raise EncoderError(f"position_offset must be 0 or 2, got {self.position_offset}")
        if self.pooling not in (CLS_POOL, MEAN_POOL):
            raise EncoderError(f"pooling must be cls or mean, got {self.pooling!r}")

    def to_metadata(self) -> dict[str, str]:
        return {
            "kind": "encoder",
            "vocab_size": str(self.vocab_size),
            "hidden": str(self.hidden),
            "layers": str(self.layers),
            "heads": str(self.heads),
            "ffn": str(self.ffn),
            "max_positions": str(self.max_positions),
            "layer_norm_eps": repr(self.layer_norm_eps),
            "position_offset": str(self.position_offset),
            "pooling": self.pooling,
        }

    @classmethod
    def from_metadata(cls, metadata: dict[str, str]) -> "EncoderConfig":
        try:
            return cls(
                vocab_size=int(metadata["vocab_size"]),
                hidden=int(metadata["hidden"]),
                layers=int(metadata["layers"]),
                heads=int(metadata["heads"]),
                ffn=int(metadata["ffn"]),
                max_positions=int(metadata["max_positions"]),
                layer_norm_eps=float(metadata["layer_norm_eps"]),
                position_offset=int(metadata["position_offset"]),
                pooling=metadata["pooling"],
            )
        except KeyError as exc:
            raise BundleError(f"encoder bundle metadata missing {exc}") from None


def tiny_config(pooling: str = MEAN_POOL) -> EncoderConfig:
    """Desk-scale preset used by the synthetic experiments and tests."""
    return EncoderConfig(
        vocab_size=1000,
        hidden=64,
        layers=2,
        heads=4,
        ffn=256,
        max_positions=512,
        layer_norm_eps=1e-5,
        position_offset=0,
        pooling=pooling,
    )


def canonical_param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Expected name -> shape map; embed.type rows are a lower bound of 1."""
    d, f = cfg.hidden, cfg.ffn
    shapes: dict[str, tuple[int, ...]] = {
        "embed.word": (cfg.vocab_size, d),
        "embed.pos": (cfg.max_positions + cfg.position_offset, d),
        "embed.type": (1, d),
        "embed.ln.gamma": (d,),
        "embed.ln.beta": (d,),
    }
    for i in range(cfg.layers):
        p = f"layer.{i}"
        for name in ("q", "k", "v", "o"):
            shapes[f"{p}.attn.{name}.w"] = (d, d)
            shapes[f"{p}.attn.{name}.b"] = (d,)
        shapes[f"{p}.attn.ln.gamma"] = (d,)
        shapes[f"{p}.attn.ln.beta"] = (d,)
        shapes[f"{p}.ffn.w1"] = (d, f)
        shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, d)
        shapes[f"{p}.ffn.b2"] = (d,)
        shapes[f"{p}.ffn.ln.gamma"] = (d,)
        shapes[f"{p}.ffn.ln.beta"] = (d,)
    return shapes


class EncoderModel:
    """Immutable frozen encoder: config plus validated parameter bundle."""

    def __init__(self, config: EncoderConfig, params: TensorBundle) -> None:
        for name, want in canonical_param_shapes(config).items():
            if name not in params:
                raise BundleError(f"encoder bundle missing parameter {name!r}")
            got = params[name].shape
            if name == "embed.type":
                ok = len(got) == 2 and got[0] >= 1 and got[1] == want[1]
            else:
                ok = got == want
            if not ok:
                raise BundleError(f"parameter {name!r} has shape {got}, expected {want}")
        self.config = config
        self.params = params

    @classmethod
    def from_bundle(cls, params: TensorBundle) -> "EncoderModel":
        return cls(EncoderConfig.from_metadata(params.metadata), params)


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return Tensor(matmul(x, w).data + b.data)


def forward(m: EncoderModel, enc: Encoding) -> Tensor:
    """Hidden states [seq x hidden] for one encoding. Deterministic."""
    cfg = m.config
    p = m.params
    seq = len(enc.ids)
    if seq == 0:
        raise EncoderError("cannot encode an empty sequence")
    if seq > cfg.max_positions:
        raise EncoderError(
            f"sequence length {seq} exceeds max_positions {cfg.max_positions}; chunk first"
        )
    ids = np.asarray(enc.ids, dtype=np.int64)
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise EncoderError(f"token id outside [0, {cfg.vocab_size})")
    mask = np.asarray(enc.attention_mask, dtype=np.float32)

    emb = (
        p["embed.word"].data[ids]
        + p["embed.pos"].data[cfg.position_offset : cfg.position_offset + seq]
        + p["embed.type"].data[0]
    )
    x = layer_norm(Tensor(emb), p["embed.ln.gamma"], p["embed.ln.beta"], cfg.layer_norm_eps)

    heads, dh = cfg.heads, cfg.hidden // cfg.heads
    key_bias = (1.0 - mask) * _MASK_BIAS  # 0 where real, -1e9 where padded
    scale = 1.0 / np.sqrt(dh)

    for i in range(cfg.layers):
        lp = f"layer.{i}"
        q = _linear(x, p[f"{lp}.attn.q.w"], p[f"{lp}.attn.q.b"]).data
        k = _linear(x, p[f"{lp}.attn.k.w"], p[f"{lp}.attn.k.b"]).data
        v = _linear(x, p[f"{lp}.attn.v.w"], p[f"{lp}.attn.v.b"]).data
        qh = q.reshape(seq, heads, dh).transpose(1, 0, 2)
        kh = k.reshape(seq, heads, dh).transpose(1, 0, 2)
        vh = v.reshape(seq, heads, dh).transpose(1, 0, 2)
        ctx = np.empty((heads, seq, dh), dtype=np.float32)
        for h in range(heads):
            scores = Tensor(matmul(Tensor(qh[h]), Tensor(kh[h].T)).data * scale + key_bias)
            ctx[h] = matmul(softmax(scores), Tensor(vh[h])).data
        merged = Tensor(ctx.transpose(1, 0, 2).reshape(seq, cfg.hidden))
        attn_out = _linear(merged, p[f"{lp}.attn.o.w"], p[f"{lp}.attn.o.b"])
        x = layer_norm(
            Tensor(x.data + attn_out.data),
            p[f"{lp}.attn.ln.gamma"], p[f"{lp}.attn.ln.beta"], cfg.layer_norm_eps,
        )
        h1 = gelu(_linear(x, p[f"{lp}.ffn.w1"], p[f"{lp}.ffn.b1"]))
        h2 = _linear(h1, p[f"{lp}.ffn.w2"], p[f"{lp}.ffn.b2"])
        x = layer_norm(
            Tensor(x.data + h2.data),
            p[f"{lp}.ffn.ln.gamma"], p[f"{lp}.ffn.ln.beta"], cfg.layer_norm_eps,
        )
    return x


def pool(h: Tensor, mask: list[int], mode: str) -> Tensor:
    """Pooled vector: row 0 for cls, mask-weighted row mean for mean."""
    if h.data.ndim != 2 or h.shape[0] < 1:
        raise EncoderError(f"pool expects [seq x d] hidden states, got {h.shape}")
    if mode == CLS_POOL:
        return Tensor(h.data[0])
    if mode == MEAN_POOL:
        m = np.asarray(mask, dtype=np.float32)
        total = m.sum()
        if total == 0:
            raise EncoderError("cannot pool an input whose attention mask is all zero")
        return Tensor((h.data * m[:, None]).sum(axis=0) / total)
    raise EncoderError(f"unknown pooling mode {mode!r}")


def encode_pooled(m: EncoderModel, enc: Encoding) -> Tensor:
    """forward + pool using the model's configured pooling mode."""
    return pool(forward(m, enc), enc.attention_mask, m.config.pooling)


def wrap_with_specials(vocab: Vocab, ids: list[int]) -> Encoding:
    """Add the begin/end sequence specials around content token ids."""
    wrapped = [vocab.cls_id] + list(ids) + [vocab.sep_id]
    return Encoding(wrapped, [1] * len(wrapped))


def pooled_for_text(m: EncoderModel, vocab: Vocab, text: str, window: int = 512) -> Tensor:
    """Single-window pooled vector: tokenize, truncate content to fit one
    window with its two specials, wrap, forward, pool."""
    cap = min(window, m.config.max_positions) - 2
    ids = encode(vocab, text).ids[:cap]
    return encode_pooled(m, wrap_with_specials(vocab, ids))


def random_encoder_bundle(cfg: EncoderConfig, seed: int) -> TensorBundle:
    """Random-initialized encoder bundle (frozen-feature preset for tests).

    Normal(0, 0.02) weights, identity layer-norms, zero type table.
    """
    rng = np.random.default_rng(seed)
    b = TensorBundle()
    for name, shape in canonical_param_shapes(cfg).items():
        if name.endswith("ln.gamma"):
            arr = np.ones(shape, dtype=np.float32)
        elif name.endswith((".b", ".b1", ".b2", "ln.beta")) or name == "embed.type":
            arr = np.zeros(shape, dtype=np.float32)
        else:
            arr = rng.normal(0.0, 0.02, size=shape).astype(np.float32)
        b.add(name, Tensor(arr))
    b.metadata.update(cfg.to_metadata())
    b.metadata["seed"] = str(seed)
    return b
