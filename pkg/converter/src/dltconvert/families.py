"""Model-family knowledge: parameter-name remapping, config extraction, and
tokenizer kinds for the supported encoder families."""

from __future__ import annotations

from dataclasses import dataclass


class ExportError(ValueError):
    """Unsupported or inconsistent source checkpoint."""


@dataclass(frozen=True)
class Family:
    name: str
    position_offset: int
    tokenizer_kind: str  # byte-bpe | wordpiece | unigram
    default_pooling: str


FAMILIES = {
    "bert": Family("bert", 0, "wordpiece", "cls"),
    "roberta": Family("roberta", 2, "byte-bpe", "mean"),
    "xlm-roberta": Family("xlm-roberta", 2, "unigram", "cls"),
}

# Top-level prefixes that wrap the encoder in task checkpoints.
_STRIP_PREFIXES = ("roberta.", "bert.", "model.", "base_model.")

# Upstream parameters with no engine counterpart (task heads, buffers).
_IGNORE_PREFIXES = ("pooler.", "lm_head.", "classifier.", "cls.", "embeddings.position_ids")

# Linear layers store torch's [out, in]; the engine wants [in, out].
_TRANSPOSE = "transpose"
_COPY = "copy"


def detect_family(model_type: str) -> Family:
    if model_type not in FAMILIES:
        raise ExportError(
            f"unsupported model family {model_type!r} (supported: {sorted(FAMILIES)})"
        )
    return FAMILIES[model_type]


def strip_prefix(name: str) -> str:
    for prefix in _STRIP_PREFIXES:
        if name.startswith(prefix):
            return name[len(prefix):]
    return name


def is_ignorable(stripped_name: str) -> bool:
    return stripped_name.startswith(_IGNORE_PREFIXES)


def remapping(num_layers: int) -> dict[str, tuple[str, str]]:
    """canonical name -> (upstream name after prefix strip, transform)."""
    table = {
        "embed.word": ("embeddings.word_embeddings.weight", _COPY),
        "embed.pos": ("embeddings.position_embeddings.weight", _COPY),
        "embed.type": ("embeddings.token_type_embeddings.weight", _COPY),
        "embed.ln.gamma": ("embeddings.LayerNorm.weight", _COPY),
        "embed.ln.beta": ("embeddings.LayerNorm.bias", _COPY),
    }
    for i in range(num_layers):
        up = f"encoder.layer.{i}"
        down = f"layer.{i}"
        for ours, theirs in (("q", "query"), ("k", "key"), ("v", "value")):
            table[f"{down}.attn.{ours}.w"] = (f"{up}.attention.self.{theirs}.weight", _TRANSPOSE)
            table[f"{down}.attn.{ours}.b"] = (f"{up}.attention.self.{theirs}.bias", _COPY)
        table[f"{down}.attn.o.w"] = (f"{up}.attention.output.dense.weight", _TRANSPOSE)
        table[f"{down}.attn.o.b"] = (f"{up}.attention.output.dense.bias", _COPY)
        table[f"{down}.attn.ln.gamma"] = (f"{up}.attention.output.LayerNorm.weight", _COPY)
        table[f"{down}.attn.ln.beta"] = (f"{up}.attention.output.LayerNorm.bias", _COPY)
        table[f"{down}.ffn.w1"] = (f"{up}.intermediate.dense.weight", _TRANSPOSE)
        table[f"{down}.ffn.b1"] = (f"{up}.intermediate.dense.bias", _COPY)
        table[f"{down}.ffn.w2"] = (f"{up}.output.dense.weight", _TRANSPOSE)
        table[f"{down}.ffn.b2"] = (f"{up}.output.dense.bias", _COPY)
        table[f"{down}.ffn.ln.gamma"] = (f"{up}.output.LayerNorm.weight", _COPY)
        table[f"{down}.ffn.ln.beta"] = (f"{up}.output.LayerNorm.bias", _COPY)
    return table


def expected_shapes(cfg: dict) -> dict[str, tuple[int, ...]]:
    """Canonical name -> shape, from the extracted engine config."""
    d, f = cfg["hidden"], cfg["ffn"]
    table_rows = cfg["max_positions"] + cfg["position_offset"]
    shapes: dict[str, tuple[int, ...]] = {
        "embed.word": (cfg["vocab_size"], d),
        "embed.pos": (table_rows, d),
        "embed.type": (-1, d),  # row count is family-dependent (>= 1)
        "embed.ln.gamma": (d,),
        "embed.ln.beta": (d,),
    }
    for i in range(cfg["layers"]):
        p = f"layer.{i}"
        for n in ("q", "k", "v", "o"):
            shapes[f"{p}.attn.{n}.w"] = (d, d)
            shapes[f"{p}.attn.{n}.b"] = (d,)
        shapes[f"{p}.attn.ln.gamma"] = (d,)
        shapes[f"{p}.attn.ln.beta"] = (d,)
        shapes[f"{p}.ffn.w1"] = (d, f)
        shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, d)
        shapes[f"{p}.ffn.b2"] = (d,)
        shapes[f"{p}.ffn.ln.gamma"] = (d,)
        shapes[f"{p}.ffn.ln.beta"] = (d,)
    return shapes


def extract_engine_config(hf_config: dict, family: Family, pooling: str | None) -> dict:
    act = hf_config.get("hidden_act", "gelu")
    if act != "gelu":
        raise ExportError(
            f"unsupported activation {act!r}: the engine implements exact-erf gelu only"
        )
    return {
        "vocab_size": int(hf_config["vocab_size"]),
        "hidden": int(hf_config["hidden_size"]),
        "layers": int(hf_config["num_hidden_layers"]),
        "heads": int(hf_config["num_attention_heads"]),
        "ffn": int(hf_config["intermediate_size"]),
        "max_positions": int(hf_config["max_position_embeddings"]) - family.position_offset,
        "layer_norm_eps": float(hf_config.get("layer_norm_eps", 1e-12)),
        "position_offset": family.position_offset,
        "pooling": pooling or family.default_pooling,
    }
