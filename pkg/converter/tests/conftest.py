import json

import pytest

torch = pytest.importorskip("torch")
transformers = pytest.importorskip("transformers")

from transformers import BertConfig, BertModel, RobertaConfig, RobertaModel


def _toy_bpe_tables(path):
    # minimal byte-bpe tables; ids only need to exist for the export step
    vocab = {"<s>": 0, "<pad>": 1, "</s>": 2, "<unk>": 3}
    for i in range(4, 120):
        vocab[f"w{i}"] = i
    (path / "vocab.json").write_text(json.dumps(vocab))
    (path / "merges.txt").write_text("#version: 0.2\n")


def _toy_wordpiece_table(path, size=110):
    pieces = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"] + [f"w{i}" for i in range(4, size)]
    (path / "vocab.txt").write_text("\n".join(pieces) + "\n")


@pytest.fixture(scope="session")
def tiny_roberta_dir(tmp_path_factory):
    torch.manual_seed(0)
    cfg = RobertaConfig(
        vocab_size=120, hidden_size=32, num_hidden_layers=2, num_attention_heads=4,
        intermediate_size=64, max_position_embeddings=22, pad_token_id=1,
        type_vocab_size=1, layer_norm_eps=1e-12, hidden_act="gelu",
    )
    model = RobertaModel(cfg, add_pooling_layer=False)
    model.eval()
    out = tmp_path_factory.mktemp("roberta-src")
    model.save_pretrained(out)
    _toy_bpe_tables(out)
    return out, model


@pytest.fixture(scope="session")
def tiny_bert_dir(tmp_path_factory):
    torch.manual_seed(1)
    cfg = BertConfig(
        vocab_size=110, hidden_size=32, num_hidden_layers=2, num_attention_heads=4,
        intermediate_size=64, max_position_embeddings=24, type_vocab_size=2,
        layer_norm_eps=1e-12, hidden_act="gelu",
    )
    model = BertModel(cfg)
    model.eval()
    out = tmp_path_factory.mktemp("bert-src")
    model.save_pretrained(out)
    _toy_wordpiece_table(out)
    (out / "tokenizer_config.json").write_text(json.dumps({"do_lower_case": True}))
    return out, model
