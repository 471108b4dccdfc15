"""Emit engine vocabulary tables from the tokenizer files of an upstream
checkpoint directory.

Targets:
    byte-bpe  -> vocab.json (token -> id) + merges.txt (ranked pairs)
    wordpiece -> vocab.txt (one piece per line)
    unigram   -> vocab.tsv (piece<TAB>logprob)
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

from .families import ExportError


def _from_tokenizer_json(source: Path) -> dict | None:
    path = source / "tokenizer.json"
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def export_byte_bpe(source: Path, out: Path) -> dict[str, str]:
    vocab_json = source / "vocab.json"
    merges_txt = source / "merges.txt"
    if vocab_json.exists() and merges_txt.exists():
        shutil.copyfile(vocab_json, out / "vocab.json")
        shutil.copyfile(merges_txt, out / "merges.txt")
        return {"tokenizer_vocab": "vocab.json", "tokenizer_merges": "merges.txt"}
    tok = _from_tokenizer_json(source)
    if tok and tok.get("model", {}).get("type") == "BPE":
        model = tok["model"]
        (out / "vocab.json").write_text(
            json.dumps(model["vocab"], ensure_ascii=False), encoding="utf-8"
        )
        merges = model["merges"]
        lines = [m if isinstance(m, str) else " ".join(m) for m in merges]
        (out / "merges.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return {"tokenizer_vocab": "vocab.json", "tokenizer_merges": "merges.txt"}
    raise ExportError(f"no byte-BPE tables (vocab.json+merges.txt or tokenizer.json) in {source}")


def export_wordpiece(source: Path, out: Path) -> dict[str, str]:
    vocab_txt = source / "vocab.txt"
    if vocab_txt.exists():
        shutil.copyfile(vocab_txt, out / "vocab.txt")
    else:
        tok = _from_tokenizer_json(source)
        if not (tok and tok.get("model", {}).get("type") == "WordPiece"):
            raise ExportError(f"no WordPiece table (vocab.txt or tokenizer.json) in {source}")
        vocab = tok["model"]["vocab"]
        by_id = sorted(vocab, key=vocab.get)
        (out / "vocab.txt").write_text("\n".join(by_id) + "\n", encoding="utf-8")
    meta = {"tokenizer_vocab": "vocab.txt"}
    tok_cfg_path = source / "tokenizer_config.json"
    if tok_cfg_path.exists():
        tok_cfg = json.loads(tok_cfg_path.read_text(encoding="utf-8"))
        if tok_cfg.get("do_lower_case"):
            meta["tokenizer_lowercase"] = "true"
    return meta


def export_unigram(source: Path, out: Path) -> dict[str, str]:
    tok = _from_tokenizer_json(source)
    if tok and tok.get("model", {}).get("type") == "Unigram":
        pieces = tok["model"]["vocab"]  # [[piece, logprob], ...] in id order
        lines = [f"{piece}\t{float(logprob)!r}" for piece, logprob in pieces]
        (out / "vocab.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return {"tokenizer_vocab": "vocab.tsv"}
    spm_path = source / "sentencepiece.bpe.model"
    if spm_path.exists():
        try:
            import sentencepiece as spm
        except ImportError:
            raise ExportError(
                f"{spm_path} needs the sentencepiece package (or provide tokenizer.json)"
            ) from None
        sp = spm.SentencePieceProcessor(model_file=str(spm_path))
        lines = [
            f"{sp.id_to_piece(i)}\t{sp.get_score(i)!r}" for i in range(sp.get_piece_size())
        ]
        (out / "vocab.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return {"tokenizer_vocab": "vocab.tsv"}
    raise ExportError(f"no unigram table (tokenizer.json or sentencepiece.bpe.model) in {source}")


def export_tokenizer(kind: str, source: Path, out: Path) -> dict[str, str]:
    if kind == "byte-bpe":
        return export_byte_bpe(source, out)
    if kind == "wordpiece":
        return export_wordpiece(source, out)
    if kind == "unigram":
        return export_unigram(source, out)
    raise ExportError(f"unknown tokenizer kind {kind!r}")
