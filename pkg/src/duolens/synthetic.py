"""Synthetic corpora and vocabularies for desk-scale experiments.

The disjoint-vocabulary task: class 0 documents draw token ids from the low
half of the tiny vocabulary, class 1 from the high half, so frozen random
encoders produce linearly separable pooled vectors. Words are literal vocab
pieces ("tok<i>"), so the WordPiece encoder maps each word to exactly the
intended id.
"""

from __future__ import annotations

import random
from pathlib import Path

from .corpus import Sample
from .tokenizers import WORDPIECE, Vocab, save_wordpiece_vocab

VOCAB_SIZE = 1000
_SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
# Content ids start after the specials; class ranges follow the disjoint
# low/high halves of the vocabulary.
CONTENT_LOW = len(_SPECIALS)
CLASS_SPLIT = 500


def synthetic_vocab() -> Vocab:
    """WordPiece vocabulary of 1000 pieces: 4 specials then tok4..tok999."""
    pieces = _SPECIALS + [f"tok{i}" for i in range(CONTENT_LOW, VOCAB_SIZE)]
    return Vocab(WORDPIECE, {p: i for i, p in enumerate(pieces)})


def save_synthetic_vocab(path: str | Path) -> None:
    save_wordpiece_vocab(synthetic_vocab(), path)


def _word(token_id: int) -> str:
    return f"tok{token_id}"


def disjoint_corpus(
    n_per_class: int,
    seed: int,
    min_len: int = 32,
    max_len: int = 64,
    language: str = "synthetic",
    id_prefix: str = "syn",
) -> list[Sample]:
    """Labeled samples whose token ids come from disjoint vocabulary halves."""
    rng = random.Random(seed)
    out = []
    for label in (0, 1):
        lo, hi = (CONTENT_LOW, CLASS_SPLIT) if label == 0 else (CLASS_SPLIT, VOCAB_SIZE)
        for i in range(n_per_class):
            length = rng.randint(min_len, max_len)
            words = [_word(rng.randrange(lo, hi)) for _ in range(length)]
            out.append(
                Sample(
                    id=f"{id_prefix}-{label}-{i}",
                    text=" ".join(words),
                    language=language,
                    label=label,
                    source="synthetic",
                    generator="synthetic-lm" if label == 1 else None,
                )
            )
    return out


def code_like_corpus(n_per_class: int, seed: int, language: str = "c") -> list[Sample]:
    """C-like snippets whose identifiers carry the class signal, for the
    perturbation-retention harness."""
    rng = random.Random(seed)
    out = []
    for label in (0, 1):
        lo, hi = (CONTENT_LOW, CLASS_SPLIT) if label == 0 else (CLASS_SPLIT, VOCAB_SIZE)
        for i in range(n_per_class):
            names = [_word(rng.randrange(lo, hi)) for _ in range(6)]
            body = (
                f"int {names[0]} = {names[1]} + {names[2]};\n"
                f"int {names[3]} = {names[0]} * 2;\n"
                f"if ({names[3]} > {names[4]}) {{\n"
                f"    return {names[5]};\n"
                f"}}\n"
                f"return {names[3]};\n"
            )
            out.append(
                Sample(
                    id=f"code-{label}-{i}",
                    text=body,
                    language=language,
                    label=label,
                    source="synthetic",
                    generator="synthetic-lm" if label == 1 else None,
                )
            )
    return out
