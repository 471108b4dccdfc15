"""Table-driven tokenizers: byte-level BPE, WordPiece, and unigram.

Vocabularies are inputs (no tokenizer training here). File formats:

    byte-bpe:  JSON object token -> id, plus a ranked merges text file with
               one "left right" pair per line ("#"-prefixed lines skipped)
    wordpiece: one piece per line; the id is the line number
    unigram:   TSV lines "piece<TAB>logprob"; the id is the line number

Special tokens are looked up under both naming conventions
([CLS]/[SEP]/[PAD]/[UNK] and <s>/</s>/<pad>/<unk>) and must all be present.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

BYTE_BPE = "byte-bpe"
WORDPIECE = "wordpiece"
UNIGRAM = "unigram"

_SPECIAL_ALIASES = {
    "cls": ("[CLS]", "<s>"),
    "sep": ("[SEP]", "</s>"),
    "pad": ("[PAD]", "<pad>"),
    "unk": ("[UNK]", "<unk>"),
}

# Sentencepiece whitespace marker; its presence in a unigram vocabulary
# switches on the space -> marker mapping.
_SP_SPACE = "▁"

# Score for the per-character <unk> fallback in unigram Viterbi. Low enough
# that any real segmentation dominates any fallback one.
_UNK_LOGPROB = -1e9


class VocabError(ValueError):
    """Malformed vocabulary table."""


class TokenRangeError(ValueError):
    """Token id outside the vocabulary."""


@dataclass
class Encoding:
    """Token ids with a same-length attention mask (1 = real token)."""

    ids: list[int]
    attention_mask: list[int]

    def __post_init__(self) -> None:
        assert len(self.ids) == len(self.attention_mask)


@dataclass
class Vocab:
    kind: str
    token_to_id: dict[str, int]
    merges: list[tuple[str, str]] = field(default_factory=list)
    piece_logprob: dict[str, float] = field(default_factory=dict)
    cls_id: int = 0
    sep_id: int = 0
    pad_id: int = 0
    unk_id: int = 0
    lowercase: bool = False

    def __post_init__(self) -> None:
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise VocabError("token ids must be dense in [0, vocab_size)")
        specials = self._find_specials()
        self.cls_id, self.sep_id, self.pad_id, self.unk_id = specials
        if len(set(specials)) != 4:
            raise VocabError("special token ids must be distinct")

    def _find_specials(self) -> tuple[int, int, int, int]:
        out = []
        for role, names in _SPECIAL_ALIASES.items():
            hit = [self.token_to_id[n] for n in names if n in self.token_to_id]
            if not hit:
                raise VocabError(f"vocabulary has no {role} token (looked for {names})")
            out.append(hit[0])
        return tuple(out)

    @property
    def size(self) -> int:
        return len(self.token_to_id)


# ---------------------------------------------------------------------------
# byte-level BPE
# ---------------------------------------------------------------------------

def _bytes_to_unicode() -> dict[int, str]:
    # GPT-2 style bijection from byte values onto printable unicode chars.
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


_BYTE_TO_CHAR = _bytes_to_unicode()
_CHAR_TO_BYTE = {c: b for b, c in _BYTE_TO_CHAR.items()}


def byte_alphabet() -> list[str]:
    """The 256 base symbols of the byte-level alphabet, in byte order."""
    return [_BYTE_TO_CHAR[b] for b in range(256)]


def bpe_encode(v: Vocab, text: str) -> Encoding:
    """Byte-level BPE: bytes -> alphabet chars, then merges by ascending rank.

    No unicode normalization or pre-splitting is performed, so decoding is an
    exact inverse. Sequence specials are added downstream by the pipeline.
    """
    assert v.kind == BYTE_BPE
    if not text:
        return Encoding([], [])
    symbols = [_BYTE_TO_CHAR[b] for b in text.encode("utf-8")]
    rank = {pair: i for i, pair in enumerate(v.merges)}
    while len(symbols) > 1:
        pairs = set(zip(symbols, symbols[1:]))
        best = min(pairs, key=lambda p: rank.get(p, len(rank)))
        if best not in rank:
            break
        merged = []
        i = 0
        while i < len(symbols):
            if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                merged.append(symbols[i] + symbols[i + 1])
                i += 2
            else:
                merged.append(symbols[i])
                i += 1
        symbols = merged
    ids = [v.token_to_id.get(s, v.unk_id) for s in symbols]
    return Encoding(ids, [1] * len(ids))


def bpe_decode(v: Vocab, ids: list[int]) -> str:
    """Exact inverse of bpe_encode on the non-special portion of ids."""
    assert v.kind == BYTE_BPE
    id_to_token = {i: t for t, i in v.token_to_id.items()}
    specials = {v.cls_id, v.sep_id, v.pad_id}
    chunks = []
    for i in ids:
        if i < 0 or i >= v.size:
            raise TokenRangeError(f"token id {i} outside vocabulary of size {v.size}")
        if i in specials:
            continue
        chunks.append(id_to_token[i])
    raw = bytes(_CHAR_TO_BYTE[c] for c in "".join(chunks))
    return raw.decode("utf-8")


# ---------------------------------------------------------------------------
# WordPiece
# ---------------------------------------------------------------------------

def _is_punctuation(ch: str) -> bool:
    # BERT rule: ASCII symbol ranges count as punctuation along with the
    # unicode P* categories.
    cp = ord(ch)
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(ch).startswith("P")


def _pre_split(text: str) -> list[str]:
    """Whitespace split, then each punctuation char becomes its own token."""
    words = []
    for blob in text.split():
        current = ""
        for ch in blob:
            if _is_punctuation(ch):
                if current:
                    words.append(current)
                    current = ""
                words.append(ch)
            else:
                current += ch
        if current:
            words.append(current)
    return words


def wordpiece_encode(v: Vocab, text: str) -> Encoding:
    """Greedy longest-match-first WordPiece with "##" continuations."""
    assert v.kind == WORDPIECE
    if v.lowercase:
        text = text.lower()
    ids: list[int] = []
    for word in _pre_split(text):
        pieces: list[int] = []
        start = 0
        while start < len(word):
            end = len(word)
            match = None
            while end > start:
                piece = word[start:end]
                if start > 0:
                    piece = "##" + piece
                if piece in v.token_to_id:
                    match = v.token_to_id[piece]
                    break
                end -= 1
            if match is None:
                pieces = [v.unk_id]
                break
            pieces.append(match)
            start = end
        ids.extend(pieces)
    return Encoding(ids, [1] * len(ids))


# ---------------------------------------------------------------------------
# Unigram
# ---------------------------------------------------------------------------

def unigram_encode(v: Vocab, text: str) -> Encoding:
    """Viterbi segmentation maximizing the summed piece log-probability.

    Ties break on fewer pieces, then the lexicographically smallest piece at
    each position. Characters no piece covers fall back to one <unk> each.
    """
    assert v.kind == UNIGRAM
    if not v.piece_logprob:
        raise VocabError("unigram vocabulary has no piece log-probabilities")
    if any(_SP_SPACE in p for p in v.piece_logprob):
        # sentencepiece convention: spaces are the block marker, with one
        # prepended so the first word matches word-initial pieces.
        text = _SP_SPACE + text.replace(" ", _SP_SPACE)
    n = len(text)
    if n == 0:
        return Encoding([], [])
    max_len = max(len(p) for p in v.piece_logprob)
    # best[i]: (neg score, piece count, first piece, next index) for text[i:]
    best: list[tuple | None] = [None] * (n + 1)
    best[n] = (0.0, 0, "", n)
    for i in range(n - 1, -1, -1):
        candidates = []
        for length in range(1, min(max_len, n - i) + 1):
            piece = text[i : i + length]
            if piece in v.piece_logprob and best[i + length] is not None:
                nxt = best[i + length]
                candidates.append(
                    (-v.piece_logprob[piece] + nxt[0], nxt[1] + 1, piece, i + length)
                )
        if not candidates:
            nxt = best[i + 1]
            candidates.append((-_UNK_LOGPROB + nxt[0], nxt[1] + 1, text[i], i + 1))
        best[i] = min(candidates)
    ids = []
    i = 0
    while i < n:
        _, _, piece, nxt = best[i]
        ids.append(v.token_to_id.get(piece, v.unk_id))
        i = nxt
    return Encoding(ids, [1] * len(ids))


def encode(v: Vocab, text: str) -> Encoding:
    """Dispatch to the encoder matching v.kind."""
    if v.kind == BYTE_BPE:
        return bpe_encode(v, text)
    if v.kind == WORDPIECE:
        return wordpiece_encode(v, text)
    if v.kind == UNIGRAM:
        return unigram_encode(v, text)
    raise VocabError(f"unknown vocabulary kind: {v.kind!r}")


# ---------------------------------------------------------------------------
# Vocabulary file I/O
# ---------------------------------------------------------------------------

def load_bpe_vocab(vocab_path: str | Path, merges_path: str | Path) -> Vocab:
    token_to_id = json.loads(Path(vocab_path).read_text(encoding="utf-8"))
    merges = []
    for line in Path(merges_path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        left, sep, right = line.partition(" ")
        if not sep:
            raise VocabError(f"bad merge line: {line!r}")
        merges.append((left, right))
    return Vocab(BYTE_BPE, token_to_id, merges=merges)


def load_wordpiece_vocab(path: str | Path, lowercase: bool = False) -> Vocab:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    token_to_id = {piece: i for i, piece in enumerate(lines) if piece}
    if len(token_to_id) != len([l for l in lines if l]):
        raise VocabError(f"duplicate pieces in {path}")
    return Vocab(WORDPIECE, token_to_id, lowercase=lowercase)


def load_unigram_vocab(path: str | Path) -> Vocab:
    token_to_id: dict[str, int] = {}
    piece_logprob: dict[str, float] = {}
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line:
            continue
        piece, sep, logprob = line.partition("\t")
        if not sep:
            raise VocabError(f"bad unigram line {i} in {path}: {line!r}")
        if piece in token_to_id:
            raise VocabError(f"duplicate piece in {path}: {piece!r}")
        token_to_id[piece] = len(token_to_id)
        piece_logprob[piece] = float(logprob)
    return Vocab(UNIGRAM, token_to_id, piece_logprob=piece_logprob)


def save_bpe_vocab(v: Vocab, vocab_path: str | Path, merges_path: str | Path) -> None:
    Path(vocab_path).write_text(
        json.dumps(v.token_to_id, ensure_ascii=False, indent=0), encoding="utf-8"
    )
    lines = [f"{l} {r}" for l, r in v.merges]
    Path(merges_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_wordpiece_vocab(v: Vocab, path: str | Path) -> None:
    by_id = sorted(v.token_to_id, key=v.token_to_id.get)
    Path(path).write_text("\n".join(by_id) + "\n", encoding="utf-8")


def save_unigram_vocab(v: Vocab, path: str | Path) -> None:
    by_id = sorted(v.piece_logprob, key=v.token_to_id.get)
    lines = [f"{p}\t{v.piece_logprob[p]!r}" for p in by_id]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocab(kind: str, path: str | Path, merges_path: str | Path | None = None,
               lowercase: bool = False) -> Vocab:
    """Load a vocabulary of any kind from its table file(s)."""
    if kind == BYTE_BPE:
        if merges_path is None:
            raise VocabError("byte-bpe vocabularies need a merges file")
        return load_bpe_vocab(path, merges_path)
    if kind == WORDPIECE:
        return load_wordpiece_vocab(path, lowercase=lowercase)
    if kind == UNIGRAM:
        return load_unigram_vocab(path)
    raise VocabError(f"unknown vocabulary kind: {kind!r}")
