"""Corpus tooling: JSONL ingestion, label balancing, stratified splits, and
code perturbations (identifier renaming, whitespace reformatting).

Balancing keeps, per language, the largest equal number of human-written and
machine-generated samples the pool supports; languages missing a label are
dropped with a warning. All operations are pure functions of (inputs, seed).
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

HUMAN, MACHINE = 0, 1

_SAMPLE_FIELDS = {"id", "text", "language", "label", "source", "generator"}


class CorpusError(ValueError):
    """Schema violation or invalid corpus operation."""


@dataclass
class Sample:
    id: str
    text: str
    language: str
    label: int  # 0 human-written, 1 machine-generated
    source: str
    generator: str | None = None

    @classmethod
    def from_dict(cls, obj: dict, where: str = "") -> "Sample":
        at = f" at {where}" if where else ""
        if not isinstance(obj, dict):
            raise CorpusError(f"sample is not a JSON object{at}")
        unknown = set(obj) - _SAMPLE_FIELDS
        if unknown:
            raise CorpusError(f"unknown sample keys {sorted(unknown)}{at}")
        missing = _SAMPLE_FIELDS - {"generator"} - set(obj)
        if missing:
            raise CorpusError(f"missing sample keys {sorted(missing)}{at}")
        if obj["label"] not in (0, 1):
            raise CorpusError(f"label must be 0 or 1, got {obj['label']!r}{at}")
        for key in ("id", "text", "language", "source"):
            if not isinstance(obj[key], str) or (key != "source" and not obj[key]):
                raise CorpusError(f"field {key!r} must be a non-empty string{at}")
        gen = obj.get("generator")
        if gen is not None and not isinstance(gen, str):
            raise CorpusError(f"field 'generator' must be a string{at}")
        return cls(obj["id"], obj["text"], obj["language"], obj["label"], obj["source"], gen)

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "text": self.text,
            "language": self.language,
            "label": self.label,
            "source": self.source,
        }
        if self.generator is not None:
            out["generator"] = self.generator
        return out


def ingest(paths: list[str | Path]) -> list[Sample]:
    """Union pool over JSONL files: duplicate ids are an error, exact
    duplicate texts keep only the first occurrence."""
    pool: list[Sample] = []
    seen_ids: dict[str, str] = {}
    seen_texts: set[str] = set()
    for path in paths:
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                where = f"{path}:{lineno}"
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"bad JSON at {where}: {exc}") from None
                sample = Sample.from_dict(obj, where)
                if sample.id in seen_ids:
                    raise CorpusError(
                        f"duplicate sample id {sample.id!r} at {where} "
                        f"(first seen at {seen_ids[sample.id]})"
                    )
                seen_ids[sample.id] = where
                if sample.text in seen_texts:
                    continue
                seen_texts.add(sample.text)
                pool.append(sample)
    return pool


def write_jsonl(samples: list[Sample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")


@dataclass
class PoolCensus:
    """Per-(language, label) counts and the per-language balanced cap."""

    counts: dict[tuple[str, int], int]
    per_language_cap: dict[str, int]

    @classmethod
    def of(cls, pool: list[Sample]) -> "PoolCensus":
        counts: dict[tuple[str, int], int] = {}
        for s in pool:
            counts[(s.language, s.label)] = counts.get((s.language, s.label), 0) + 1
        caps = {}
        for lang in {l for l, _ in counts}:
            caps[lang] = min(counts.get((lang, HUMAN), 0), counts.get((lang, MACHINE), 0))
        return cls(counts, caps)

    def to_dict(self) -> dict:
        langs = sorted(self.per_language_cap)
        return {
            "counts": {
                lang: {
                    "human": self.counts.get((lang, HUMAN), 0),
                    "machine": self.counts.get((lang, MACHINE), 0),
                }
                for lang in langs
            },
            "per_language_cap": {lang: self.per_language_cap[lang] for lang in langs},
        }


def _derived_rng(seed: int, *parts: str) -> random.Random:
    # Stable per-group stream, independent of group enumeration order.
    material = "|".join([str(seed), *parts]).encode("utf-8")
    return random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "little"))


def balance(pool: list[Sample], seed: int) -> tuple[list[Sample], PoolCensus]:
    """Per language, keep exactly cap samples of each label (cap = the smaller
    label count), drawn by seeded uniform sampling without replacement."""
    if not pool:
        raise CorpusError("cannot balance an empty pool")
    census = PoolCensus.of(pool)
    groups: dict[tuple[str, int], list[Sample]] = {}
    for s in pool:
        groups.setdefault((s.language, s.label), []).append(s)
    out: list[Sample] = []
    for lang in sorted(census.per_language_cap):
        cap = census.per_language_cap[lang]
        if cap == 0:
            log.warning("dropping language %r: missing one label entirely", lang)
            continue
        for label in (HUMAN, MACHINE):
            group = sorted(groups[(lang, label)], key=lambda s: s.id)
            rng = _derived_rng(seed, "balance", lang, str(label))
            chosen = rng.sample(group, cap)
            out.extend(sorted(chosen, key=lambda s: s.id))
    return out, census


def split(
    corpus: list[Sample],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Stratified train/dev/test split by (language, label); rounding
    remainders go to train; strata smaller than 3 go entirely to train."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise CorpusError(f"split fractions must sum to 1, got {fractions}")
    strata: dict[tuple[str, int], list[Sample]] = {}
    for s in corpus:
        strata.setdefault((s.language, s.label), []).append(s)
    train: list[Sample] = []
    dev: list[Sample] = []
    test: list[Sample] = []
    for (lang, label) in sorted(strata):
        group = sorted(strata[(lang, label)], key=lambda s: s.id)
        if len(group) < 3:
            log.warning("stratum (%s, %d) has %d samples; all to train", lang, label, len(group))
            train.extend(group)
            continue
        rng = _derived_rng(seed, "split", lang, str(label))
        rng.shuffle(group)
        n = len(group)
        n_dev = int(n * fractions[1])
        n_test = int(n * fractions[2])
        n_train = n - n_dev - n_test
        train.extend(group[:n_train])
        dev.extend(group[n_train : n_train + n_dev])
        test.extend(group[n_train + n_dev :])
    key = lambda s: s.id
    return sorted(train, key=key), sorted(dev, key=key), sorted(test, key=key)


# ---------------------------------------------------------------------------
# Code perturbations
# ---------------------------------------------------------------------------

_PY_KEYWORDS = frozenset(
    """False None True and as assert async await break class continue def del
    elif else except finally for from global if import in is lambda nonlocal
    not or pass raise return try while with yield""".split()
)
_C_KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while""".split()
)
_CPP_KEYWORDS = _C_KEYWORDS | frozenset(
    """alignas alignof bool catch class constexpr const_cast decltype delete
    dynamic_cast explicit export false friend mutable namespace new noexcept
    nullptr operator private protected public reinterpret_cast static_assert
    static_cast template this thread_local throw true try typeid typename
    using virtual wchar_t""".split()
)
_JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized
    this throw throws transient try void volatile while true false null""".split()
)
_JS_KEYWORDS = frozenset(
    """break case catch class const continue debugger default delete do else
    export extends finally for function if import in instanceof let new of
    return static super switch this throw try typeof var void while with yield
    async await true false null undefined""".split()
)
_CSHARP_KEYWORDS = frozenset(
    """abstract as base bool break byte case catch char checked class const
    continue decimal default delegate do double else enum event explicit
    extern false finally fixed float for foreach goto if implicit in int
    interface internal is lock long namespace new null object operator out
    override params private protected public readonly ref return sbyte sealed
    short sizeof stackalloc static string struct switch this throw true try
    typeof uint ulong unchecked unsafe ushort using var virtual void volatile
    while async await""".split()
)
_GO_KEYWORDS = frozenset(
    """break case chan const continue default defer else fallthrough for func
    go goto if import interface map package range return select struct switch
    type var true false nil iota""".split()
)

_C_COMMENT = r"//[^\n]*|/\*(?:.|\n)*?\*/"
_C_STRING = r"\"(?:\\.|[^\"\\\n])*\"|'(?:\\.|[^'\\\n])*'"
_BACKTICK = r"`[^`]*`"
_PY_STRING = (
    r"[rRbBuUfF]{0,3}(?:'''(?:\\.|[^\\])*?'''"
    r"|\"\"\"(?:\\.|[^\\])*?\"\"\""
    r"|'(?:\\.|[^'\\\n])*'"
    r"|\"(?:\\.|[^\"\\\n])*\")"
)
_NUMBER = (
    r"0[xX][0-9a-fA-F_]+[uUlL]*|0[bB][01_]+"
    r"|(?:[0-9][0-9_]*\.?[0-9_]*|\.[0-9][0-9_]*)(?:[eE][+-]?[0-9]+)?[uUlLfFdDmMjJ]*"
)
_NAME = r"[^\W\d]\w*"


@dataclass(frozen=True)
class _LexSpec:
    comment: str
    string: str
    keywords: frozenset[str]


_LEX_SPECS = {
    "python": _LexSpec(r"#[^\n]*", _PY_STRING, _PY_KEYWORDS),
    "c": _LexSpec(_C_COMMENT, _C_STRING, _C_KEYWORDS),
    "cpp": _LexSpec(_C_COMMENT, _C_STRING, _CPP_KEYWORDS),
    "java": _LexSpec(_C_COMMENT, _C_STRING, _JAVA_KEYWORDS),
    "javascript": _LexSpec(_C_COMMENT, _C_STRING + "|" + _BACKTICK, _JS_KEYWORDS),
    "csharp": _LexSpec(_C_COMMENT, _C_STRING, _CSHARP_KEYWORDS),
    "go": _LexSpec(_C_COMMENT, _C_STRING + "|" + _BACKTICK, _GO_KEYWORDS),
}

RENAME_LANGUAGES = frozenset(_LEX_SPECS)

_LEXER_CACHE: dict[str, re.Pattern] = {}


def _lexer(language: str) -> re.Pattern:
    if language not in _LEX_SPECS:
        raise CorpusError(
            f"unsupported language for renaming: {language!r} "
            f"(supported: {sorted(RENAME_LANGUAGES)})"
        )
    if language not in _LEXER_CACHE:
        spec = _LEX_SPECS[language]
        pattern = "|".join(
            f"(?P<{kind}>{expr})"
            for kind, expr in [
                ("comment", spec.comment),
                ("string", spec.string),
                ("number", _NUMBER),
                ("name", _NAME),
                ("ws", r"\s+"),
                ("op", r"."),
            ]
        )
        _LEXER_CACHE[language] = re.compile(pattern, re.DOTALL)
    return _LEXER_CACHE[language]


def lex(code: str, language: str) -> list[tuple[str, str]]:
    """(kind, text) tokens; kinds: comment, string, number, name, ws, op."""
    out = []
    for match in _lexer(language).finditer(code):
        kind = match.lastgroup
        out.append((kind, match.group()))
    return out


def token_count(code: str, language: str) -> int:
    """Number of non-whitespace lexer tokens."""
    return sum(1 for kind, _ in lex(code, language) if kind != "ws")


@dataclass
class PerturbRecord:
    original_id: str
    transform: str
    mapping: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "original_id": self.original_id,
            "transform": self.transform,
            "mapping": self.mapping,
        }


def perturb_rename(code: str, language: str, seed: int) -> tuple[str, PerturbRecord]:
    """Rename every distinct non-keyword identifier to v<k> via a seeded
    bijection; strings, comments, and literals are untouched, and the token
    count is preserved."""
    spec = _LEX_SPECS.get(language)
    tokens = lex(code, language)
    names = []
    seen = set()
    for kind, text in tokens:
        if kind == "name" and text not in spec.keywords and text not in seen:
            seen.add(text)
            names.append(text)
    ks = list(range(len(names)))
    random.Random(seed).shuffle(ks)
    mapping = {name: f"v{k}" for name, k in zip(names, ks)}
    rendered = "".join(
        mapping[text] if kind == "name" and text in mapping else text
        for kind, text in tokens
    )
    return rendered, PerturbRecord("", "rename", mapping)


def invert_rename(code: str, language: str, record: PerturbRecord) -> str:
    """Apply the inverse identifier mapping to renamed code."""
    inverse = {v: k for k, v in record.mapping.items()}
    tokens = lex(code, language)
    return "".join(
        inverse[text] if kind == "name" and text in inverse else text
        for kind, text in tokens
    )


def perturb_reformat(code: str, seed: int) -> str:
    """Whitespace-only reformat: seeded indentation style (tabs vs 4 spaces),
    seeded blank-run handling (collapse to 1 vs expand to 2), and trailing
    whitespace stripped. Non-whitespace bytes are never touched."""
    rng = random.Random(seed)
    use_spaces = rng.random() < 0.5
    collapse_blanks = rng.random() < 0.5

    had_final_newline = code.endswith("\n")
    lines = code.split("\n")
    if had_final_newline:
        lines = lines[:-1]

    formatted = []
    for line in lines:
        body = line.lstrip(" \t")
        indent = line[: len(line) - len(body)]
        if use_spaces:
            indent = indent.replace("\t", "    ")
        else:
            indent = indent.replace("    ", "\t")
        formatted.append((indent + body).rstrip())

    out: list[str] = []
    blank_run = 0
    for line in formatted:
        if line == "":
            blank_run += 1
            continue
        if blank_run:
            out.extend([""] * (1 if collapse_blanks else 2))
            blank_run = 0
        out.append(line)
    if blank_run:
        out.extend([""] * (1 if collapse_blanks else 2))

    text = "\n".join(out)
    if had_final_newline and text:
        text += "\n"
    return text
