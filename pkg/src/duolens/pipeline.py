"""End-to-end document scoring.

tokenize -> chunk to windows of at most 512 tokens (specials included) ->
encode each chunk with both encoders -> fuse pooled vectors -> aggregate
chunk logits -> temperature-calibrated probability -> 0/1 label
(0 human-written, 1 machine-generated).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderModel, encode_pooled, wrap_with_specials
from .fusion import FusionHead, classify_logit, fuse_forward
from .tokenizers import Vocab, encode

DEFAULT_WINDOW = 512
DEFAULT_STRIDE = 448
DEFAULT_THRESHOLD = 0.5


class PipelineError(ValueError):
    """Invalid pipeline input (empty document, bad plan parameters)."""


class InternalError(RuntimeError):
    """Numerical failure inside the pipeline (NaN chunk logit)."""


@dataclass
class ChunkPlan:
    """Content-token index ranges; each chunk plus its two specials fits the
    window. Consecutive starts differ by exactly `stride`."""

    window: int
    stride: int
    chunks: list[tuple[int, int]]


def chunk(ids, window: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE) -> ChunkPlan:
    n = len(ids)
    if n == 0:
        raise PipelineError("empty document")
    if window < 3:
        raise PipelineError(f"window must be >= 3 (room for specials), got {window}")
    if not 1 <= stride <= window - 2:
        raise PipelineError(f"stride must be in [1, window-2], got {stride}")
    cap = window - 2
    chunks = []
    start = 0
    while True:
        end = min(start + cap, n)
        chunks.append((start, end))
        if end >= n:
            break
        start += stride
    return ChunkPlan(window, stride, chunks)


def aggregate(per_chunk_logits, mode: str = "mean") -> float:
    if len(per_chunk_logits) == 0:
        raise PipelineError("cannot aggregate zero chunk logits")
    if mode == "mean":
        return float(np.mean(per_chunk_logits))
    if mode == "max":
        return float(np.max(per_chunk_logits))
    raise PipelineError(f"unknown aggregation mode {mode!r}")


@dataclass
class Calibration:
    """Temperature for sigmoid(z / t); t = 1 is the identity."""

    t: float = 1.0

    def __post_init__(self) -> None:
        if not self.t > 0:
            raise PipelineError(f"temperature must be > 0, got {self.t}")

    def probability(self, logit: float) -> float:
        return float(1.0 / (1.0 + math.exp(-logit / self.t)))


def nll(logits, labels, t: float = 1.0) -> float:
    """Mean negative log-likelihood of sigmoid(z/t), in the stable form."""
    z = np.asarray(logits, dtype=np.float64) / t
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - y * z))


def fit_temperature(dev_logits, dev_labels) -> Calibration:
    """Golden-section search for the T minimizing dev NLL of sigmoid(z/T),
    over ln T in [ln 0.05, ln 10] to tolerance 1e-6. Never worse than T=1."""
    labels = np.asarray(dev_labels)
    if len(set(labels.tolist())) < 2:
        raise PipelineError("temperature fitting needs both classes in the dev split")
    logits = np.asarray(dev_logits, dtype=np.float64)

    def f(ln_t: float) -> float:
        return nll(logits, labels, math.exp(ln_t))

    lo, hi = math.log(0.05), math.log(10.0)
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > 1e-6:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    t = math.exp((a + b) / 2.0)
    if nll(logits, labels, 1.0) <= nll(logits, labels, t):
        t = 1.0
    return Calibration(t)


@dataclass
class Detection:
    id: str
    score: float
    label: int
    per_chunk: list[float]
    n_chunks: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "score": self.score,
                "label": self.label,
                "n_chunks": self.n_chunks,
                "per_chunk": self.per_chunk,
            },
            sort_keys=False,
        )


@dataclass
class Detector:
    """Everything needed to score documents."""

    enc_a: EncoderModel
    vocab_a: Vocab
    enc_b: EncoderModel
    vocab_b: Vocab
    head: FusionHead
    calibration: Calibration = field(default_factory=Calibration)
    window: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE
    aggregation: str = "mean"
    threshold: float = DEFAULT_THRESHOLD


def _chunk_pooled(model: EncoderModel, vocab: Vocab, text: str, window: int, stride: int):
    """Pooled vector per chunk of one encoder's tokenization of `text`."""
    ids = encode(vocab, text).ids
    if not ids:
        raise PipelineError("document is empty after tokenization")
    plan = chunk(ids, window, stride)
    return [
        encode_pooled(model, wrap_with_specials(vocab, ids[s:e])) for s, e in plan.chunks
    ]


def raw_logit(det: Detector, text: str) -> tuple[float, list[float]]:
    """Aggregated raw logit and per-chunk logits for one document.

    The two encoders tokenize independently; chunk lists are paired by index,
    with the shorter side repeating its last chunk (chunk counts can differ
    only when both tokenizations overflow one window at different rates).
    """
    pooled_a = _chunk_pooled(det.enc_a, det.vocab_a, text, det.window, det.stride)
    pooled_b = _chunk_pooled(det.enc_b, det.vocab_b, text, det.window, det.stride)
    n_chunks = max(len(pooled_a), len(pooled_b))
    per_chunk = []
    for k in range(n_chunks):
        ha = pooled_a[min(k, len(pooled_a) - 1)]
        hb = pooled_b[min(k, len(pooled_b) - 1)]
        fused, _ = fuse_forward(det.head, ha, hb)
        z = classify_logit(det.head, fused)
        if math.isnan(z):
            raise InternalError(f"NaN logit at chunk {k}")
        per_chunk.append(z)
    return aggregate(per_chunk, det.aggregation), per_chunk


def detect(det: Detector, text: str, doc_id: str = "") -> Detection:
    z, per_chunk = raw_logit(det, text)
    score = det.calibration.probability(z)
    return Detection(
        id=doc_id,
        score=score,
        label=int(score >= det.threshold),
        per_chunk=per_chunk,
        n_chunks=len(per_chunk),
    )


def detect_batch(det: Detector, docs, threads: int = 1) -> list[Detection]:
    """Score (doc_id, text) pairs, preserving input order."""
    docs = list(docs)
    if threads <= 1:
        return [detect(det, text, doc_id) for doc_id, text in docs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda d: detect(det, d[1], d[0]), docs))


def score_single_window(det: Detector, text: str, doc_id: str = "") -> Detection:
    """No-chunk direct path for documents fitting one window; identical to
    detect() for such documents."""
    ids_a = encode(det.vocab_a, text).ids
    ids_b = encode(det.vocab_b, text).ids
    if not ids_a or not ids_b:
        raise PipelineError("document is empty after tokenization")
    cap = det.window - 2
    if len(ids_a) > cap or len(ids_b) > cap:
        raise PipelineError("document does not fit a single window")
    ha = encode_pooled(det.enc_a, wrap_with_specials(det.vocab_a, ids_a))
    hb = encode_pooled(det.enc_b, wrap_with_specials(det.vocab_b, ids_b))
    z = classify_logit(det.head, fuse_forward(det.head, ha, hb)[0])
    score = det.calibration.probability(z)
    return Detection(doc_id, score, int(score >= det.threshold), [z], 1)
