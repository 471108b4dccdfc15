"""Evaluation metrics and the benchmark harness.

AUROC (Mann-Whitney with midranks), macro-F1, accuracy breakdowns by class
and language, cross-language accuracy matrices, and throughput / latency /
peak-memory benchmarking.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .encoder import encode_pooled
from .fusion import classify_logit, fuse_forward
from .pipeline import Detection, Detector, detect
from .tensor import METER
from .tokenizers import Encoding, encode


class MetricsError(ValueError):
    """Undefined metric or mismatched inputs."""


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks for ties:
    (R1 - n1(n1+1)/2) / (n1 * n0), R1 = positive-rank sum."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n1 = int(np.sum(labels == 1))
    n0 = int(np.sum(labels == 0))
    if n1 == 0 or n0 == 0:
        raise MetricsError("AUROC undefined: scores for a single class only")
    ranks = rankdata(scores, method="average")
    r1 = float(ranks[labels == 1].sum())
    return (r1 - n1 * (n1 + 1) / 2.0) / (n1 * n0)


def youden_j_threshold(scores, labels) -> float:
    """Score cutoff maximizing J = sensitivity + specificity - 1.

    Reported for reference next to calibration; the default decision
    threshold stays 0.5 unless a run config opts in."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n1 = int(np.sum(labels == 1))
    n0 = int(np.sum(labels == 0))
    if n1 == 0 or n0 == 0:
        raise MetricsError("Youden J undefined: scores for a single class only")
    best_j, best_t = -1.0, 0.5
    for t in np.unique(scores):
        preds = scores >= t
        tpr = np.sum(preds & (labels == 1)) / n1
        fpr = np.sum(preds & (labels == 0)) / n0
        j = tpr - fpr
        if j > best_j:
            best_j, best_t = j, float(t)
    return best_t


def confusion(preds, labels) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) with class 1 as positive."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    return tp, fp, tn, fn


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    # A zero denominator contributes 0, not NaN.
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn > 0 else 0.0
    return precision, recall, f1


def f1_macro(preds, labels) -> float:
    """Unweighted mean of the per-class F1 over classes {0, 1}."""
    tp, fp, tn, fn = confusion(preds, labels)
    f1_pos = _prf(tp, fp, fn)[2]
    f1_neg = _prf(tn, fn, fp)[2]  # class 0 as positive: tn are its true positives
    return (f1_pos + f1_neg) / 2.0


@dataclass
class EvalReport:
    auroc: float
    f1_macro: float
    accuracy: float
    per_language: dict[str, float]
    per_class: dict[int, tuple[float, float, float]]
    confusion: tuple[int, int, int, int]
    n: int
    samples_per_sec: float | None = None
    latency_ms: dict[str, float] | None = None
    peak_bytes: int | None = None

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "auroc": self.auroc,
            "f1_macro": self.f1_macro,
            "accuracy": self.accuracy,
            "n": self.n,
            "per_language": dict(sorted(self.per_language.items())),
            "per_class": {
                str(c): {"precision": p, "recall": r, "f1": f}
                for c, (p, r, f) in sorted(self.per_class.items())
            },
            "confusion": {
                "tp": self.confusion[0],
                "fp": self.confusion[1],
                "tn": self.confusion[2],
                "fn": self.confusion[3],
            },
        }
        if include_timing:
            out["samples_per_sec"] = self.samples_per_sec
            out["latency_ms"] = self.latency_ms
            out["peak_bytes"] = self.peak_bytes
        return out

    def to_csv(self) -> str:
        """Two-column metric table; float metrics rounded to 3 decimals."""
        rows = [
            ("auroc", f"{self.auroc:.3f}"),
            ("f1_macro", f"{self.f1_macro:.3f}"),
            ("accuracy", f"{self.accuracy:.3f}"),
            ("n", str(self.n)),
        ]
        for c in sorted(self.per_class):
            p, r, f = self.per_class[c]
            rows += [
                (f"precision_{c}", f"{p:.3f}"),
                (f"recall_{c}", f"{r:.3f}"),
                (f"f1_{c}", f"{f:.3f}"),
            ]
        tp, fp, tn, fn = self.confusion
        rows += [("tp", str(tp)), ("fp", str(fp)), ("tn", str(tn)), ("fn", str(fn))]
        for lang in sorted(self.per_language):
            rows.append((f"accuracy_{lang}", f"{self.per_language[lang]:.3f}"))
        return "metric,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"


def accuracy_report(
    detections: list[Detection],
    samples,
    samples_per_sec: float | None = None,
    latency_ms: dict[str, float] | None = None,
    peak_bytes: int | None = None,
) -> EvalReport:
    """Join detections with labeled samples by id and fill every metric."""
    det_by_id = {d.id: d for d in detections}
    sample_ids = {s.id for s in samples}
    missing_dets = sorted(sample_ids - det_by_id.keys())
    missing_samples = sorted(det_by_id.keys() - sample_ids)
    if missing_dets or missing_samples:
        raise MetricsError(
            f"id mismatch: samples without detections {missing_dets[:10]}, "
            f"detections without samples {missing_samples[:10]}"
        )
    ordered = sorted(samples, key=lambda s: s.id)
    labels = np.array([s.label for s in ordered])
    scores = np.array([det_by_id[s.id].score for s in ordered])
    preds = np.array([det_by_id[s.id].label for s in ordered])

    tp, fp, tn, fn = confusion(preds, labels)
    n = len(ordered)
    per_language: dict[str, float] = {}
    for lang in sorted({s.language for s in ordered}):
        idx = [i for i, s in enumerate(ordered) if s.language == lang]
        per_language[lang] = float(np.mean(preds[idx] == labels[idx]))
    return EvalReport(
        auroc=auroc(scores, labels),
        f1_macro=f1_macro(preds, labels),
        accuracy=(tp + tn) / n,
        per_language=per_language,
        per_class={0: _prf(tn, fn, fp), 1: _prf(tp, fp, fn)},
        confusion=(tp, fp, tn, fn),
        n=n,
        samples_per_sec=samples_per_sec,
        latency_ms=latency_ms,
        peak_bytes=peak_bytes,
    )


def retention_report(clean: EvalReport, perturbed: EvalReport, transform: str) -> dict:
    """Perturbed-over-clean AUROC retention for one transform."""
    return {
        "transform": transform,
        "clean_auroc": clean.auroc,
        "perturbed_auroc": perturbed.auroc,
        "retention": perturbed.auroc / clean.auroc if clean.auroc > 0 else 0.0,
    }


# ---------------------------------------------------------------------------
# Cross-language matrix
# ---------------------------------------------------------------------------

@dataclass
class CrossLangMatrix:
    """Accuracy of the checkpoint trained on row-language, evaluated on
    column-language; the diagonal is withheld."""

    languages: list[str]
    cells: dict[tuple[str, str], float] = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["train_language," + ",".join(self.languages)]
        for row in self.languages:
            vals = [
                "-" if row == col else f"{self.cells[(row, col)]:.3f}"
                for col in self.languages
            ]
            lines.append(row + "," + ",".join(vals))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "languages": self.languages,
            "cells": {f"{r}->{c}": v for (r, c), v in sorted(self.cells.items())},
        }


def cross_language_matrix(
    checkpoints: dict[str, Detector], corpora: dict[str, list]
) -> CrossLangMatrix:
    if len(checkpoints) < 2:
        raise MetricsError("cross-language matrix needs at least 2 languages")
    missing = sorted(set(checkpoints) - set(corpora))
    if missing:
        raise MetricsError(f"no eval corpus for checkpoint language(s): {missing}")
    languages = sorted(checkpoints)
    out = CrossLangMatrix(languages)
    for row in languages:
        det = checkpoints[row]
        for col in languages:
            if row == col:
                continue
            samples = corpora[col]
            if not samples:
                raise MetricsError(f"empty eval corpus for language {col!r}")
            hits = 0
            for s in samples:
                hits += int(detect(det, s.text, s.id).label == s.label)
            out.cells[(row, col)] = hits / len(samples)
    return out


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------

BENCH_TOKENS = 512
_WARMUP_BATCHES = 3


@dataclass
class BenchRow:
    batch: int
    samples_per_sec: float
    latency_p50_ms: float | None
    latency_p95_ms: float | None
    peak_bytes: int
    threads: int

    def to_dict(self) -> dict:
        return {
            "batch": self.batch,
            "samples_per_sec": self.samples_per_sec,
            "latency_p50_ms": self.latency_p50_ms,
            "latency_p95_ms": self.latency_p95_ms,
            "peak_bytes": self.peak_bytes,
            "threads": self.threads,
        }


def _padded_encoding(vocab, text: str, n_tokens: int) -> Encoding:
    ids = encode(vocab, text).ids[: n_tokens - 2]
    ids = [vocab.cls_id] + ids + [vocab.sep_id]
    mask = [1] * len(ids)
    while len(ids) < n_tokens:
        ids.append(vocab.pad_id)
        mask.append(0)
    return Encoding(ids, mask)


def bench(
    det: Detector,
    samples,
    batch_sizes: list[int],
    threads: int = 1,
    n_tokens: int = BENCH_TOKENS,
) -> list[BenchRow]:
    """Throughput, latency, and peak tensor bytes at fixed-length inputs
    (512 tokens by default, truncated/padded).

    Each run warms up on 3 untimed batches, then times one full pass.
    Latency percentiles are reported for batch size 1 only.
    """
    samples = list(samples)
    if not samples:
        raise MetricsError("bench corpus is empty")
    enc_a = [_padded_encoding(det.vocab_a, s.text, n_tokens) for s in samples]
    enc_b = [_padded_encoding(det.vocab_b, s.text, n_tokens) for s in samples]

    def score_one(i: int) -> float:
        ha = encode_pooled(det.enc_a, enc_a[i])
        hb = encode_pooled(det.enc_b, enc_b[i])
        return classify_logit(det.head, fuse_forward(det.head, ha, hb)[0])

    rows = []
    n = len(samples)
    for batch in batch_sizes:
        if batch < 1:
            raise MetricsError(f"batch size must be >= 1, got {batch}")
        METER.reset_peak()
        for i in range(min(_WARMUP_BATCHES * batch, n)):
            score_one(i)
        per_sample_s = []
        t_start = time.monotonic()
        for lo in range(0, n, batch):
            group = range(lo, min(lo + batch, n))
            t0 = time.monotonic()
            # Keep the whole group's logits live together, as a batched
            # runtime would, so the meter sees the batch footprint.
            _ = [score_one(i) for i in group]
            t1 = time.monotonic()
            if batch == 1:
                per_sample_s.append(t1 - t0)
        wall = time.monotonic() - t_start
        rows.append(
            BenchRow(
                batch=batch,
                samples_per_sec=n / wall,
                latency_p50_ms=float(np.percentile(per_sample_s, 50) * 1e3) if per_sample_s else None,
                latency_p95_ms=float(np.percentile(per_sample_s, 95) * 1e3) if per_sample_s else None,
                peak_bytes=METER.peak_bytes,
                threads=threads,
            )
        )
    return rows
