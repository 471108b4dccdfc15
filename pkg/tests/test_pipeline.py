import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duolens.fusion import FusionHead
from duolens.pipeline import (
    Calibration,
    Detector,
    InternalError,
    PipelineError,
    aggregate,
    chunk,
    detect,
    detect_batch,
    fit_temperature,
    nll,
    raw_logit,
    score_single_window,
)
from duolens.synthetic import disjoint_corpus


@pytest.fixture(scope="module")
def detector(tiny_encoders, vocab):
    enc_a, enc_b = tiny_encoders
    return Detector(enc_a, vocab, enc_b, vocab, FusionHead.init(64, 64, 16, 5))


class TestChunk:
    def test_single_window(self):
        plan = chunk(list(range(100)), 512, 448)
        assert plan.chunks == [(0, 100)]

    def test_spec_arithmetic_900_tokens(self):
        plan = chunk(list(range(900)), 512, 448)
        assert plan.chunks == [(0, 510), (448, 900)]

    def test_empty_document(self):
        with pytest.raises(PipelineError, match="empty document"):
            chunk([], 512, 448)

    def test_window_and_stride_validated(self):
        with pytest.raises(PipelineError, match="window"):
            chunk([1], 2, 1)
        with pytest.raises(PipelineError, match="stride"):
            chunk([1], 512, 511)
        with pytest.raises(PipelineError, match="stride"):
            chunk([1], 512, 0)

    @given(n=st.integers(1, 5000))
    @settings(max_examples=200, deadline=None)
    def test_coverage_and_stride_invariants(self, n):
        plan = chunk(list(range(n)), 512, 448)
        covered = set()
        for start, end in plan.chunks:
            assert end - start <= 510
            covered.update(range(start, end))
        assert covered == set(range(n))
        starts = [s for s, _ in plan.chunks]
        assert all(b - a == 448 for a, b in zip(starts, starts[1:]))

    def test_exact_fit_is_single_chunk(self):
        plan = chunk(list(range(510)), 512, 448)
        assert plan.chunks == [(0, 510)]


class TestAggregate:
    def test_single_chunk_identity(self):
        assert aggregate([1.25]) == 1.25
        assert aggregate([1.25], "max") == 1.25

    def test_mean_and_max(self):
        assert aggregate([-1.0, 1.0], "mean") == 0.0
        assert aggregate([-1.0, 1.0], "max") == 1.0

    def test_empty_rejected(self):
        with pytest.raises(PipelineError):
            aggregate([])

    def test_unknown_mode(self):
        with pytest.raises(PipelineError, match="aggregation"):
            aggregate([1.0], "median")


class TestCalibration:
    def test_temperature_positive(self):
        with pytest.raises(PipelineError):
            Calibration(0.0)

    def test_identity_at_t1(self):
        c = Calibration(1.0)
        assert c.probability(0.0) == 0.5
        assert c.probability(2.0) == pytest.approx(1 / (1 + math.exp(-2.0)), abs=1e-15)

    def test_calibrated_oracle_recovers_t_near_one(self):
        rng = np.random.default_rng(0)
        z = rng.normal(0, 2, size=4000)
        y = (rng.random(4000) < 1 / (1 + np.exp(-z))).astype(int)
        cal = fit_temperature(z, y)
        assert abs(cal.t - 1.0) < 1e-2

    def test_scale_equivariance(self):
        rng = np.random.default_rng(1)
        z = rng.normal(0, 2, size=4000)
        y = (rng.random(4000) < 1 / (1 + np.exp(-z))).astype(int)
        t1 = fit_temperature(z, y).t
        t3 = fit_temperature(z * 3, y).t
        assert abs(t3 / t1 - 3.0) / 3.0 < 1e-2

    def test_fitted_nll_never_worse_than_identity(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            r = np.random.default_rng(seed)
            z = r.normal(0, 3, size=200)
            y = r.integers(0, 2, size=200)
            y[0], y[1] = 0, 1
            cal = fit_temperature(z, y)
            assert nll(z, y, cal.t) <= nll(z, y, 1.0) + 1e-15

    def test_single_class_rejected(self):
        with pytest.raises(PipelineError, match="both classes"):
            fit_temperature([1.0, 2.0], [1, 1])


class TestDetect:
    def test_label_follows_threshold(self, detector):
        docs = disjoint_corpus(5, seed=3, id_prefix="lab")
        for s in docs:
            d = detect(detector, s.text, s.id)
            assert d.label == int(d.score >= 0.5)
            assert 0.0 <= d.score <= 1.0
            assert d.n_chunks == len(d.per_chunk) == 1

    def test_temperature_never_flips_labels_at_half(self, detector, vocab):
        import dataclasses

        docs = disjoint_corpus(8, seed=4, id_prefix="tmp")
        hot = dataclasses.replace(detector, calibration=Calibration(3.7))
        cold = dataclasses.replace(detector, calibration=Calibration(0.21))
        for s in docs:
            labels = {detect(d, s.text, s.id).label for d in (detector, hot, cold)}
            assert len(labels) == 1

    def test_chunked_equals_single_window_for_short_docs(self, detector):
        docs = disjoint_corpus(10, seed=5, id_prefix="idn", min_len=4, max_len=120)
        for s in docs:
            a = detect(detector, s.text, s.id)
            b = score_single_window(detector, s.text, s.id)
            assert a == b

    def test_long_document_multi_chunk(self, detector):
        text = " ".join(f"tok{4 + (i % 900)}" for i in range(1300))
        d = detect(detector, text, "long")
        assert d.n_chunks == 3
        assert d.score == detector.calibration.probability(float(np.mean(d.per_chunk)))

    def test_max_aggregation(self, detector):
        import dataclasses

        det = dataclasses.replace(detector, aggregation="max")
        text = " ".join(f"tok{4 + (i % 900)}" for i in range(1300))
        d = detect(det, text, "long")
        assert d.score == det.calibration.probability(float(np.max(d.per_chunk)))

    def test_empty_after_tokenization(self, detector):
        with pytest.raises(PipelineError, match="empty after tokenization"):
            detect(detector, "   ", "blank")

    def test_nan_logit_reports_chunk_index(self, detector):
        import dataclasses

        bad_head = FusionHead.init(64, 64, 16, 5)
        bad_head.w[:] = float("nan")
        det = dataclasses.replace(detector, head=bad_head)
        with pytest.raises(InternalError, match="chunk 0"):
            detect(det, "tok10 tok20", "nan-doc")

    def test_batch_matches_single(self, detector):
        docs = [(s.id, s.text) for s in disjoint_corpus(15, seed=6, id_prefix="bat")]
        singles = [detect(detector, text, doc_id) for doc_id, text in docs]
        assert detect_batch(detector, docs, threads=1) == singles
        assert detect_batch(detector, docs, threads=4) == singles

    def test_detection_json_shape(self, detector):
        import json

        d = detect(detector, "tok10 tok600", "doc-1")
        obj = json.loads(d.to_json())
        assert list(obj) == ["id", "score", "label", "n_chunks", "per_chunk"]
        assert obj["id"] == "doc-1"

    def test_determinism_bytes(self, detector):
        text = "tok10 tok600 tok333"
        a = detect(detector, text, "x").to_json()
        b = detect(detector, text, "x").to_json()
        assert a == b

    def test_raw_logit_matches_detect_score(self, detector):
        text = "tok44 tok880 tok12"
        z, per_chunk = raw_logit(detector, text)
        d = detect(detector, text, "z")
        assert d.per_chunk == per_chunk
        assert d.score == detector.calibration.probability(z)
