"""Acceptance suite: one test per criterion, each printed as a pass/fail
line in the terminal summary (see conftest).

Full-scale pretrained-checkpoint results are out of reach on a desk
machine, so these criteria are property-based plus scaled-down experiments
on the tiny preset with frozen random encoders.
"""

import dataclasses
import json
import random
import time
from collections import Counter

import numpy as np
import pytest

from duolens.cli import EXIT_OK, dispatch
from duolens.corpus import Sample, balance, perturb_reformat, perturb_rename, token_count, write_jsonl
from duolens.fusion import (
    ClassWeights,
    FusionHead,
    LinearProbe,
    TrainConfig,
    batch_logits,
    cb_bce,
    head_gradients,
    pooled_features,
    probe_gradients,
    probe_logits,
)
from duolens.metrics import accuracy_report, auroc, bench, f1_macro, retention_report
from duolens.pipeline import (
    Calibration,
    Detector,
    chunk,
    detect,
    fit_temperature,
    nll,
    score_single_window,
)
from duolens.synthetic import code_like_corpus, disjoint_corpus, save_synthetic_vocab

from oracles import auroc_all_pairs, finite_difference_grads, max_relative_error

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def detector(tiny_encoders, vocab, trained_head):
    enc_a, enc_b = tiny_encoders
    head, _, _ = trained_head
    return Detector(enc_a, vocab, enc_b, vocab, head)


@pytest.fixture(scope="module")
def test_features(tiny_encoders, vocab, synthetic_splits):
    enc_a, enc_b = tiny_encoders
    _, dev, test = synthetic_splits
    return {
        "dev": (
            pooled_features(enc_a, vocab, dev),
            pooled_features(enc_b, vocab, dev),
            np.array([s.label for s in dev]),
        ),
        "test": (
            pooled_features(enc_a, vocab, test),
            pooled_features(enc_b, vocab, test),
            np.array([s.label for s in test]),
        ),
    }


def test_gradient_correctness():
    """Head and probe analytic gradients vs central finite differences
    (f64, step 1e-4): relative error < 1e-4 over >= 50 draws, < 10 s."""
    rng = np.random.default_rng(2024)
    t0 = time.monotonic()
    worst = 0.0
    for draw in range(50):
        d_a, d_b, d_f = 5, 4, 6
        n = int(rng.integers(1, 6))
        head = FusionHead.init(d_a, d_b, d_f, int(rng.integers(2**31)))
        for p in head.params().values():
            p += rng.normal(0, 0.4, size=p.shape)
        fa = rng.normal(size=(n, d_a))
        fb = rng.normal(size=(n, d_b))
        y = rng.integers(0, 2, size=n)
        if len(set(y.tolist())) < 2:
            cw = ClassWeights(0.7, 1.6)  # weights need not come from this batch
        else:
            cw = ClassWeights.from_labels(y)
        analytic = head_gradients(head, fa, fb, y, cw).as_dict()
        numeric = finite_difference_grads(
            lambda: cb_bce(batch_logits(head, fa, fb), y, cw), head.params()
        )
        worst = max(worst, max_relative_error(analytic, numeric))

        probe = LinearProbe.init(d_a, int(rng.integers(2**31)))
        analytic_p = probe_gradients(probe, fa, y, cw)
        numeric_p = finite_difference_grads(
            lambda: cb_bce(probe_logits(probe, fa), y, cw), probe.params()
        )
        worst = max(worst, max_relative_error(analytic_p, numeric_p))
    elapsed = time.monotonic() - t0
    assert worst < 1e-4, f"worst relative gradient error {worst}"
    assert elapsed < 10.0, f"gradient check took {elapsed:.1f}s"


def test_auroc_oracle_equivalence():
    """metrics.auroc equals the all-pairs brute-force oracle within 1e-9 on
    100 random tie-heavy instances (n <= 500), < 5 s."""
    rng = np.random.default_rng(7)
    t0 = time.monotonic()
    sizes = [500] * 5 + [int(rng.integers(5, 500)) for _ in range(95)]
    for n in sizes:
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        if rng.random() < 0.5:
            scores = rng.integers(0, max(2, n // 10), size=n).astype(float)  # many ties
        else:
            scores = rng.normal(size=n)
        assert abs(auroc(scores, labels) - auroc_all_pairs(scores, labels)) < 1e-9
    elapsed = time.monotonic() - t0
    assert elapsed < 5.0, f"AUROC oracle check took {elapsed:.1f}s"


def test_synthetic_end_to_end_task(tiny_encoders, vocab, synthetic_splits, trained_head, test_features):
    """Tiny preset + frozen random encoders + disjoint-vocabulary corpus
    (2000/500/500, seed 42): test AUROC >= 0.99 and macro-F1 >= 0.95 within
    20 epochs, < 2 min single-threaded."""
    head, log, elapsed = trained_head
    assert len(log.epochs) <= 20
    assert elapsed < 120.0, f"training took {elapsed:.1f}s"
    fa, fb, y = test_features["test"]
    z = batch_logits(head, fa, fb)
    test_auroc = auroc(z, y)
    test_f1 = f1_macro((z >= 0).astype(int), y)
    assert test_auroc >= 0.99, f"test AUROC {test_auroc:.4f}"
    assert test_f1 >= 0.95, f"test macro-F1 {test_f1:.4f}"
    # checkpoint selection: best-so-far dev AUROC is the running maximum
    aurocs = [e.dev_auroc for e in log.epochs]
    assert log.best_dev_auroc == max(aurocs)
    assert log.best_epoch == aurocs.index(max(aurocs))


def test_calibration(trained_head, test_features):
    """fit_temperature strictly reduces dev NLL vs T=1 and changes neither
    the AUROC (exactly) nor any threshold-0.5 label."""
    head, _, _ = trained_head
    fa, fb, y = test_features["dev"]
    z = batch_logits(head, fa, fb)
    cal = fit_temperature(z, y)
    assert nll(z, y, cal.t) < nll(z, y, 1.0)
    raw_scores = 1.0 / (1.0 + np.exp(-z))
    cal_scores = np.array([cal.probability(v) for v in z])
    assert auroc(cal_scores, y) == auroc(raw_scores, y)
    assert auroc(cal_scores, y) == auroc(z, y)
    assert np.array_equal(cal_scores >= 0.5, raw_scores >= 0.5)


def test_chunking_identity(detector, vocab):
    """200 fuzzed documents of <= 510 content tokens: chunked and unchunked
    detections are bit-identical; 2000-token documents satisfy the coverage
    and stride invariants."""
    rng = random.Random(99)
    for i in range(200):
        n = rng.randint(1, 64) if i % 4 else rng.randint(65, 510)
        words = [f"tok{rng.randrange(4, 1000)}" for _ in range(n)]
        text = " ".join(words)
        chunked = detect(detector, text, f"fz{i}")
        direct = score_single_window(detector, text, f"fz{i}")
        assert chunked == direct
        assert chunked.n_chunks == 1
    for seed in range(20):
        r = random.Random(seed)
        ids = [r.randrange(1000) for _ in range(2000)]
        plan = chunk(ids, 512, 448)
        covered = set()
        for start, end in plan.chunks:
            assert end - start <= 512 - 2
            covered.update(range(start, end))
        assert covered == set(range(2000))
        starts = [s for s, _ in plan.chunks]
        assert all(b - a == 448 for a, b in zip(starts, starts[1:]))


def test_balance_procedure():
    """Min-rule pool {(py:10,7),(go:5,9)} -> 7+7 and 5+5; a pool mimicking
    the code census -> 6000 per class per language, 84,000 total."""
    pool = []
    for lang, n_human, n_machine in (("py", 10, 7), ("go", 5, 9)):
        for label, count in ((0, n_human), (1, n_machine)):
            pool.extend(
                Sample(f"{lang}-{label}-{i}", f"{lang} {label} {i}", lang, label, "t")
                for i in range(count)
            )
    balanced, _ = balance(pool, seed=0)
    counts = Counter((s.language, s.label) for s in balanced)
    assert counts == {("py", 0): 7, ("py", 1): 7, ("go", 0): 5, ("go", 1): 5}

    languages = ["python", "java", "javascript", "c", "csharp", "cpp", "go"]
    big_pool = []
    for li, lang in enumerate(languages):
        for label, count in ((0, 6000 + 37 * (li + 1)), (1, 6000)):
            big_pool.extend(
                Sample(f"{lang}-{label}-{i}", f"{lang} {label} {i}", lang, label, "census")
                for i in range(count)
            )
    balanced, census = balance(big_pool, seed=42)
    assert len(balanced) == 84_000
    counts = Counter((s.language, s.label) for s in balanced)
    for lang in languages:
        assert counts[(lang, 0)] == counts[(lang, 1)] == 6000
    assert all(census.per_language_cap[lang] == 6000 for lang in languages)


def test_perturbation_retention_harness(detector):
    """Eval after rename/reformat emits a retention report; rename preserves
    token counts on 100% of samples."""
    corpus = code_like_corpus(50, seed=13)
    clean_dets = [detect(detector, s.text, s.id) for s in corpus]
    clean = accuracy_report(clean_dets, corpus)

    reports = {}
    for transform in ("rename", "reformat"):
        perturbed = []
        for s in corpus:
            if transform == "rename":
                new_text, _ = perturb_rename(s.text, s.language, seed=21)
                assert token_count(new_text, s.language) == token_count(s.text, s.language)
            else:
                new_text = perturb_reformat(s.text, seed=21)
            perturbed.append(dataclasses.replace(s, text=new_text))
        dets = [detect(detector, s.text, s.id) for s in perturbed]
        reports[transform] = retention_report(clean, accuracy_report(dets, perturbed), transform)

    for transform, report in reports.items():
        assert set(report) == {"transform", "clean_auroc", "perturbed_auroc", "retention"}
        assert np.isfinite(report["retention"])
    # whitespace-only reformatting cannot change WordPiece tokenization
    assert reports["reformat"]["retention"] == pytest.approx(1.0, abs=1e-12)


def test_bench_reproducible(detector):
    """samples/sec, p50/p95 latency, and peak bytes agree within 25% across
    two runs on the tiny preset at 512-token inputs."""
    corpus = disjoint_corpus(4, seed=17, min_len=40, max_len=40, id_prefix="bench")
    runs = [bench(detector, corpus, [1])[0] for _ in range(2)]

    def rel_diff(a, b):
        return abs(a - b) / max(a, b)

    assert rel_diff(runs[0].samples_per_sec, runs[1].samples_per_sec) < 0.25
    assert rel_diff(runs[0].latency_p50_ms, runs[1].latency_p50_ms) < 0.25
    assert rel_diff(runs[0].latency_p95_ms, runs[1].latency_p95_ms) < 0.25
    assert rel_diff(runs[0].peak_bytes, runs[1].peak_bytes) < 0.25
    assert runs[0].peak_bytes > 0


def test_cli_determinism(tmp_path):
    """build-dataset, train-head, and eval produce byte-identical primary
    outputs across two consecutive runs with fixed seeds."""
    root = tmp_path
    save_synthetic_vocab(root / "vocab.txt")
    from duolens.bundle import save_bundle
    from duolens.encoder import random_encoder_bundle, tiny_config

    for name, seed in (("enc_a", 101), ("enc_b", 202)):
        bundle = random_encoder_bundle(tiny_config("mean"), seed)
        bundle.metadata["tokenizer_kind"] = "wordpiece"
        bundle.metadata["tokenizer_vocab"] = "vocab.txt"
        save_bundle(bundle, root / f"{name}.dlt")

    pools = root / "pools"
    pools.mkdir()
    write_jsonl(disjoint_corpus(50, seed=5, id_prefix="p1", language="python"), pools / "p1.jsonl")
    write_jsonl(disjoint_corpus(30, seed=6, id_prefix="p2", language="go"), pools / "p2.jsonl")

    data_outs = []
    for run in ("r1", "r2"):
        out = root / f"data-{run}"
        assert dispatch(["build-dataset", "--pools", str(pools), "--out", str(out),
                         "--seed", "11"]) == EXIT_OK
        data_outs.append(out)
    for f in ("train.jsonl", "dev.jsonl", "test.jsonl", "census.json"):
        assert (data_outs[0] / f).read_bytes() == (data_outs[1] / f).read_bytes()

    config = {
        "seed": 11,
        "encoder_a": {"bundle": "enc_a.dlt"},
        "encoder_b": {"bundle": "enc_b.dlt"},
        "head": "head-r1.dlt",
        "data": {k: f"data-r1/{k}.jsonl" for k in ("train", "dev", "test")},
        "train": {"epochs": 2, "fusion_dim": 16},
    }
    (root / "config.json").write_text(json.dumps(config))

    heads = []
    for run in ("r1", "r2"):
        out = root / f"head-{run}.dlt"
        assert dispatch(["train-head", "--config", str(root / "config.json"),
                         "--out", str(out)]) == EXIT_OK
        heads.append(out)
    assert heads[0].read_bytes() == heads[1].read_bytes()
    assert (root / "head-r1.dlt.trainlog.json").read_bytes() == (
        root / "head-r2.dlt.trainlog.json"
    ).read_bytes()

    evals = []
    for run in ("e1", "e2"):
        out = root / run
        assert dispatch(["eval", "--config", str(root / "config.json"), "--split", "test",
                         "--out", str(out)]) == EXIT_OK
        evals.append(out)
    for f in ("report.json", "report.csv", "detections.jsonl"):
        assert (evals[0] / f).read_bytes() == (evals[1] / f).read_bytes()
