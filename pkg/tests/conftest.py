import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from duolens.encoder import EncoderModel, random_encoder_bundle, tiny_config
from duolens.fusion import TrainConfig, train_head
from duolens.synthetic import disjoint_corpus, synthetic_vocab

# Seeds for the frozen random tiny encoders used throughout the suite.
ENC_A_SEED = 101
ENC_B_SEED = 202


@pytest.fixture(scope="session")
def vocab():
    return synthetic_vocab()


@pytest.fixture(scope="session")
def tiny_encoders():
    cfg_a = tiny_config("mean")
    cfg_b = tiny_config("mean")
    enc_a = EncoderModel(cfg_a, random_encoder_bundle(cfg_a, ENC_A_SEED))
    enc_b = EncoderModel(cfg_b, random_encoder_bundle(cfg_b, ENC_B_SEED))
    return enc_a, enc_b


@pytest.fixture(scope="session")
def synthetic_splits():
    """The acceptance protocol corpus: 2000 train / 500 dev / 500 test."""
    train = disjoint_corpus(1000, seed=42, id_prefix="train")
    dev = disjoint_corpus(250, seed=43, id_prefix="dev")
    test = disjoint_corpus(250, seed=44, id_prefix="test")
    return train, dev, test


@pytest.fixture(scope="session")
def trained_head(tiny_encoders, vocab, synthetic_splits):
    """Fusion head trained once on the synthetic task (reused by pipeline,
    calibration, and acceptance tests). Returns (head, log, wall seconds)."""
    import time

    enc_a, enc_b = tiny_encoders
    train, dev, _ = synthetic_splits
    t0 = time.monotonic()
    head, log = train_head(enc_a, vocab, enc_b, vocab, train, dev, TrainConfig(epochs=20, seed=42))
    return head, log, time.monotonic() - t0


_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    # One pass/fail line per acceptance criterion in the terminal summary.
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and (report.failed or report.skipped):
        _ACCEPTANCE_RESULTS[name] = "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, verdict in _ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"[{verdict}] {name}")
