"""Command-line entry point exposing the full workflow.

Subcommands: build-dataset, train-head, probe, calibrate, detect, eval,
cross-eval, perturb, bench. Exit codes: 0 success, 1 usage error, 2
data/validation error, 3 internal error.

Primary outputs are byte-deterministic for fixed inputs and seed; anything
timestamped goes to a separate .log file next to the outputs. Every run that
writes files also writes the fully-resolved configuration alongside them.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
import traceback
from dataclasses import dataclass
from pathlib import Path

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from .bundle import BundleError, TensorBundle, load_bundle, save_bundle
from .corpus import CorpusError, Sample, ingest, perturb_rename, perturb_reformat, write_jsonl
from .encoder import EncoderError, EncoderModel
from .fusion import (
    TrainConfig,
    TrainingError,
    head_from_bundle,
    head_to_bundle,
    linear_probe_fit,
    train_head,
)
from .metrics import MetricsError, accuracy_report, bench, cross_language_matrix
from .pipeline import (
    Calibration,
    Detector,
    InternalError,
    PipelineError,
    detect_batch,
    fit_temperature,
    nll,
    raw_logit,
)
from .tensor import ShapeError
from .tokenizers import TokenRangeError, Vocab, VocabError, load_vocab

_DATA_ERRORS = (
    BundleError,
    CorpusError,
    EncoderError,
    MetricsError,
    PipelineError,
    ShapeError,
    TokenRangeError,
    TrainingError,
    VocabError,
    FileNotFoundError,
    json.JSONDecodeError,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract wants 1.
    def error(self, message):
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "seed", "threads", "window", "stride", "aggregation", "threshold",
    "encoder_a", "encoder_b", "head", "data", "train",
}
_ENC_KEYS = {"bundle", "vocab", "vocab_kind", "merges", "lowercase"}
_DATA_KEYS = {"train", "dev", "test"}
_TRAIN_KEYS = {"lr", "epochs", "batch", "optimizer", "momentum", "patience", "fusion_dim"}


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise CorpusError(f"unknown config keys in {where}: {sorted(unknown)}")


@dataclass
class EncoderEntry:
    bundle: Path
    vocab: Path | None = None
    vocab_kind: str | None = None
    merges: Path | None = None
    lowercase: bool = False


@dataclass
class RunConfig:
    path: Path
    seed: int = 42
    threads: int | None = None
    window: int = 512
    stride: int = 448
    aggregation: str = "mean"
    threshold: float = 0.5
    encoder_a: EncoderEntry | None = None
    encoder_b: EncoderEntry | None = None
    head: Path | None = None
    data: dict[str, Path] = dataclasses.field(default_factory=dict)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        obj = json.loads(path.read_text(encoding="utf-8"))
        _reject_unknown(obj, _TOP_KEYS, str(path))
        base = path.parent

        def entry(key: str) -> EncoderEntry | None:
            sub = obj.get(key)
            if sub is None:
                return None
            _reject_unknown(sub, _ENC_KEYS, f"{path}:{key}")
            return EncoderEntry(
                bundle=base / sub["bundle"],
                vocab=base / sub["vocab"] if sub.get("vocab") else None,
                vocab_kind=sub.get("vocab_kind"),
                merges=base / sub["merges"] if sub.get("merges") else None,
                lowercase=bool(sub.get("lowercase", False)),
            )

        data_obj = obj.get("data", {})
        _reject_unknown(data_obj, _DATA_KEYS, f"{path}:data")
        train_obj = obj.get("train", {})
        _reject_unknown(train_obj, _TRAIN_KEYS, f"{path}:train")
        tc = TrainConfig(seed=int(obj.get("seed", 42)), **train_obj)
        return cls(
            path=path,
            seed=int(obj.get("seed", 42)),
            threads=obj.get("threads"),
            window=int(obj.get("window", 512)),
            stride=int(obj.get("stride", 448)),
            aggregation=obj.get("aggregation", "mean"),
            threshold=float(obj.get("threshold", 0.5)),
            encoder_a=entry("encoder_a"),
            encoder_b=entry("encoder_b"),
            head=base / obj["head"] if obj.get("head") else None,
            data={k: base / v for k, v in data_obj.items()},
            train=tc,
        )

    def resolved(self) -> dict:
        def enc(e: EncoderEntry | None):
            if e is None:
                return None
            return {
                "bundle": str(e.bundle),
                "vocab": str(e.vocab) if e.vocab else None,
                "vocab_kind": e.vocab_kind,
                "merges": str(e.merges) if e.merges else None,
                "lowercase": e.lowercase,
            }

        return {
            "seed": self.seed,
            "threads": self.threads,
            "window": self.window,
            "stride": self.stride,
            "aggregation": self.aggregation,
            "threshold": self.threshold,
            "encoder_a": enc(self.encoder_a),
            "encoder_b": enc(self.encoder_b),
            "head": str(self.head) if self.head else None,
            "data": {k: str(v) for k, v in sorted(self.data.items())},
            "train": dataclasses.asdict(self.train),
        }


def _load_encoder(entry: EncoderEntry) -> tuple[EncoderModel, Vocab]:
    bundle = load_bundle(entry.bundle)
    model = EncoderModel.from_bundle(bundle)
    base = entry.bundle.parent
    kind = entry.vocab_kind or bundle.metadata.get("tokenizer_kind")
    vocab_path = entry.vocab or (
        base / bundle.metadata["tokenizer_vocab"] if "tokenizer_vocab" in bundle.metadata else None
    )
    merges_path = entry.merges or (
        base / bundle.metadata["tokenizer_merges"] if "tokenizer_merges" in bundle.metadata else None
    )
    lowercase = entry.lowercase or bundle.metadata.get("tokenizer_lowercase") == "true"
    if kind is None or vocab_path is None:
        raise BundleError(
            f"no tokenizer configured for encoder bundle {entry.bundle} "
            "(set vocab/vocab_kind in the config or bundle metadata)"
        )
    return model, load_vocab(kind, vocab_path, merges_path, lowercase=lowercase)


def _load_detector(cfg: RunConfig) -> Detector:
    if cfg.encoder_a is None or cfg.encoder_b is None or cfg.head is None:
        raise CorpusError("config must set encoder_a, encoder_b, and head")
    enc_a, vocab_a = _load_encoder(cfg.encoder_a)
    enc_b, vocab_b = _load_encoder(cfg.encoder_b)
    head_bundle = load_bundle(cfg.head)
    head = head_from_bundle(head_bundle)
    t = float(head_bundle.metadata.get("temperature", "1.0"))
    return Detector(
        enc_a=enc_a,
        vocab_a=vocab_a,
        enc_b=enc_b,
        vocab_b=vocab_b,
        head=head,
        calibration=Calibration(t),
        window=cfg.window,
        stride=cfg.stride,
        aggregation=cfg.aggregation,
        threshold=cfg.threshold,
    )


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("DUOLENS_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_resolved(target: Path, command: str, cfg: RunConfig | None, extra: dict) -> None:
    payload = {"command": command, "args": extra}
    if cfg is not None:
        payload["config"] = cfg.resolved()
    target.write_text(_json_dumps(payload), encoding="utf-8")


class _Log:
    """Timestamped run log, kept out of the primary outputs."""

    def __init__(self, path: Path) -> None:
        self.path = path
        self.lines: list[str] = []

    def add(self, msg: str) -> None:
        self.lines.append(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {msg}")

    def flush(self) -> None:
        self.path.write_text("\n".join(self.lines) + "\n", encoding="utf-8")


def _read_docs(stream) -> list[tuple[str, str]]:
    docs = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if "id" not in obj or "text" not in obj:
            raise CorpusError(f"input line {lineno} needs at least 'id' and 'text'")
        docs.append((str(obj["id"]), obj["text"]))
    return docs


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_build_dataset(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = _Log(out_dir / "run.log")
    log.add(f"build-dataset pools={args.pools} seed={args.seed}")
    pool_files = sorted(Path(args.pools).glob("*.jsonl"))
    if not pool_files:
        raise CorpusError(f"no .jsonl pool files in {args.pools}")
    pool = ingest(pool_files)
    log.add(f"ingested {len(pool)} samples from {len(pool_files)} files")
    balanced, census = corpus_mod.balance(pool, args.seed)
    train, dev, test = corpus_mod.split(balanced, seed=args.seed)
    write_jsonl(train, out_dir / "train.jsonl")
    write_jsonl(dev, out_dir / "dev.jsonl")
    write_jsonl(test, out_dir / "test.jsonl")
    report = {
        "census": census.to_dict(),
        "balanced_total": len(balanced),
        "splits": {"train": len(train), "dev": len(dev), "test": len(test)},
        "seed": args.seed,
    }
    (out_dir / "census.json").write_text(_json_dumps(report), encoding="utf-8")
    _write_resolved(out_dir / "resolved.json", "build-dataset",
                    None, {"pools": str(args.pools), "out": str(out_dir), "seed": args.seed})
    log.add(f"wrote splits {len(train)}/{len(dev)}/{len(test)} to {out_dir}")
    log.flush()
    return EXIT_OK


def _cmd_train_head(args) -> int:
    cfg = RunConfig.load(args.config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log = _Log(out.with_suffix(out.suffix + ".log"))
    log.add(f"train-head config={cfg.path}")
    if cfg.encoder_a is None or cfg.encoder_b is None:
        raise CorpusError("config must set encoder_a and encoder_b")
    enc_a, vocab_a = _load_encoder(cfg.encoder_a)
    enc_b, vocab_b = _load_encoder(cfg.encoder_b)
    train_samples = ingest([cfg.data["train"]])
    dev_samples = ingest([cfg.data["dev"]])
    log.add(f"train={len(train_samples)} dev={len(dev_samples)}")
    t0 = time.monotonic()
    head, train_log = train_head(enc_a, vocab_a, enc_b, vocab_b, train_samples, dev_samples, cfg.train)
    log.add(f"trained in {time.monotonic() - t0:.2f}s; best epoch {train_log.best_epoch}")
    bundle = head_to_bundle(head, {
        "pooling_a": enc_a.config.pooling,
        "pooling_b": enc_b.config.pooling,
        "seed": str(cfg.train.seed),
    })
    save_bundle(bundle, out)
    out.with_suffix(out.suffix + ".trainlog.json").write_text(
        _json_dumps(train_log.as_dict()), encoding="utf-8"
    )
    _write_resolved(out.with_suffix(out.suffix + ".resolved.json"), "train-head",
                    cfg, {"out": str(out)})
    log.flush()
    return EXIT_OK


def _cmd_probe(args) -> int:
    cfg = RunConfig.load(args.config)
    bundle_path = Path(args.encoder)
    entry = None
    for candidate in (cfg.encoder_a, cfg.encoder_b):
        if candidate and candidate.bundle.resolve() == bundle_path.resolve():
            entry = candidate
    if entry is None:
        entry = EncoderEntry(bundle=bundle_path)
    enc, vocab = _load_encoder(entry)
    train_samples = ingest([cfg.data["train"]])
    dev_samples = ingest([cfg.data["dev"]])
    probe, train_log = linear_probe_fit(enc, vocab, train_samples, dev_samples, cfg.train)
    report = {
        "encoder": str(bundle_path),
        "train_log": train_log.as_dict(),
        "probe": {"w": probe.w.tolist(), "b": float(probe.b[0])},
    }
    payload = _json_dumps(report)
    if args.out == "-":
        sys.stdout.write(payload)
    else:
        Path(args.out).write_text(payload, encoding="utf-8")
        _write_resolved(Path(args.out + ".resolved.json"), "probe", cfg,
                        {"encoder": str(bundle_path), "out": args.out})
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = RunConfig.load(args.config)
    cfg.head = Path(args.head)
    det = _load_detector(cfg)
    det.calibration = Calibration(1.0)
    dev_samples = ingest([args.dev])
    logits = [raw_logit(det, s.text)[0] for s in dev_samples]
    labels = [s.label for s in dev_samples]
    cal = fit_temperature(logits, labels)
    scores = [Calibration(cal.t).probability(z) for z in logits]
    youden = metrics_mod.youden_j_threshold(scores, labels)
    head_bundle = load_bundle(args.head)
    head_bundle.metadata["temperature"] = repr(cal.t)
    # reported for reference only; detection keeps the 0.5 default unless
    # the run config sets `threshold` explicitly
    head_bundle.metadata["youden_threshold"] = repr(youden)
    save_bundle(head_bundle, args.head)
    sys.stdout.write(_json_dumps({
        "temperature": cal.t,
        "dev_nll_at_t1": nll(logits, labels, 1.0),
        "dev_nll_fitted": nll(logits, labels, cal.t),
        "youden_threshold": youden,
    }))
    return EXIT_OK


def _cmd_detect(args) -> int:
    cfg = RunConfig.load(args.config)
    det = _load_detector(cfg)
    if args.infile == "-":
        docs = _read_docs(sys.stdin)
    else:
        with open(args.infile, encoding="utf-8") as fh:
            docs = _read_docs(fh)
    detections = detect_batch(det, docs, threads=_threads(args))
    lines = "".join(d.to_json() + "\n" for d in detections)
    if args.out == "-":
        sys.stdout.write(lines)
    else:
        Path(args.out).write_text(lines, encoding="utf-8")
        _write_resolved(Path(args.out + ".resolved.json"), "detect", cfg,
                        {"in": args.infile, "out": args.out})
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = RunConfig.load(args.config)
    det = _load_detector(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = _Log(out_dir / "run.log")
    if args.split not in cfg.data:
        raise CorpusError(f"config has no data path for split {args.split!r}")
    samples = ingest([cfg.data[args.split]])
    log.add(f"eval split={args.split} n={len(samples)}")
    t0 = time.monotonic()
    detections = detect_batch(det, [(s.id, s.text) for s in samples], threads=_threads(args))
    wall = time.monotonic() - t0
    report = accuracy_report(detections, samples)
    # Timing goes to the log only, keeping the primary outputs deterministic.
    log.add(f"scored {len(samples)} samples in {wall:.3f}s "
            f"({len(samples) / wall:.2f} samples/sec)")
    (out_dir / "report.json").write_text(
        _json_dumps(report.to_dict(include_timing=False)), encoding="utf-8"
    )
    (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    if args.by_language:
        rows = ["language,accuracy"] + [
            f"{lang},{acc:.3f}" for lang, acc in sorted(report.per_language.items())
        ]
        (out_dir / "report_by_language.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    detections_path = out_dir / "detections.jsonl"
    detections_path.write_text("".join(d.to_json() + "\n" for d in detections), encoding="utf-8")
    _write_resolved(out_dir / "resolved.json", "eval", cfg,
                    {"split": args.split, "out": str(out_dir), "by_language": args.by_language})
    log.flush()
    return EXIT_OK


def _cmd_cross_eval(args) -> int:
    cfg = RunConfig.load(args.config)
    checkpoints_dir = Path(args.checkpoints)
    corpora_dir = Path(args.corpora)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    detectors = {}
    for head_path in sorted(checkpoints_dir.glob("*.dlt")):
        lang_cfg = dataclasses.replace(cfg, head=head_path)
        detectors[head_path.stem] = _load_detector(lang_cfg)
    corpora = {
        p.stem: ingest([p]) for p in sorted(corpora_dir.glob("*.jsonl"))
    }
    matrix = cross_language_matrix(detectors, corpora)
    (out_dir / "cross_language.csv").write_text(matrix.to_csv(), encoding="utf-8")
    (out_dir / "cross_language.json").write_text(_json_dumps(matrix.to_dict()), encoding="utf-8")
    _write_resolved(out_dir / "resolved.json", "cross-eval", cfg,
                    {"checkpoints": str(checkpoints_dir), "corpora": str(corpora_dir)})
    return EXIT_OK


def _cmd_perturb(args) -> int:
    samples = ingest([args.infile])
    perturbed = []
    records = []
    for s in samples:
        if args.transform == "rename":
            new_text, record = perturb_rename(s.text, s.language, args.seed)
            record.original_id = s.id
            records.append(record)
        else:
            new_text = perturb_reformat(s.text, args.seed)
            records.append(corpus_mod.PerturbRecord(s.id, "reformat"))
        perturbed.append(dataclasses.replace(s, text=new_text))
    out_lines = "".join(json.dumps(s.to_dict(), ensure_ascii=False) + "\n" for s in perturbed)
    if args.out == "-":
        sys.stdout.write(out_lines)
    else:
        Path(args.out).write_text(out_lines, encoding="utf-8")
        sidecar = Path(args.out + ".mappings.jsonl")
        sidecar.write_text(
            "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records),
            encoding="utf-8",
        )
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = RunConfig.load(args.config)
    det = _load_detector(cfg)
    split_path = cfg.data.get(args.split)
    if split_path is None:
        raise CorpusError(f"config has no data path for split {args.split!r}")
    samples = ingest([split_path])
    if args.limit:
        samples = samples[: args.limit]
    batch_sizes = [int(b) for b in args.batch.split(",")]
    rows = bench(det, samples, batch_sizes, threads=_threads(args))
    payload = _json_dumps([r.to_dict() for r in rows])
    if args.out == "-":
        sys.stdout.write(payload)
    else:
        Path(args.out).write_text(payload, encoding="utf-8")
        _write_resolved(Path(args.out + ".resolved.json"), "bench", cfg,
                        {"batch": args.batch, "split": args.split})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="duolens", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="ingest pools, balance labels, write splits")
    p.add_argument("--pools", required=True, help="directory of .jsonl pool files")
    p.add_argument("--out", required=True, help="output directory for splits and census")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(fn=_cmd_build_dataset)

    p = sub.add_parser("train-head", help="train the fusion head on frozen encoders")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output head bundle path")
    p.set_defaults(fn=_cmd_train_head)

    p = sub.add_parser("probe", help="linear probe on one frozen encoder")
    p.add_argument("--config", required=True)
    p.add_argument("--encoder", required=True, help="encoder bundle path")
    p.add_argument("--out", default="-", help="report JSON path or - for stdout")
    p.set_defaults(fn=_cmd_probe)

    p = sub.add_parser("calibrate", help="fit temperature on dev logits, store in head bundle")
    p.add_argument("--config", required=True)
    p.add_argument("--head", required=True, help="head bundle (updated in place)")
    p.add_argument("--dev", required=True, help="labeled dev JSONL")
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("detect", help="score documents (JSONL in, JSONL out)")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="infile", required=True, help="input JSONL or -")
    p.add_argument("--out", default="-", help="output JSONL or -")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(fn=_cmd_detect)

    p = sub.add_parser("eval", help="score a labeled split and write an EvalReport")
    p.add_argument("--config", required=True)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--by-language", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("cross-eval", help="cross-language accuracy matrix")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoints", required=True, help="directory of <language>.dlt head bundles")
    p.add_argument("--corpora", required=True, help="directory of <language>.jsonl eval splits")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_cross_eval)

    p = sub.add_parser("perturb", help="apply a code perturbation to a JSONL corpus")
    p.add_argument("--transform", required=True, choices=["rename", "reformat"])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=_cmd_perturb)

    p = sub.add_parser("bench", help="throughput/latency/peak-memory benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--batch", default="1", help="comma-separated batch sizes")
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--limit", type=int, default=0, help="cap the bench corpus size")
    p.add_argument("--out", default="-")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(fn=_cmd_bench)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except _DATA_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except InternalError as exc:
        sys.stderr.write(f"internal error: {exc}\n")
        return EXIT_INTERNAL
    except Exception:
        sys.stderr.write("internal error:\n")
        traceback.print_exc(file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
