#!/usr/bin/env python3
"""Cross-language matrix experiment: train one head per language on the
synthetic task, then evaluate every checkpoint on every other language.

Usage:
    python scripts/run_cross_language.py --out runs/cross --languages python,go,java
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

from duolens.corpus import write_jsonl
from duolens.synthetic import disjoint_corpus


def cli(*args: str) -> None:
    cmd = [sys.executable, "-m", "duolens.cli", *args]
    print("+", " ".join(str(a) for a in cmd[2:]))
    subprocess.run(cmd, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--languages", default="python,go,java")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--n-per-class", type=int, default=200)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    languages = args.languages.split(",")

    subprocess.run([sys.executable, str(Path(__file__).parent / "make_tiny_models.py"),
                    "--out", str(out), "--seed", str(args.seed)], check=True)

    checkpoints = out / "checkpoints"
    corpora = out / "corpora"
    checkpoints.mkdir(exist_ok=True)
    corpora.mkdir(exist_ok=True)

    for i, lang in enumerate(languages):
        # per-language corpora get different seeds so the checkpoints differ
        train = disjoint_corpus(args.n_per_class, seed=args.seed + i, id_prefix=f"{lang}-tr",
                                language=lang)
        dev = disjoint_corpus(args.n_per_class // 4, seed=args.seed + 100 + i,
                              id_prefix=f"{lang}-dv", language=lang)
        test = disjoint_corpus(args.n_per_class // 4, seed=args.seed + 200 + i,
                               id_prefix=f"{lang}-te", language=lang)
        write_jsonl(train, out / f"{lang}-train.jsonl")
        write_jsonl(dev, out / f"{lang}-dev.jsonl")
        write_jsonl(test, corpora / f"{lang}.jsonl")

        config = {
            "seed": args.seed + i,
            "encoder_a": {"bundle": "enc_a.dlt"},
            "encoder_b": {"bundle": "enc_b.dlt"},
            "data": {"train": f"{lang}-train.jsonl", "dev": f"{lang}-dev.jsonl"},
            "train": {"epochs": 10, "fusion_dim": 64},
        }
        cfg_path = out / f"{lang}.config.json"
        cfg_path.write_text(json.dumps(config, indent=2) + "\n")
        cli("train-head", "--config", str(cfg_path), "--out", str(checkpoints / f"{lang}.dlt"))

    cli("cross-eval", "--config", str(out / "config.json"),
        "--checkpoints", str(checkpoints), "--corpora", str(corpora),
        "--out", str(out / "matrix"))
    print("\n" + (out / "matrix" / "cross_language.csv").read_text())


if __name__ == "__main__":
    main()
