#!/usr/bin/env python3
"""Emit the desk-scale model assets: two frozen random tiny encoders, the
synthetic WordPiece vocabulary, and a run config wired to them.

Usage:
    python scripts/make_tiny_models.py --out runs/tiny [--seed-a 101 --seed-b 202]
"""

import argparse
import json
from pathlib import Path

from duolens.bundle import save_bundle
from duolens.encoder import random_encoder_bundle, tiny_config
from duolens.synthetic import save_synthetic_vocab


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed-a", type=int, default=101)
    parser.add_argument("--seed-b", type=int, default=202)
    parser.add_argument("--seed", type=int, default=42, help="seed written into the config")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_synthetic_vocab(out / "vocab.txt")
    for name, seed in (("enc_a", args.seed_a), ("enc_b", args.seed_b)):
        bundle = random_encoder_bundle(tiny_config("mean"), seed)
        bundle.metadata["tokenizer_kind"] = "wordpiece"
        bundle.metadata["tokenizer_vocab"] = "vocab.txt"
        save_bundle(bundle, out / f"{name}.dlt")
        print(f"wrote {out / f'{name}.dlt'} ({len(bundle.entries)} tensors)")

    config = {
        "seed": args.seed,
        "encoder_a": {"bundle": "enc_a.dlt"},
        "encoder_b": {"bundle": "enc_b.dlt"},
        "head": "head.dlt",
        "data": {
            "train": "data/train.jsonl",
            "dev": "data/dev.jsonl",
            "test": "data/test.jsonl",
        },
        "train": {"lr": 1e-3, "epochs": 20, "batch": 32, "optimizer": "adam",
                  "patience": 5, "fusion_dim": 256},
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {out / 'config.json'}")


if __name__ == "__main__":
    main()
