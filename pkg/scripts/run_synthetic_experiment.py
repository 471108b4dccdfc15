#!/usr/bin/env python3
"""End-to-end desk-scale experiment on the disjoint-vocabulary task.

Generates pools, then drives the CLI through the full workflow:
build-dataset -> train-head -> calibrate -> eval -> perturbation retention
-> bench. Everything is seeded; rerunning reproduces the primary outputs
byte for byte.

Usage:
    python scripts/run_synthetic_experiment.py --out runs/synthetic
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

from duolens.corpus import write_jsonl
from duolens.synthetic import code_like_corpus, disjoint_corpus


def cli(*args: str) -> None:
    cmd = [sys.executable, "-m", "duolens.cli", *args]
    print("+", " ".join(str(a) for a in cmd[2:]))
    subprocess.run(cmd, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--n-per-class", type=int, default=1250)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cli_path = Path(__file__).parent / "make_tiny_models.py"
    subprocess.run([sys.executable, str(cli_path), "--out", str(out), "--seed", str(args.seed)],
                   check=True)

    pools = out / "pools"
    pools.mkdir(exist_ok=True)
    write_jsonl(disjoint_corpus(args.n_per_class, seed=args.seed, id_prefix="syn"),
                pools / "synthetic.jsonl")
    write_jsonl(code_like_corpus(100, seed=args.seed + 1), pools / "code.jsonl")

    cli("build-dataset", "--pools", str(pools), "--out", str(out / "data"),
        "--seed", str(args.seed))
    config = str(out / "config.json")
    cli("train-head", "--config", config, "--out", str(out / "head.dlt"))
    cli("calibrate", "--config", config, "--head", str(out / "head.dlt"),
        "--dev", str(out / "data" / "dev.jsonl"))
    cli("eval", "--config", config, "--split", "test", "--out", str(out / "eval"),
        "--by-language")

    # perturbation retention on the code-like slice of the test split
    test_path = out / "data" / "test.jsonl"
    code_rows = [json.loads(l) for l in test_path.read_text().splitlines()
                 if json.loads(l)["language"] == "c"]
    if code_rows:
        code_test = out / "code_test.jsonl"
        code_test.write_text("".join(json.dumps(r) + "\n" for r in code_rows))
        for transform in ("rename", "reformat"):
            cli("perturb", "--transform", transform, "--in", str(code_test),
                "--seed", str(args.seed), "--out", str(out / f"code_{transform}.jsonl"))

    cli("bench", "--config", config, "--batch", "1,4", "--split", "test",
        "--limit", "8", "--out", str(out / "bench.json"))

    report = json.loads((out / "eval" / "report.json").read_text())
    print("\n=== synthetic task report ===")
    print(f"AUROC      {report['auroc']:.4f}")
    print(f"macro-F1   {report['f1_macro']:.4f}")
    print(f"accuracy   {report['accuracy']:.4f}")
    bench_rows = json.loads((out / "bench.json").read_text())
    for row in bench_rows:
        print(f"batch {row['batch']}: {row['samples_per_sec']:.2f} samples/sec, "
              f"peak {row['peak_bytes'] / 1e6:.1f} MB")


if __name__ == "__main__":
    main()
