"""dlt-convert: export pretrained encoder checkpoints for the engine.

Usage:
    dlt-convert export --source <checkpoint-dir> --out <dir> [--family auto]
                       [--pooling cls|mean]
"""

from __future__ import annotations

import argparse
import json
import sys

from .exporter import export_checkpoint
from .families import ExportError


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="dlt-convert", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="convert a checkpoint directory to a DLT bundle")
    p.add_argument("--source", required=True, help="upstream checkpoint directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--family", default="auto", choices=["auto", "bert", "roberta", "xlm-roberta"])
    p.add_argument("--pooling", default=None, choices=[None, "cls", "mean"])
    args = parser.parse_args(argv)

    try:
        manifest = export_checkpoint(args.source, args.out, args.family, args.pooling)
    except (ExportError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        sys.exit(2)
    print(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
