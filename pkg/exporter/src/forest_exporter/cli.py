"""CLI: forest-export export --in model --format {sklearn|xgboost|lightgbm}
--out model.json. Prints the export record as JSON on success."""

from __future__ import annotations

import argparse
import sys

from .errors import ExportError
from .export import FORMATS, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forest-export")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="convert a trained model to interchange JSON")
    p.add_argument("--in", dest="source", required=True,
                   help="model file: sklearn pickle, xgboost .json, or lightgbm dump/text")
    p.add_argument("--format", required=True, choices=FORMATS)
    p.add_argument("--out", required=True, help="interchange JSON output path")
    p.add_argument("--no-verify", action="store_true",
                   help="skip the source-library agreement check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=1000,
                   help="random samples for the agreement check")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        record = export(args.source, args.format, args.out,
                        verify=not args.no_verify, seed=args.seed,
                        n_samples=args.samples)
    except ExportError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(record.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
