"""Standalone export command: ``gsc-export --spec spec.json``.

Exit codes: 0 success, 1 usage, 2 spec/data error, 3 unsupported model
structure (non-flat cut point or inexpressible head).
"""

from __future__ import annotations

import argparse
import json
import sys

from .export import ExportSpec, ShapeError, SpecError, UnsupportedHeadError, export


def cli(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gsc-export", description=__doc__)
    parser.add_argument("--spec", required=True, help="export spec JSON file")
    parser.add_argument("--out", help="override the spec's output_dir")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        spec = ExportSpec.from_json(args.spec)
        if args.out:
            import dataclasses
            spec = dataclasses.replace(spec, output_dir=args.out)
        print(export(spec))
        return 0
    except (ShapeError, UnsupportedHeadError) as exc:
        print(f"gsc-export: unsupported model structure: {exc}", file=sys.stderr)
        return 3
    except (SpecError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"gsc-export: spec error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(cli())
