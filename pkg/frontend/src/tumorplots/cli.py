"""Command line entry: ``render --spec <file>``.

Exit codes: 0 success, 2 malformed spec, 4 missing or malformed input
files.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .csvio import SchemaError
from .figspec import SpecError
from .render import render


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render a figure from simulation output CSVs.")
    parser.add_argument("--spec", required=True,
                        help="path to a JSON figure spec")
    args = parser.parse_args(argv)

    try:
        report = render(args.spec)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, SchemaError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 4
    print(f"wrote {report.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
