"""CLI: `figures --spec <path>` renders every declared figure to PNG + SVG."""

from __future__ import annotations

import argparse
import sys

from .render import load_spec_file, render_figures
from .schema import SchemaError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render figures from sausagelab result CSVs")
    parser.add_argument("--spec", required=True,
                        help="JSON file declaring the figures to render")
    args = parser.parse_args(argv)
    try:
        specs = load_spec_file(args.spec)
        written = render_figures(specs)
    except (SchemaError, ValueError, OSError) as err:
        print(f"figures: {err}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
