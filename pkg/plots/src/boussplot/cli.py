"""Command line: ``boussplot render <bundle-dir> [-o outdir]``.

Exit codes: 0 success, 2 missing or ill-formed input (the message names the
offending path).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bundle import BundleError, load_bundle
from .render import render_report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="boussplot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    rp = sub.add_parser("render", help="render the report figures for a bundle directory")
    rp.add_argument("bundle", help="directory holding frames.csv, summary.json, probes.csv, ...")
    rp.add_argument("-o", "--outdir", default=None, help="output directory (default: the bundle)")
    args = parser.parse_args(argv)

    try:
        bundle = load_bundle(args.bundle)
        outdir = Path(args.outdir) if args.outdir else bundle.root
        paths = render_report(bundle, outdir)
    except BundleError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
