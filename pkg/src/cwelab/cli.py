"""Command-line entry point: ``cwelab <verb> --config FILE --out DIR --seed N``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import harness
from .config import default_spec, parse_config
from .errors import CwelabError

log = logging.getLogger("cwelab")


def _fig1(spec, args):
    rows = harness.run_fig1(spec, args.seed)
    path = args.out / "fig1_throughput.csv"
    harness.write_fig1_csv(rows, path)
    return [path]


def _cit(spec, args):
    report = harness.run_cit_accuracy(spec, args.seed, args.jobs)
    return harness.write_cit_csvs(report, args.out)


def _cwe(spec, args):
    report = harness.run_cwe_accuracy(spec, args.seed, args.jobs)
    return harness.write_cwe_csvs(report, args.out)


def _nominal(spec, args):
    return harness.write_nominal_csvs(spec, args.out)


VERBS = {
    "fig1": (_fig1, "fig1_throughput", "per-station throughput while sweeping S3's CWmin"),
    "cit-sweep": (_cit, "cit_accuracy_sweep", "collision identification accuracy over th_c, delta and N"),
    "cwe-accuracy": (_cwe, "cwe_accuracy_vs_T", "CWmin estimation accuracy against monitoring time"),
    "nominal-dump": (_nominal, "nominal_dump", "nominal backoff PMFs for each N"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="cwelab", description="Aggressive-CWmin detection experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for name, (_, _, help_text) in VERBS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="experiment config file (defaults apply if omitted)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="base seed (u64)")
        p.add_argument("--paper-scale", action="store_true", help="use the full trial and setup counts")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if not 0 <= args.seed < 2**64:
        print("cwelab: --seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        spec = parse_config(args.config) if args.config else default_spec()
        fn, kind, _ = VERBS[args.verb]
        spec = dataclasses.replace(spec, kind=kind)
        if args.paper_scale:
            spec = spec.paper_scale()
        args.out.mkdir(parents=True, exist_ok=True)
        log.info("running %s into %s", args.verb, args.out)
        outputs = fn(spec, args)
        harness.write_run_meta(args.out, args.verb, spec, args.seed, args.paper_scale, outputs)
    except CwelabError as exc:
        print(f"cwelab: {exc}", file=sys.stderr)
        return 1
    for p in outputs:
        log.info("wrote %s", p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
