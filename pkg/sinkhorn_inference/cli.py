#!/usr/bin/env python3
"""
Command-line entry point: python -m sinkhorn_inference <command> [flags].

Every flag defaults to None so that a value left off the command line
falls back to the --spec JSON file and then to ExperimentSpec defaults.
"""

import argparse
import logging
import sys

from .errors import SinkhornInferenceError
from .experiments import COMMANDS, ExperimentSpec, run


def _add_common(parser):
    parser.add_argument('--spec', help="JSON file with ExperimentSpec fields; flags win")
    parser.add_argument('--out', help="output directory (default: results)")
    parser.add_argument('--seed', type=int)
    parser.add_argument('--lambda', dest='lams', type=float, nargs='+', metavar='LAMBDA',
                        help="regularization values")
    parser.add_argument('--reps', '-M', dest='M', type=int, help="bootstrap / Monte-Carlo replicates")
    parser.add_argument('--level', type=float, help="test level (default: 0.05)")
    parser.add_argument('--workers', type=int, help="threads for bootstrap replicates")
    parser.add_argument('--max-iter', dest='max_iter', type=int)
    parser.add_argument('--tol', type=float)
    parser.add_argument('--kde-points', dest='kde_points', type=int)
    parser.add_argument('--verbose', '-v', action='store_true', help="debug logging")


def _add_synthetic(parser):
    parser.add_argument('--grid', type=int, help="side length p of the p x p grid")
    parser.add_argument('--n', type=int, nargs='+', help="sample sizes")
    parser.add_argument('--m', type=int, nargs='+', help="second sample sizes, one per --n")
    parser.add_argument('--gamma', type=float, help="m / (n + m); sets m when --m is absent")
    parser.add_argument('--theta', dest='thetas', type=float, nargs='+',
                        help="linear-trend slopes")


def _add_data(parser):
    parser.add_argument('--data', help="binned dataset JSON written by `ingest`")
    parser.add_argument('--groups', nargs='+')
    parser.add_argument('--reference-groups', dest='reference_groups', nargs='+')
    parser.add_argument('--reference', choices=['barycenter', 'uniform-support'])


def build_parser():
    parser = argparse.ArgumentParser(
        prog='sinkhorn_inference',
        description="Sinkhorn divergences: limit laws and bootstrap tests")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate-clt', help="empirical statistics vs limit laws")
    _add_common(p)
    _add_synthetic(p)
    p.add_argument('--mode', choices=['H0-one', 'H0-two', 'H1-one', 'H1-two'])

    for name, help_text in (('test-one', "one-sample bootstrap test"),
                            ('test-two', "two-sample bootstrap test")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        _add_synthetic(p)
        _add_data(p)
        if name == 'test-two':
            p.add_argument('--group-a', dest='group_a')
            p.add_argument('--group-b', dest='group_b')

    p = sub.add_parser('power', help="power against linear-trend alternatives")
    _add_common(p)
    _add_synthetic(p)
    p.add_argument('--repeats', '-R', dest='R', type=int, help="repeated tests per cell")

    p = sub.add_parser('month-table', help="reference tests and pairwise p-values on binned data")
    _add_common(p)
    _add_data(p)

    p = sub.add_parser('barycenter', help="Euclidean barycenter of binned groups")
    _add_common(p)
    _add_data(p)

    p = sub.add_parser('ingest', help="bin a point CSV into per-group measures")
    _add_common(p)
    p.add_argument('--input', help="CSV of point records")
    p.add_argument('--bbox', type=float, nargs=4, metavar=('XMIN', 'XMAX', 'YMIN', 'YMAX'))
    p.add_argument('--grid-rows', dest='grid_rows', type=int)
    p.add_argument('--grid-cols', dest='grid_cols', type=int)
    p.add_argument('--group-column', dest='group_column')
    p.add_argument('--x-column', dest='x_column')
    p.add_argument('--y-column', dest='y_column')
    p.add_argument('--by-month', dest='by_month', action='store_true', default=None)
    p.add_argument('--groups', nargs='+', help="groups that must be present")

    assert set(sub.choices) == set(COMMANDS)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s')

    overrides = {k: v for k, v in vars(args).items() if k not in ('command', 'spec', 'verbose')}
    try:
        spec = ExperimentSpec.resolve(args.command, args.spec, overrides)
        run(spec)
    except SinkhornInferenceError as e:
        print(f"\n✗ {e}")
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
