"""Command-line entry point ``ibf-bench``."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import STAGE_NAMES, TRANSFORMS, BenchConfig, run_benchmark, write_csv
from .errors import AccuracyError, FormatError, ParameterError

EXIT_OK, EXIT_CONFIG, EXIT_ACCURACY = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ibf-bench",
                description="Build, compress and apply butterfly factorizations of oscillatory kernels.")
    p.add_argument("--transform", required=True, choices=sorted(TRANSFORMS))
    p.add_argument("--n", dest="sizes", type=int, nargs="+", required=True, metavar="N",
                   help="problem size(s); for fio2d the total count n*n")
    p.add_argument("--cheb", dest="orders", type=int, nargs="+", default=[6], metavar="Q",
                   help="Chebyshev order(s) per dimension (default 6)")
    p.add_argument("--tol", type=float, default=None,
                   help="compression tolerance (default 3e-4 for q <= 7, 1e-8 otherwise)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stage", choices=sorted(STAGE_NAMES), default="optimal")
    p.add_argument("--sample", type=int, default=256, help="rows sampled for the error (default 256)")
    p.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    p.add_argument("--save", default=None, metavar="PATH", help="write the factorization (1-d only)")
    p.add_argument("--load", default=None, metavar="PATH", help="read a saved factorization (1-d only)")
    p.add_argument("--depth", type=int, default=None, help="tree depth override")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    cfg = BenchConfig(args.transform, args.sizes, args.orders, args.tol, args.seed, args.stage,
                      args.sample, args.depth, args.out, args.save, args.load)
    try:
        records = run_benchmark(cfg)
    except (ParameterError, FormatError, OSError) as exc:
        print(f"ibf-bench: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AccuracyError as exc:
        print(f"ibf-bench: accuracy error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    if args.out is None:
        sys.stdout.write(write_csv(records, None))
    else:
        for r in records:
            print(f"{r.transform} N={r.N} q={r.q} {r.stage}: eps={r.eps:.3e} r_comp={r.r_comp:.3f} "
                  f"t_factor={r.t_factor_s:.2f}s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
