"""Command-line front end.

    dcpoly approx      --problem ex5 --eps 0.1 [--alg alg2] [--out poly.json]
    dcpoly solve       --problem ex4 --eps 0.01 [--alg alg3] [--out report.json]
    dcpoly bench       --problem ex4 --problem ex8:n=2 --eps 1 0.1 --alg alg1 alg3
    dcpoly convergence --problem ex5 --alg alg1 --max-iter 300 [--out gaps.csv]

Exit status: 0 certified, 2 stopped by an iteration or time cap, 1 usage
or domain error.  Set DCPOLY_LOG=INFO (or DEBUG) for progress logging.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

from .bench import DEFAULT_TIME_LIMIT, convergence_study, emit_table, run_suite
from .oracles import VALID_COMBINATIONS, DomainError, parse_problem_spec
from .solver import ALGORITHMS, solve
from .underestimator import ApproxConfig, approximate_multi_cut, approximate_single_cut

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNCERTIFIED = 2

DEFAULT_ALG = {"approx": "alg2", "solve": "alg3", "convergence": "alg1"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad input; 2 is reserved for uncertified runs
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0 or math.isinf(v):
        raise argparse.ArgumentTypeError(f"expected a finite number >= 0, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dcpoly", description="Global DC minimization over boxes with polyhedral underestimators.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, multi=False):
        if multi:
            sp.add_argument("--problem", action="append", required=True,
                            help="problem identifier, e.g. ex4 or ex6:n=3,m=2 (repeatable)")
            sp.add_argument("--eps", type=_nonneg_float, nargs="+", default=[1.0, 0.1, 0.01])
            sp.add_argument("--alg", choices=ALGORITHMS, nargs="+", default=list(ALGORITHMS))
        else:
            sp.add_argument("--problem", required=True, help=f"one of: {VALID_COMBINATIONS}")
        sp.add_argument("--time-limit", type=_positive_float, default=None, metavar="SECONDS")
        sp.add_argument("--max-iter", type=_positive_int, default=100_000, metavar="N")
        sp.add_argument("--out", type=Path, default=None, metavar="PATH")
        sp.add_argument("--workers", type=_positive_int, default=1, metavar="N")
        sp.add_argument("--seed", type=int, default=0, metavar="N")

    a = sub.add_parser("approx", help="build an epsilon-underestimator of g")
    common(a)
    a.add_argument("--eps", type=_nonneg_float, required=True)
    a.add_argument("--alg", choices=("alg1", "alg2"), default=DEFAULT_ALG["approx"])
    a.add_argument("--max-cuts-per-iter", type=_positive_int, default=None, metavar="N")

    s = sub.add_parser("solve", help="find a certified epsilon-solution")
    common(s)
    s.add_argument("--eps", type=_nonneg_float, required=True)
    s.add_argument("--alg", choices=ALGORITHMS, default=DEFAULT_ALG["solve"])
    s.add_argument("--max-cuts-per-iter", type=_positive_int, default=None, metavar="N")
    s.add_argument("--format", choices=("json", "csv"), default="json",
                   help="artifact format: full report (json) or a_k/b_k history (csv)")

    b = sub.add_parser("bench", help="run a grid of solves and tabulate")
    common(b, multi=True)
    b.add_argument("--format", choices=("csv", "json", "markdown"), default="csv")

    c = sub.add_parser("convergence", help="gap decay of alg1/alg2 with epsilon = 0")
    common(c)
    c.add_argument("--alg", choices=("alg1", "alg2"), default=DEFAULT_ALG["convergence"])
    return p


def _configure_logging():
    level = os.environ.get("DCPOLY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _problem(spec: str):
    try:
        return parse_problem_spec(spec)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _write(path: Path | None, text: str):
    if path is not None:
        path.write_text(text)
        print(f"wrote {path}")


def _cmd_approx(args) -> int:
    problem = _problem(args.problem)
    kw = {} if args.max_cuts_per_iter is None else {"max_cuts_per_iteration": args.max_cuts_per_iter}
    cfg = ApproxConfig(args.eps, max_iterations=args.max_iter, time_limit=args.time_limit,
                       workers=args.workers, **kw)
    build = approximate_single_cut if args.alg == "alg1" else approximate_multi_cut
    res = build(problem.g, problem.box, cfg)
    print(f"problem={problem.name} algorithm={args.alg} epsilon={args.eps:g}")
    print(f"iterations={res.iterations} cuts={res.cuts_added} vertices={len(res.poly)}")
    print(f"final_gap={res.final_gap:.6g} terminated_by={res.terminated_by.value}")
    _write(args.out, res.poly.to_json(indent=2) + "\n")
    return EXIT_OK if res.terminated_by.value == "gap_met" else EXIT_UNCERTIFIED


def _cmd_solve(args) -> int:
    problem = _problem(args.problem)
    rep = solve(problem, args.eps, args.alg, max_iterations=args.max_iter, time_limit=args.time_limit,
                max_cuts_per_iteration=args.max_cuts_per_iter, workers=args.workers)
    print(f"problem={problem.name} algorithm={args.alg} epsilon={args.eps:g}")
    print(f"f_best={rep.f_best:.6f} x_best=[{', '.join(f'{v:.6f}' for v in rep.x_best)}]")
    print(f"lower_bound={rep.lower_bound:.6f} certificate_gap={rep.gap:.6g}")
    print(f"iterations={rep.iterations} cuts={rep.cuts} terminated_by={rep.terminated_by.value}")
    if args.out is not None:
        if args.format == "csv":
            if rep.bounds_history is None:
                raise UsageError("--format csv needs --alg alg3 (only alg3 records a_k/b_k)")
            _write(args.out, rep.bounds_csv())
        else:
            _write(args.out, rep.to_json(indent=2) + "\n")
    return EXIT_OK if rep.certified else EXIT_UNCERTIFIED


def _cmd_bench(args) -> int:
    for spec in args.problem:
        _problem(spec)
    limit = DEFAULT_TIME_LIMIT if args.time_limit is None else args.time_limit
    suite = run_suite(args.problem, args.eps, args.alg, limit, max_iterations=args.max_iter,
                      workers=args.workers, seed=args.seed)
    print(emit_table(suite, "markdown"), end="")
    for r in suite.rows:
        if r.failed:
            print(f"failed: {r.example} eps={r.epsilon:g} {r.algorithm}: {r.error}")
    _write(args.out, emit_table(suite, args.format))
    return EXIT_OK if all(r.certified for r in suite.rows) else EXIT_UNCERTIFIED


def _cmd_convergence(args) -> int:
    _problem(args.problem)
    study = convergence_study(args.problem, args.alg, args.max_iter)
    print(f"problem={study.example} algorithm={args.alg} records={len(study.ks)}")
    print(f"initial_gap={study.gaps[0]:.6g} final_gap={study.gaps[-1]:.6g}")
    print(f"loglog_slope={study.loglog_slope:.4f} cummin_slope={study.cummin_slope:.4f}")
    _write(args.out, study.to_csv())
    return EXIT_OK


COMMANDS = {"approx": _cmd_approx, "solve": _cmd_solve, "bench": _cmd_bench, "convergence": _cmd_convergence}


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        print(parser.format_usage(), end="", file=sys.stderr)
        return EXIT_ERROR
    except DomainError as e:
        print(f"domain error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
