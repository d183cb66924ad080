"""Benchmark harness: grids of (example, epsilon, algorithm) solves and
gap-convergence runs, exported as CSV, JSON or a markdown table."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from .oracles import ConvexOracle, DcProblem, parse_problem_spec
from .poly import Box
from .solver import ALGORITHMS, solve
from .underestimator import (
    ApproxConfig,
    ApproxResult,
    approximate_multi_cut,
    approximate_single_cut,
    convergence_profile,
)

__all__ = [
    "BenchRow",
    "BenchSuite",
    "run_suite",
    "emit_table",
    "ConvergenceStudy",
    "convergence_study",
    "CSV_COLUMNS",
    "DEFAULT_TIME_LIMIT",
]

logger = logging.getLogger(__name__)

DEFAULT_TIME_LIMIT = 600.0
CSV_COLUMNS = ("example", "n", "m", "epsilon", "algorithm", "time_seconds", "value", "lower_bound", "certified")
FORMATS = ("csv", "json", "markdown")


@dataclass(frozen=True)
class BenchRow:
    example: str
    n: int
    m: int | None
    epsilon: float
    algorithm: str
    time_seconds: float
    value: float
    certified: bool
    lower_bound: float
    status: str = "gap_met"
    z_star: float | None = None
    iterations: int = 0
    cuts: int = 0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.status == "failed"


@dataclass
class BenchSuite:
    rows: list[BenchRow]
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": dict(self.config), "rows": [_row_to_json(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchSuite":
        return cls([_row_from_json(r) for r in d["rows"]], dict(d.get("config", {})))

    @classmethod
    def from_json(cls, text: str) -> "BenchSuite":
        return cls.from_dict(json.loads(text))


def _finite_or_none(v):
    return v if v is None or math.isfinite(v) else None


def _row_to_json(r: BenchRow) -> dict:
    d = asdict(r)
    # JSON has no NaN/inf; failed cells carry null
    for k in ("value", "lower_bound", "time_seconds"):
        d[k] = _finite_or_none(d[k])
    return d


def _row_from_json(d: dict) -> BenchRow:
    d = dict(d)
    for k in ("value", "lower_bound", "time_seconds"):
        if d.get(k) is None:
            d[k] = float("nan")
    return BenchRow(**d)


def _run_cell(spec: str, eps: float, alg: str, time_limit: float, max_iterations: int) -> BenchRow:
    try:
        problem = parse_problem_spec(spec)
    except ValueError as e:
        logger.warning("cell %s/%s/%s failed: %s", spec, eps, alg, e)
        return BenchRow(spec, 0, None, eps, alg, float("nan"), float("nan"), False, float("nan"),
                        status="failed", error=str(e))
    z = problem.known_optimum.z_star if problem.known_optimum is not None else None
    m = problem.params.get("m")
    t0 = time.perf_counter()
    try:
        rep = solve(problem, eps, alg, max_iterations=max_iterations, time_limit=time_limit)
    except (ValueError, ArithmeticError) as e:
        logger.warning("cell %s/%s/%s failed: %s", spec, eps, alg, e)
        return BenchRow(spec, problem.n, m, eps, alg, time.perf_counter() - t0, float("nan"), False,
                        float("nan"), status="failed", z_star=z, error=str(e))
    return BenchRow(
        example=spec, n=problem.n, m=m, epsilon=eps, algorithm=alg,
        time_seconds=time.perf_counter() - t0, value=rep.f_best, certified=rep.certified,
        lower_bound=rep.lower_bound, status=rep.terminated_by.value, z_star=z,
        iterations=rep.iterations, cuts=rep.cuts,
    )


def run_suite(examples, epsilons, algorithms=ALGORITHMS, time_limit: float = DEFAULT_TIME_LIMIT, *,
              max_iterations: int = 100_000, workers: int = 1, seed: int = 0) -> BenchSuite:
    """Solve every (example, epsilon, algorithm) cell.

    Errors and time-limit hits are recorded per row and never abort the
    suite.  Rows come back in request order whatever the worker count.
    ``seed`` is stored in the config; the solvers themselves are deterministic.
    """
    examples, epsilons, algorithms = list(examples), [float(e) for e in epsilons], list(algorithms)
    bad = [a for a in algorithms if a not in ALGORITHMS]
    if bad:
        raise ValueError(f"unknown algorithm(s) {bad}; choose from {ALGORITHMS}")
    cells = [(ex, eps, alg) for ex in examples for eps in epsilons for alg in algorithms]
    run = lambda c: _run_cell(*c, time_limit, max_iterations)  # noqa: E731
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(c) for c in cells]
    config = {"time_limit": time_limit, "epsilons": epsilons, "seed": seed,
              "examples": examples, "algorithms": algorithms}
    return BenchSuite(rows, config)


def _csv(suite: BenchSuite) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in suite.rows:
        w.writerow([
            r.example, r.n, "" if r.m is None else r.m, repr(r.epsilon), r.algorithm,
            f"{r.time_seconds:.6f}", repr(r.value), repr(r.lower_bound), str(r.certified).lower(),
        ])
    return buf.getvalue()


def _fmt_num(v: float | None, digits: int = 4) -> str:
    if v is None or not math.isfinite(v):
        return ""
    return f"{v:.{digits}f}"


def _cell(r: BenchRow | None, time_limit) -> tuple[str, str]:
    if r is None:
        return "", ""
    if r.failed:
        return "failed", ""
    t = f"> {time_limit:g}" if r.status == "time_limit" else f"{r.time_seconds:.4f}"
    v = _fmt_num(r.value) + ("" if r.certified else "*")
    return t, v


def _markdown(suite: BenchSuite) -> str:
    algs = [a for a in ALGORITHMS if any(r.algorithm == a for r in suite.rows)]
    keyed = {(r.example, r.epsilon, r.algorithm): r for r in suite.rows}
    order: list[tuple[str, float]] = []
    for r in suite.rows:
        if (r.example, r.epsilon) not in order:
            order.append((r.example, r.epsilon))
    limit = suite.config.get("time_limit", DEFAULT_TIME_LIMIT)
    head = ["Ex", "n", "z*", "eps"]
    for a in algs:
        head += [f"{a} time", f"{a} value"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    last_ex = None
    for ex, eps in order:
        rows = [keyed.get((ex, eps, a)) for a in algs]
        first = next(r for r in rows if r is not None)
        if ex != last_ex:
            lead = [ex, str(first.n) if first.n else "", _fmt_num(first.z_star)]
        else:
            lead = ["", "", ""]
        last_ex = ex
        cells = [f"{eps:g}"]
        for r in rows:
            cells += list(_cell(r, limit))
        lines.append("| " + " | ".join(lead + cells) + " |")
    if any(not r.certified and not r.failed for r in suite.rows):
        lines += ["", "`*` uncertified: stopped by an iteration or time cap."]
    return "\n".join(lines) + "\n"


def emit_table(suite: BenchSuite, format: str = "csv") -> str:
    """Serialize a suite deterministically as ``csv``, ``json`` or ``markdown``."""
    if format == "csv":
        return _csv(suite)
    if format == "json":
        return json.dumps(suite.to_dict(), indent=2) + "\n"
    if format == "markdown":
        return _markdown(suite)
    raise ValueError(f"unknown format {format!r}; choose from {FORMATS}")


@dataclass(frozen=True)
class ConvergenceStudy:
    example: str
    algorithm: str
    ks: list[int]
    gaps: list[float]
    loglog_slope: float
    cummin_slope: float
    result: ApproxResult = field(repr=False, compare=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "max_gap"])
        for k, gap in zip(self.ks, self.gaps):
            w.writerow([k, repr(gap)])
        return buf.getvalue()


def _g_and_box(example) -> tuple[str, ConvexOracle, Box]:
    if isinstance(example, str):
        p = parse_problem_spec(example)
        return p.name, p.g, p.box
    if isinstance(example, DcProblem):
        return example.name, example.g, example.box
    g, box = example
    return "custom", g, box


def convergence_study(example, algorithm: str = "alg1", iterations: int = 200, *,
                      min_points: int = 20) -> ConvergenceStudy:
    """Run with epsilon = 0 for ``iterations`` steps and fit the gap decay.

    ``example`` is a registry identifier, a :class:`DcProblem`, or a
    ``(g, box)`` pair.  Runs that stop early (exact reconstruction of a
    polyhedral ``g``) report NaN slopes.
    """
    if algorithm not in ("alg1", "alg2"):
        raise ValueError(f"convergence studies need alg1 or alg2, got {algorithm!r}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    name, g, box = _g_and_box(example)
    builder = approximate_single_cut if algorithm == "alg1" else approximate_multi_cut
    res = builder(g, box, ApproxConfig(0.0, max_iterations=iterations, record_history=True))
    ks = [r.k for r in res.history]
    gaps = [r.max_gap for r in res.history]
    if len(res.history) >= min_points:
        prof = convergence_profile(res, min_points)
        slope, cslope = prof.loglog_slope, prof.cummin_slope
    else:
        slope = cslope = float("nan")
    return ConvergenceStudy(name, algorithm, ks, gaps, slope, cslope, res)
