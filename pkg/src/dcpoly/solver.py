"""Global epsilon-solutions of ``min_{x in box} g(x) - h(x)``.

Two routes are offered.  :func:`solve_direct` refines the underestimator of
``g`` only where the current polyhedral model ``g^k - h`` attains its
minimum.  :func:`solve_via_approximation` minimizes ``g^k - h`` once over a
model that is already an epsilon-underestimator of ``g`` on the whole box.
Both minimize over epigraph vertices: a polyhedral convex function minus a
convex function attains its minimum over the box at one of them.
"""
from __future__ import annotations

import csv
import heapq
import io
import json
import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._parallel import PointMapper
from .oracles import DcProblem, DomainError, supporting_cut
from .poly import EpigraphPoly
from .underestimator import (
    ApproxConfig,
    ApproxResult,
    Termination,
    approximate_multi_cut,
    approximate_single_cut,
)

__all__ = [
    "SolveConfig",
    "BoundRecord",
    "SolveReport",
    "solve_direct",
    "solve_via_approximation",
    "bound_sandwich_check",
    "solve",
    "ALGORITHMS",
]

logger = logging.getLogger(__name__)

ALGORITHMS = ("alg1", "alg2", "alg3")
SANDWICH_SLACK = 1e-7
TAIL_LENGTH = 10


@dataclass(frozen=True)
class SolveConfig:
    epsilon: float
    max_iterations: int | None = 100_000
    time_limit: float | None = None
    record_bounds: bool = True
    workers: int = 1

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.epsilon == 0 and self.max_iterations is None:
            raise ValueError("epsilon = 0 needs a finite max_iterations")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


class BoundRecord(NamedTuple):
    k: int
    a_k: float
    b_k: float


@dataclass
class SolveReport:
    x_best: np.ndarray
    f_best: float
    lower_bound: float
    upper_bound: float
    iterations: int
    cuts: int
    elapsed: float
    terminated_by: Termination
    problem: str = ""
    epsilon: float = 0.0
    algorithm: str = "alg3"
    bounds_history: list[BoundRecord] | None = None
    x_tail: list[np.ndarray] = field(default_factory=list)
    poly: EpigraphPoly | None = field(default=None, repr=False)

    @property
    def certified(self) -> bool:
        return self.terminated_by is Termination.GAP_MET

    @property
    def gap(self) -> float:
        return self.f_best - self.lower_bound

    def to_dict(self) -> dict:
        d = {
            "problem": self.problem,
            "n": int(self.x_best.size),
            "epsilon": self.epsilon,
            "algorithm": self.algorithm,
            "x_best": self.x_best.tolist(),
            "f_best": self.f_best,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "iterations": self.iterations,
            "cuts": self.cuts,
            "elapsed_seconds": self.elapsed,
            "terminated_by": self.terminated_by.value,
        }
        if self.bounds_history is not None:
            d["bounds_history"] = [r._asdict() for r in self.bounds_history]
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def bounds_csv(self) -> str:
        if self.bounds_history is None:
            raise ValueError("no bounds were recorded")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(BoundRecord._fields)
        for r in self.bounds_history:
            w.writerow([r.k, repr(r.a_k), repr(r.b_k)])
        return buf.getvalue()


def _key(poly: EpigraphPoly, vid: int) -> tuple:
    return (*poly.point(vid).tolist(), poly.height(vid))


def solve_direct(problem: DcProblem, cfg: SolveConfig) -> SolveReport:
    """Cutting-plane solve that refines ``g``'s model only at model minimizers.

    Iteration k picks the vertex ``(x^k, y^k)`` minimizing ``y - h(x)``
    (smallest point on ties); ``a_k = y^k - h(x^k)`` is a lower bound on
    the optimum and ``b_k = g(x^k) - h(x^k)`` an upper bound.  Stops when
    ``g(x^k) - y^k <= epsilon``; otherwise cuts at ``x^k``.
    """
    start = time.perf_counter()
    g, h, box = problem.g, problem.h, problem.box
    poly = EpigraphPoly(box, supporting_cut(g, box.center))
    heap: list[tuple] = []
    bounds: list[BoundRecord] | None = [] if cfg.record_bounds else None
    tail: list[np.ndarray] = []
    best_x, best_f = None, np.inf
    lower = -np.inf
    cuts = 0
    k = 0

    with PointMapper(h.eval, cfg.workers) as h_values:

        def register(vids):
            pts = [poly.point(v) for v in vids]
            try:
                hv = h_values(pts)
            except DomainError as e:
                raise DomainError(f"iteration {k}: {e}", e.point) from e
            for v, hx in zip(vids, hv):
                heapq.heappush(heap, (poly.height(v) - hx, _key(poly, v), v, hx))

        register(poly.vertex_ids())
        while True:
            if cfg.max_iterations is not None and k >= cfg.max_iterations:
                status = Termination.ITERATION_CAP
                break
            if cfg.time_limit is not None and time.perf_counter() - start >= cfg.time_limit:
                status = Termination.TIME_LIMIT
                break
            k += 1
            while not poly.has_vertex(heap[0][2]):
                heapq.heappop(heap)
            a_k, _, vid, hx = heap[0]
            x, y = poly.point(vid), poly.height(vid)
            try:
                gx = float(g.eval(x))
            except DomainError as e:
                raise DomainError(f"iteration {k}: {e}", x) from e
            b_k = gx - hx
            lower = a_k
            if b_k < best_f:
                best_x, best_f = x, b_k
            if bounds is not None:
                bounds.append(BoundRecord(k, a_k, b_k))
            tail.append(x)
            del tail[:-TAIL_LENGTH]
            if not gx - y > cfg.epsilon:
                status = Termination.GAP_MET
                break
            try:
                cut = supporting_cut(g, x)
            except DomainError as e:
                raise DomainError(f"iteration {k}: {e}", x) from e
            update = poly.add_cut(cut, seed=vid)
            cuts += 1
            register(update.added)

    if best_x is None:
        raise ValueError("max_iterations must allow at least one iteration")
    elapsed = time.perf_counter() - start
    logger.info("alg3 on %s: %s after %d iterations, f=%.6g, lower=%.6g",
                problem.name, status.value, k, best_f, lower)
    return SolveReport(
        x_best=best_x, f_best=best_f, lower_bound=lower, upper_bound=best_f,
        iterations=k, cuts=cuts, elapsed=elapsed, terminated_by=status,
        problem=problem.name, epsilon=cfg.epsilon, algorithm="alg3",
        bounds_history=bounds, x_tail=tail, poly=poly,
    )


def solve_via_approximation(problem: DcProblem, approx: ApproxResult) -> SolveReport:
    """Minimize ``g^k - h`` over the vertices of a certified underestimator.

    The minimum ``z^g`` bounds the optimum from below and the minimizer is
    an epsilon-solution, with epsilon the tolerance the model was built for.
    """
    if approx.terminated_by is not Termination.GAP_MET:
        raise ValueError(
            f"underestimator terminated by {approx.terminated_by.value}; no certificate available"
        )
    if not (np.array_equal(approx.poly.box.lower, problem.box.lower)
            and np.array_equal(approx.poly.box.upper, problem.box.upper)):
        raise ValueError("underestimator was built over a different box")
    start = time.perf_counter()
    best = None
    for v in approx.poly.vertices:
        score = v.height - float(problem.h.eval(v.point))
        if best is None or score < best[0]:
            best = (score, v)
    z_g, v = best
    f = problem.f(v.point)
    return SolveReport(
        x_best=v.point, f_best=f, lower_bound=z_g, upper_bound=f,
        iterations=approx.iterations, cuts=approx.cuts_added,
        elapsed=approx.elapsed + (time.perf_counter() - start),
        terminated_by=Termination.GAP_MET, problem=problem.name,
        epsilon=approx.epsilon, algorithm=approx.algorithm, poly=approx.poly,
    )


def bound_sandwich_check(report: SolveReport, problem: DcProblem, slack: float = SANDWICH_SLACK) -> bool:
    """True iff every recorded ``a_k <= z* <= b_k`` up to ``slack``."""
    if problem.known_optimum is None:
        raise ValueError(f"{problem.name} has no known optimum")
    if report.bounds_history is None:
        raise ValueError("report carries no bounds history")
    z = problem.known_optimum.z_star
    return all(r.a_k <= z + slack and r.b_k >= z - slack for r in report.bounds_history)


def solve(problem: DcProblem, epsilon: float, algorithm: str = "alg3", *,
          max_iterations: int | None = 100_000, time_limit: float | None = None,
          max_cuts_per_iteration: int | None = None, workers: int = 1) -> SolveReport:
    """Run one of the three pipelines and return a report.

    ``alg1``/``alg2`` build an epsilon-underestimator of ``g`` and then scan
    its vertices; if the build hits a cap, the incumbent is the best vertex
    of the unfinished model and the report is not certified.
    """
    if algorithm == "alg3":
        return solve_direct(problem, SolveConfig(epsilon, max_iterations, time_limit, True, workers))
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    kw = {} if max_cuts_per_iteration is None else {"max_cuts_per_iteration": max_cuts_per_iteration}
    cfg = ApproxConfig(epsilon, max_iterations=max_iterations, time_limit=time_limit, workers=workers, **kw)
    builder = approximate_single_cut if algorithm == "alg1" else approximate_multi_cut
    approx = builder(problem.g, problem.box, cfg)
    if approx.terminated_by is Termination.GAP_MET:
        return solve_via_approximation(problem, approx)
    # uncertified: minimizer of the unfinished model g^k - h
    best = None
    for v in approx.poly.vertices:
        score = v.height - float(problem.h.eval(v.point))
        if best is None or score < best[0]:
            best = (score, v)
    x = best[1].point
    f = problem.f(x)
    return SolveReport(
        x_best=x, f_best=f, lower_bound=best[0], upper_bound=f,
        iterations=approx.iterations, cuts=approx.cuts_added, elapsed=approx.elapsed,
        terminated_by=approx.terminated_by, problem=problem.name, epsilon=epsilon,
        algorithm=algorithm, poly=approx.poly,
    )
