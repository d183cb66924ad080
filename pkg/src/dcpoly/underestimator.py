"""Cutting-plane construction of epsilon-polyhedral underestimators.

Both builders start from the tangent plane at the box center and refine
``g^k = max_j s_j`` by supporting cuts of ``g``.  The largest vertex gap
``g(x) - t`` over the epigraph vertices equals ``max_box (g - g^k)``, so it
is both the stopping test and the certificate.
"""
from __future__ import annotations

import csv
import heapq
import io
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from ._parallel import PointMapper
from .oracles import ConvexOracle, DomainError, supporting_cut
from .poly import AffineMinorant, Box, EpigraphPoly, LiftedVertex

__all__ = [
    "Termination",
    "ApproxConfig",
    "HistoryRecord",
    "ApproxResult",
    "GapRecord",
    "ConvergenceProfile",
    "approximate_single_cut",
    "approximate_multi_cut",
    "max_vertex_gap",
    "convergence_profile",
]

logger = logging.getLogger(__name__)

DEFAULT_MAX_CUTS = 4096


class Termination(str, Enum):
    GAP_MET = "gap_met"
    ITERATION_CAP = "iteration_cap"
    TIME_LIMIT = "time_limit"


@dataclass(frozen=True)
class ApproxConfig:
    epsilon: float
    max_iterations: int | None = 100_000
    max_cuts_per_iteration: int = DEFAULT_MAX_CUTS
    time_limit: float | None = None
    record_history: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.epsilon == 0 and self.max_iterations is None:
            raise ValueError("epsilon = 0 needs a finite max_iterations")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.max_cuts_per_iteration < 1:
            raise ValueError("max_cuts_per_iteration must be >= 1")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


class HistoryRecord(NamedTuple):
    k: int
    vertex_count: int
    max_gap: float
    cuts_so_far: int
    elapsed_seconds: float


@dataclass
class ApproxResult:
    poly: EpigraphPoly
    iterations: int
    cuts_added: int
    final_gap: float
    terminated_by: Termination
    epsilon: float
    algorithm: str
    elapsed: float
    history: list[HistoryRecord] | None = None

    @property
    def minorants(self) -> list[AffineMinorant]:
        return self.poly.minorants

    def underestimator(self, x):
        return self.poly.evaluate(x)

    def history_csv(self) -> str:
        if self.history is None:
            raise ValueError("run was made without record_history")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HistoryRecord._fields)
        for r in self.history:
            w.writerow([r.k, r.vertex_count, repr(r.max_gap), r.cuts_so_far, f"{r.elapsed_seconds:.6f}"])
        return buf.getvalue()


class _Clock:
    def __init__(self, limit: float | None):
        self.start = time.perf_counter()
        self.limit = limit

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def expired(self) -> bool:
        return self.limit is not None and self.elapsed() >= self.limit


def _cut_at(g: ConvexOracle, x: np.ndarray, k: int) -> AffineMinorant:
    try:
        return supporting_cut(g, x)
    except DomainError as e:
        raise DomainError(f"iteration {k}: {e}", e.point if e.point is not None else x) from e


def _gaps_for(poly: EpigraphPoly, vids, g_values: PointMapper, k: int) -> list[float]:
    pts = [poly.point(v) for v in vids]
    try:
        vals = g_values(pts)
    except DomainError as e:
        raise DomainError(f"iteration {k}: {e}", e.point) from e
    return [val - poly.height(v) for val, v in zip(vals, vids)]


def _key(poly: EpigraphPoly, vid: int) -> tuple:
    return (*poly.point(vid).tolist(), poly.height(vid))


def approximate_single_cut(g: ConvexOracle, box: Box, cfg: ApproxConfig) -> ApproxResult:
    """One cut per iteration, at the vertex farthest below the graph of g."""
    clock = _Clock(cfg.time_limit)
    poly = EpigraphPoly(box, _cut_at(g, box.center, 0))
    history: list[HistoryRecord] | None = [] if cfg.record_history else None
    heap: list[tuple] = []
    settled = 0.0  # gap of vertices a cut could not separate numerically

    with PointMapper(g.eval, cfg.workers) as g_values:

        def register(vids, k):
            for v, gap in zip(vids, _gaps_for(poly, vids, g_values, k)):
                heapq.heappush(heap, (-gap, _key(poly, v), v))

        register(poly.vertex_ids(), 0)
        k = 0
        while True:
            while heap and not poly.has_vertex(heap[0][2]):
                heapq.heappop(heap)
            # every live vertex may be settled, leaving the heap empty
            neg_gap, _, vid = heap[0] if heap else (-settled, None, None)
            gap = max(-neg_gap, settled)
            if history is not None:
                history.append(HistoryRecord(k, len(poly), gap, k, clock.elapsed()))
            # vid is None once nothing left a cut can separate: exact to rounding
            if gap <= cfg.epsilon or vid is None:
                status = Termination.GAP_MET
                break
            if cfg.max_iterations is not None and k >= cfg.max_iterations:
                status = Termination.ITERATION_CAP
                break
            if clock.expired():
                status = Termination.TIME_LIMIT
                break
            update = poly.add_cut(_cut_at(g, poly.point(vid), k), seed=vid)
            k += 1
            if poly.has_vertex(vid):
                heapq.heappop(heap)
                settled = max(settled, -neg_gap)
            register(update.added, k)

    logger.info("alg1: %s after %d cuts, gap %.3g, %d vertices", status.value, k, gap, len(poly))
    return ApproxResult(poly, k, k, gap, status, cfg.epsilon, "alg1", clock.elapsed(), history)


def approximate_multi_cut(g: ConvexOracle, box: Box, cfg: ApproxConfig) -> ApproxResult:
    """Each round cuts at every vertex whose gap exceeds epsilon.

    Vertices found within epsilon are cached by point and never rescanned.
    At most ``max_cuts_per_iteration`` cuts (deepest first) are added per
    round; the rest are picked up by the next scan.
    """
    clock = _Clock(cfg.time_limit)
    poly = EpigraphPoly(box, _cut_at(g, box.center, 0))
    history: list[HistoryRecord] | None = [] if cfg.record_history else None
    gaps: dict[int, float] = {}
    close_enough: set[tuple] = set()
    cuts = 0

    with PointMapper(g.eval, cfg.workers) as g_values:
        unscored: list[int] = poly.vertex_ids()
        open_: dict[int, tuple] = {}
        k = 0
        while True:
            # vertices born and killed inside one batch are never evaluated
            fresh = unscored
            unscored = []
            for v, gap in zip(fresh, _gaps_for(poly, fresh, g_values, k)):
                gaps[v] = gap
                key = _key(poly, v)
                if key[:-1] in close_enough:
                    continue
                if gap > cfg.epsilon:
                    open_[v] = (-gap, key, v)
                else:
                    close_enough.add(key[:-1])
            max_gap = max(gaps.values())
            if history is not None:
                history.append(HistoryRecord(k, len(poly), max_gap, cuts, clock.elapsed()))
            if not open_:
                status = Termination.GAP_MET
                break
            if cfg.max_iterations is not None and k >= cfg.max_iterations:
                status = Termination.ITERATION_CAP
                break
            if clock.expired():
                status = Termination.TIME_LIMIT
                break
            pending = sorted(open_.values())[: cfg.max_cuts_per_iteration]
            batch = [(v, poly.point(v)) for _, _, v in pending]
            for v, x in batch:
                update = poly.add_cut(_cut_at(g, x, k), seed=v, polish=False)
                cuts += 1
                for r in update.removed:
                    gaps.pop(r, None)
                    open_.pop(r, None)
                if poly.has_vertex(v):
                    gaps[v] = 0.0
                    open_.pop(v, None)
                unscored.extend(update.added)
            # polish only the vertices that survived the whole batch
            unscored = [v for v in unscored if poly.has_vertex(v)]
            poly.polish(unscored)
            k += 1

    logger.info("alg2: %s after %d rounds / %d cuts, gap %.3g", status.value, k, cuts, max_gap)
    return ApproxResult(poly, k, cuts, max_gap, status, cfg.epsilon, "alg2", clock.elapsed(), history)


class GapRecord(NamedTuple):
    gap: float
    argmax_vertex: LiftedVertex


def max_vertex_gap(poly: EpigraphPoly, g: ConvexOracle) -> GapRecord:
    """Largest ``g(x) - t`` over the vertices; ties go to the smallest (x, t)."""
    best = None
    for v in poly.vertices:
        gap = float(g.eval(v.point)) - v.height
        if best is None or gap > best[0]:
            best = (gap, v)
    return GapRecord(*best)


@dataclass(frozen=True)
class ConvergenceProfile:
    ks: list[int]
    gaps: list[float]
    loglog_slope: float
    cummin_slope: float
    slope_defined: bool = field(default=True)


def _fit_slope(ks: np.ndarray, gaps: np.ndarray) -> float:
    if len(ks) < 2 or np.any(gaps <= 0):
        return float("nan")
    return float(np.polyfit(np.log(ks), np.log(gaps), 1)[0])


def convergence_profile(result: ApproxResult, min_points: int = 20) -> ConvergenceProfile:
    """Least-squares slope of log(gap) against log(k) over the last half of the run."""
    if result.history is None or len(result.history) < min_points:
        have = 0 if result.history is None else len(result.history)
        raise ValueError(f"need at least {min_points} history records, got {have}")
    ks = np.array([r.k for r in result.history], dtype=float)
    gaps = np.array([r.max_gap for r in result.history], dtype=float)
    sel = ks >= 1
    tail = np.flatnonzero(sel)[int(sel.sum()) // 2:]
    slope = _fit_slope(ks[tail], gaps[tail])
    cummin = np.minimum.accumulate(gaps)
    cslope = _fit_slope(ks[tail], cummin[tail])
    return ConvergenceProfile(
        ks=[int(k) for k in ks], gaps=gaps.tolist(), loglog_slope=slope,
        cummin_slope=cslope, slope_defined=bool(np.isfinite(slope)),
    )
