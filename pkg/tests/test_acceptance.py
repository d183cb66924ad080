"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dcpoly import (  # noqa: E402
    ApproxConfig,
    Box,
    EpigraphPoly,
    Termination,
    approximate_multi_cut,
    approximate_single_cut,
    bound_sandwich_check,
    convergence_study,
    enumerate_vertices_bruteforce,
    parse_problem_spec,
    solve,
    solve_direct,
)
from dcpoly.cli import main as cli_main  # noqa: E402
from dcpoly.solver import SolveConfig  # noqa: E402

from _support import quadratic_1d, random_instance, same_vertex_set  # noqa: E402

ALGS = ("alg1", "alg2", "alg3")
# floating-point slack on the lower side of z* <= v; -1 - log 3 is not representable
ROUNDING = 1e-9

RESULTS: dict[int, tuple[bool, str]] = {}
_RUNS: list[tuple] = []


def _record(n: int, ok: bool, detail: str):
    RESULTS[n] = (ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def _run(spec: str, eps: float, alg: str):
    rep = solve(parse_problem_spec(spec), eps, alg, workers=1)
    _RUNS.append(((spec, eps, alg), (rep.f_best, rep.iterations, rep.cuts, rep.x_best.tolist())))
    return rep


def criterion_1() -> bool:
    z = {"ex1": -1 - math.log(3), "ex4": -9.0, "ex5": -1.0}
    bad = []
    worst = 0.0
    for spec, zs in z.items():
        for eps in (1.0, 0.1, 0.01):
            for alg in ALGS:
                rep = _run(spec, eps, alg)
                v = rep.f_best
                worst = max(worst, v - zs)
                if not (rep.certified and zs - ROUNDING <= v <= zs + eps):
                    bad.append((spec, eps, alg, v))
    for alg in ALGS:
        rep = _run("ex2", 0.01, alg)
        if not (rep.certified and -1 - ROUNDING <= rep.f_best <= -0.99):
            bad.append(("ex2", 0.01, alg, rep.f_best))
    return _record(1, not bad, f"30 cells, max v - z* = {worst:.3g}" + (f", failing {bad}" if bad else ""))


def criterion_2() -> bool:
    bad = []
    worst = 0.0
    for spec in ("ex7", "ex8:n=2", "ex8:n=3", "ex8:n=4"):
        n = parse_problem_spec(spec).n
        for alg in ALGS:
            rep = _run(spec, 1.0, alg)
            dx = float(np.max(np.abs(rep.x_best - np.ones(n))))
            worst = max(worst, abs(rep.f_best))
            if not (rep.certified and abs(rep.f_best) <= 1e-9 and dx <= 1e-9):
                bad.append((spec, alg, rep.f_best, dx))
    return _record(2, not bad, f"12 cells, max |v| = {worst:.3g}" + (f", failing {bad}" if bad else ""))


def criterion_3() -> bool:
    bad = []
    iters = 0
    for spec in ("ex1", "ex4", "ex5"):
        p = parse_problem_spec(spec)
        for eps in (1.0, 0.1, 0.01):
            rep = solve_direct(p, SolveConfig(eps))
            iters += len(rep.bounds_history)
            if not bound_sandwich_check(rep, p, slack=1e-7):
                bad.append((spec, eps))
    return _record(3, not bad, f"{iters} recorded iterations" + (f", failing {bad}" if bad else ""))


def criterion_4() -> bool:
    bad = []
    lo, hi = math.inf, -math.inf
    rng = np.random.default_rng(0)
    for spec in ("ex2", "ex3", "ex4", "ex5"):
        p = parse_problem_spec(spec)
        X = p.box.sample(rng, 10_000)
        gx = np.array([p.g.eval(x) for x in X])
        for build in (approximate_single_cut, approximate_multi_cut):
            res = build(p.g, p.box, ApproxConfig(0.1, max_iterations=100_000))
            d = gx - res.underestimator(X)
            lo, hi = min(lo, d.min()), max(hi, d.max())
            if res.terminated_by is not Termination.GAP_MET or d.min() < 0 or d.max() > 0.1 + 1e-6:
                bad.append((spec, res.algorithm, res.terminated_by.value, d.min(), d.max()))
    return _record(4, not bad, f"g - g^k in [{lo:.3g}, {hi:.4g}]" + (f", failing {bad}" if bad else ""))


def criterion_5() -> bool:
    rng = np.random.default_rng(5)
    mismatches = 0
    t0 = time.perf_counter()
    for _ in range(500):
        box, cuts = random_instance(rng)
        poly = EpigraphPoly(box, cuts[0])
        for c in cuts[1:]:
            poly.add_cut(c)
        if not same_vertex_set(poly.vertices, enumerate_vertices_bruteforce(box, cuts), tol=1e-7):
            mismatches += 1
    dt = time.perf_counter() - t0
    return _record(5, mismatches == 0, f"500 instances, {mismatches} mismatches, {dt:.1f}s")


def criterion_6() -> bool:
    quad = convergence_study((quadratic_1d(), Box([-1], [1])), "alg1", 200)
    ex5 = convergence_study("ex5", "alg1", 300)
    ok = quad.cummin_slope <= -0.8 and ex5.cummin_slope <= -0.3
    return _record(6, ok, f"slopes x^2 {quad.cummin_slope:.3f} (<= -0.8), ex5 {ex5.cummin_slope:.3f} (<= -0.3)")


def criterion_7(repeats: int = 11) -> bool:
    # min over interleaved repeats filters scheduler noise
    p = parse_problem_spec("ex2")
    times = {a: [] for a in ALGS}
    for _ in range(repeats):
        for a in ALGS:
            t0 = time.perf_counter()
            rep = solve(p, 0.1, a)
            times[a].append(time.perf_counter() - t0)
            assert rep.certified
    t = {a: min(v) for a, v in times.items()}
    ok = t["alg2"] < t["alg1"] and t["alg3"] < t["alg1"]
    return _record(7, ok, "ex2 eps=0.1 min times " + ", ".join(f"{a} {t[a]:.4f}s" for a in ALGS))


def criterion_8(tmp_dir: Path | None = None) -> bool:
    first = list(_RUNS)
    if not first:
        for spec, eps, alg in [("ex1", 0.01, a) for a in ALGS] + [("ex5", 0.01, a) for a in ALGS]:
            _run(spec, eps, alg)
        first = list(_RUNS)
    _RUNS.clear()
    for (spec, eps, alg), _ in first:
        _run(spec, eps, alg)
    diff = [key for (key, a), (_, b) in zip(first, _RUNS) if a != b]
    # the CLI with --seed and --workers 1 writes identical approximation artifacts
    outs = []
    if tmp_dir is not None:
        for i in range(2):
            out = tmp_dir / f"poly{i}.json"
            cli_main(["approx", "--problem", "ex5", "--eps", "0.1", "--seed", "0", "--workers", "1",
                      "--out", str(out)])
            outs.append(out.read_bytes())
    same_cli = len(set(outs)) <= 1
    ok = not diff and same_cli
    return _record(8, ok, f"{len(first)} runs repeated, {len(diff)} differ; CLI artifacts identical: {same_cli}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7]


@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 8)])
def test_criterion(check):
    assert check()


def test_criterion_8(tmp_path):
    assert criterion_8(tmp_path)


if __name__ == "__main__":
    import tempfile

    for check in CRITERIA:
        check()
    with tempfile.TemporaryDirectory() as d:
        criterion_8(Path(d))
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
