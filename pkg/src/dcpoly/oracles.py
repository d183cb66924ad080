"""Convex function oracles, supporting cuts, and the benchmark DC problems.

An oracle returns a value and one deterministic subgradient.  At kinks the
subgradient is chosen by a fixed rule so repeated runs are reproducible:

* ``max{f_1, ..., f_m}`` uses the lowest-index piece whose value is within
  ``1e-12 * (1 + |max|)`` of the maximum;
* ``|u|`` at ``u = 0`` uses 0;
* ``sqrt|a - x|`` at ``x = a`` contributes slope 0 (only ``h`` of ex1
  contains it, and no solver consumes subgradients of ``h``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .poly import AffineMinorant, Box

__all__ = [
    "DomainError",
    "ConvexOracle",
    "KnownOptimum",
    "DcProblem",
    "SubgradientReport",
    "supporting_cut",
    "registry_build",
    "parse_problem_spec",
    "validate_subgradient",
    "EXAMPLE_IDS",
    "VALID_COMBINATIONS",
]

KINK_TOL = 1e-12


class DomainError(ValueError):
    """An oracle was evaluated outside the domain of its function."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = None if point is None else np.array(point, dtype=float)


@dataclass(frozen=True)
class ConvexOracle:
    eval: Callable[[np.ndarray], float]
    subgrad: Callable[[np.ndarray], np.ndarray]
    dim: int
    domain_note: str = ""

    def __call__(self, x) -> float:
        return self.eval(x)

    def value_and_subgradient(self, x) -> tuple[float, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return float(self.eval(x)), np.asarray(self.subgrad(x), dtype=float)


@dataclass(frozen=True)
class KnownOptimum:
    x_star: np.ndarray
    z_star: float


@dataclass(frozen=True)
class DcProblem:
    """Minimize ``g(x) - h(x)`` over ``box``."""

    g: ConvexOracle
    h: ConvexOracle
    box: Box
    name: str
    known_optimum: KnownOptimum | None = None
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not (self.g.dim == self.h.dim == self.box.n):
            raise ValueError(
                f"dimension mismatch: g has {self.g.dim}, h has {self.h.dim}, box has {self.box.n}"
            )

    @property
    def n(self) -> int:
        return self.box.n

    def f(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.g.eval(x)) - float(self.h.eval(x))


def supporting_cut(g: ConvexOracle, x_bar) -> AffineMinorant:
    """The affine minorant ``g(x_bar) + c . (x - x_bar)`` with ``c`` from the oracle."""
    x_bar = np.atleast_1d(np.asarray(x_bar, dtype=float))
    value, c = g.value_and_subgradient(x_bar)
    if not np.isfinite(value) or not np.all(np.isfinite(c)):
        raise DomainError(f"oracle returned non-finite data at {x_bar.tolist()}", x_bar)
    return AffineMinorant.from_subgradient(value, c, x_bar)


# ---------------------------------------------------------------- kink helpers


def _active_piece(values) -> int:
    top = max(values)
    tol = KINK_TOL * (1.0 + abs(top))
    for i, v in enumerate(values):
        if v >= top - tol:
            return i
    return int(np.argmax(values))


def _sign(u: float) -> float:
    return 0.0 if u == 0 else math.copysign(1.0, u)


def _unit(n: int, i: int, scale: float = 1.0) -> np.ndarray:
    e = np.zeros(n)
    e[i] = scale
    return e


def _hinge_abs(x, a: int, b: int) -> float:
    """``max{0, |x_a| - x_b}``."""
    return max(0.0, abs(x[a]) - x[b])


def _hinge_abs_sub(x, a: int, b: int) -> np.ndarray:
    g = np.zeros(len(x))
    if _active_piece([0.0, abs(x[a]) - x[b]]) == 1:
        g[a] = _sign(x[a])
        g[b] = -1.0
    return g


def _sq(x) -> float:
    return float(np.dot(x, x))


# ---------------------------------------------------------------- example 1


def _ex1_G(x: float) -> float:
    return 6 * x * x - 12 * x + 8 + max(0.0, -(x ** 3))


def _ex1_G_sub(x: float) -> float:
    d = 12 * x - 12
    if _active_piece([0.0, -(x ** 3)]) == 1:
        d += -3 * x * x
    return d


def _ex1_check(x) -> float:
    x = float(np.asarray(x, dtype=float).reshape(-1)[0])
    if not x > 0:
        raise DomainError(f"ex1 g needs x > 0, got x = {x!r}", [x])
    return x


def _ex1_g(x) -> float:
    x = _ex1_check(x)
    return _ex1_G(x) - math.log(x)


def _ex1_g_sub(x) -> np.ndarray:
    x = _ex1_check(x)
    return np.array([_ex1_G_sub(x) - 1.0 / x])


def _neg_sqrt_abs(x: float, a: float) -> tuple[float, float]:
    r = abs(a - x)
    if r == 0:
        return 0.0, 0.0
    s = math.sqrt(r)
    return -s, -_sign(x - a) / (2 * s)


def _ex1_h_pieces(x: float):
    G = _ex1_G(x)
    v0, d0 = _neg_sqrt_abs(x, 3.0)
    v1, d1 = _neg_sqrt_abs(x, 1.0)
    cube = x ** 3
    inner = _active_piece([0.0, cube])
    v2 = max(0.0, cube)
    d2 = 3 * x * x if inner == 1 else 0.0
    Gd = _ex1_G_sub(x)
    return [v0 + G, v1 + G, v2], [d0 + Gd, d1 + Gd, d2]


def _ex1_h(x) -> float:
    x = float(np.asarray(x, dtype=float).reshape(-1)[0])
    return max(_ex1_h_pieces(x)[0])


def _ex1_h_sub(x) -> np.ndarray:
    x = float(np.asarray(x, dtype=float).reshape(-1)[0])
    vals, ders = _ex1_h_pieces(x)
    return np.array([ders[_active_piece(vals)]])


def _build_ex1(n: int, params) -> DcProblem:
    g = ConvexOracle(_ex1_g, _ex1_g_sub, 1, "requires x > 0 (contains -log x)")
    h = ConvexOracle(_ex1_h, _ex1_h_sub, 1, "convex on [1, 3]")
    return DcProblem(
        g, h, Box([1.0], [3.0]), "ex1",
        KnownOptimum(np.array([3.0]), -1.0 - math.log(3.0)),
    )


# ---------------------------------------------------------------- example 2


def _ex2_u(x) -> tuple[float, np.ndarray]:
    u = 3 * x[0] + 2 * x[1] + abs(x[0] - x[1])
    if u < 0:
        raise DomainError(f"ex2 h needs 3x1 + 2x2 + |x1 - x2| >= 0, got {u!r}", x)
    s = _sign(x[0] - x[1])
    return u, np.array([3.0 + s, 2.0 - s])


def _ex2_h(x) -> float:
    x = np.asarray(x, dtype=float)
    u, _ = _ex2_u(x)
    return math.sin(math.sqrt(u)) + 5 * _sq(x)


def _ex2_h_sub(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u, du = _ex2_u(x)
    out = 10 * x
    if u > 0:
        r = math.sqrt(u)
        out = out + math.cos(r) / (2 * r) * du
    return out


def _build_ex2(n: int, params) -> DcProblem:
    g = ConvexOracle(lambda x: 5 * _sq(np.asarray(x, dtype=float)), lambda x: 10 * np.asarray(x, dtype=float), 2)
    h = ConvexOracle(_ex2_h, _ex2_h_sub, 2, "requires 3x1 + 2x2 + |x1 - x2| >= 0")
    t = math.pi ** 2 / 20
    return DcProblem(g, h, Box([0.0, 0.0], [5.0, 5.0]), "ex2", KnownOptimum(np.array([t, t]), -1.0))


# ---------------------------------------------------------------- example 3


def _ex3_g(x) -> float:
    x = np.asarray(x, dtype=float)
    p = x[0] ** 2 + 0.09 * x[0]
    q = x[1] ** 2 + 0.1 * x[1]
    return p * q + 7.5 * _sq(x)


def _ex3_g_sub(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    p = x[0] ** 2 + 0.09 * x[0]
    q = x[1] ** 2 + 0.1 * x[1]
    return np.array([(2 * x[0] + 0.09) * q + 15 * x[0], p * (2 * x[1] + 0.1) + 15 * x[1]])


def _build_ex3(n: int, params) -> DcProblem:
    g = ConvexOracle(_ex3_g, _ex3_g_sub, 2)
    h = ConvexOracle(lambda x: 7.5 * _sq(np.asarray(x, dtype=float)), lambda x: 15 * np.asarray(x, dtype=float), 2)
    return DcProblem(g, h, Box([-2.0, -2.0], [1.0, 1.0]), "ex3", KnownOptimum(np.array([-2.0, -0.05]), -0.00955))


# ---------------------------------------------------------------- example 4


def _build_ex4(n: int, params) -> DcProblem:
    def g(x):
        x = np.asarray(x, dtype=float)
        return 0.25 * (x[0] + x[1]) ** 2

    def g_sub(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (x[0] + x[1]) * np.ones(2)

    def h(x):
        x = np.asarray(x, dtype=float)
        return 0.25 * (x[0] - x[1]) ** 2

    def h_sub(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (x[0] - x[1]) * np.array([1.0, -1.0])

    return DcProblem(
        ConvexOracle(g, g_sub, 2), ConvexOracle(h, h_sub, 2),
        Box([-2.0, -3.0], [3.0, 4.0]), "ex4", KnownOptimum(np.array([3.0, -3.0]), -9.0),
    )


# ---------------------------------------------------------------- example 5


def _ex5_g(x) -> float:
    x = np.asarray(x, dtype=float)
    return 1.03 * _sq(x) - math.cos(x[0]) * math.cos(x[1])


def _ex5_g_sub(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([
        2.06 * x[0] + math.sin(x[0]) * math.cos(x[1]),
        2.06 * x[1] + math.cos(x[0]) * math.sin(x[1]),
    ])


def _build_ex5(n: int, params) -> DcProblem:
    g = ConvexOracle(_ex5_g, _ex5_g_sub, 2)
    h = ConvexOracle(lambda x: _sq(np.asarray(x, dtype=float)), lambda x: 2 * np.asarray(x, dtype=float), 2)
    return DcProblem(g, h, Box([-6.0, -5.0], [4.0, 2.0]), "ex5", KnownOptimum(np.zeros(2), -1.0))


# ---------------------------------------------------------------- example 6

EX6_A = (4.0, 2.5, 7.5)
EX6_C = (0.70, 0.73, 0.76)


def _build_ex6(n: int, params) -> DcProblem:
    m = int(params.get("m", 2))
    a = np.array(EX6_A[:m])
    c = np.array(EX6_C[:m])

    def g(x):
        x = np.asarray(x, dtype=float)
        d = np.array([_sq(x - ai) for ai in a])
        return float(-np.sum(1.0 / (d + c)) + _sq(x))

    def g_sub(x):
        x = np.asarray(x, dtype=float)
        out = 2 * x
        for ai, ci in zip(a, c):
            diff = x - ai
            out = out + 2 * diff / (_sq(diff) + ci) ** 2
        return out

    gh = ConvexOracle(g, g_sub, n)
    h = ConvexOracle(lambda x: _sq(np.asarray(x, dtype=float)), lambda x: 2 * np.asarray(x, dtype=float), n)
    return DcProblem(gh, h, Box(np.zeros(n), 10 * np.ones(n)), f"ex6:n={n},m={m}", None, {"m": m})


# ---------------------------------------------------------------- examples 7, 8


def _ex7_g(x) -> float:
    x = np.asarray(x, dtype=float)
    return (
        abs(x[0] - 1)
        + 200 * _hinge_abs(x, 0, 1)
        + 180 * _hinge_abs(x, 2, 3)
        + abs(x[2] - 1)
        + 10.1 * (abs(x[1] - 1) + abs(x[3] - 1))
        + 4.95 * abs(x[1] + x[3] - 2)
    )


def _ex7_g_sub(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = _unit(4, 0, _sign(x[0] - 1))
    out += 200 * _hinge_abs_sub(x, 0, 1)
    out += 180 * _hinge_abs_sub(x, 2, 3)
    out += _unit(4, 2, _sign(x[2] - 1))
    out += 10.1 * (_unit(4, 1, _sign(x[1] - 1)) + _unit(4, 3, _sign(x[3] - 1)))
    s = _sign(x[1] + x[3] - 2)
    out += 4.95 * np.array([0.0, s, 0.0, s])
    return out


def _ex7_h(x) -> float:
    x = np.asarray(x, dtype=float)
    return 100 * (abs(x[0]) - x[1]) + 90 * (abs(x[2]) - x[3]) + 4.95 * abs(x[1] - x[3])


def _ex7_h_sub(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = _sign(x[1] - x[3])
    return np.array([100 * _sign(x[0]), -100 + 4.95 * s, 90 * _sign(x[2]), -90 - 4.95 * s])


def _build_ex7(n: int, params) -> DcProblem:
    return DcProblem(
        ConvexOracle(_ex7_g, _ex7_g_sub, 4, "polyhedral"),
        ConvexOracle(_ex7_h, _ex7_h_sub, 4, "polyhedral"),
        Box(-10 * np.ones(4), 10 * np.ones(4)), "ex7", KnownOptimum(np.ones(4), 0.0),
    )


def _build_ex8(n: int, params) -> DcProblem:
    def g(x):
        x = np.asarray(x, dtype=float)
        return abs(x[0] - 1) + 200 * sum(_hinge_abs(x, i - 1, i) for i in range(1, n))

    def g_sub(x):
        x = np.asarray(x, dtype=float)
        out = _unit(n, 0, _sign(x[0] - 1))
        for i in range(1, n):
            out += 200 * _hinge_abs_sub(x, i - 1, i)
        return out

    def h(x):
        x = np.asarray(x, dtype=float)
        return 100 * sum(abs(x[i - 1]) - x[i] for i in range(1, n))

    def h_sub(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(n)
        for i in range(1, n):
            out[i - 1] += 100 * _sign(x[i - 1])
            out[i] -= 100
        return out

    return DcProblem(
        ConvexOracle(g, g_sub, n, "polyhedral"),
        ConvexOracle(h, h_sub, n, "polyhedral"),
        Box(-10 * np.ones(n), 10 * np.ones(n)), f"ex8:n={n}", KnownOptimum(np.ones(n), 0.0),
    )


# ---------------------------------------------------------------- registry

_BUILDERS = {
    "ex1": (_build_ex1, (1,), 1),
    "ex2": (_build_ex2, (2,), 2),
    "ex3": (_build_ex3, (2,), 2),
    "ex4": (_build_ex4, (2,), 2),
    "ex5": (_build_ex5, (2,), 2),
    "ex6": (_build_ex6, (2, 3), 2),
    "ex7": (_build_ex7, (4,), 4),
    "ex8": (_build_ex8, (2, 3, 4, 5), 2),
}

EXAMPLE_IDS = tuple(_BUILDERS)

VALID_COMBINATIONS = (
    "ex1 (n=1); ex2, ex3, ex4, ex5 (n=2); ex6 (n in {2,3}, m in {2,3}); "
    "ex7 (n=4); ex8 (n in {2,3,4,5})"
)


def registry_build(example_id: str, n: int | None = None, params: Mapping | None = None) -> DcProblem:
    """Build one of the benchmark problems ex1..ex8."""
    params = dict(params or {})
    if example_id not in _BUILDERS:
        raise ValueError(f"unknown example {example_id!r}; valid: {VALID_COMBINATIONS}")
    builder, dims, default_n = _BUILDERS[example_id]
    n = default_n if n is None else int(n)
    if n not in dims:
        raise ValueError(f"{example_id} does not support n={n}; valid: {VALID_COMBINATIONS}")
    allowed = {"m"} if example_id == "ex6" else set()
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"{example_id} takes no parameter(s) {sorted(unknown)}; valid: {VALID_COMBINATIONS}")
    if "m" in params and int(params["m"]) not in (2, 3):
        raise ValueError(f"ex6 needs m in {{2,3}}, got {params['m']}; valid: {VALID_COMBINATIONS}")
    return builder(n, params)


def parse_problem_spec(spec: str) -> DcProblem:
    """Parse ``"ex6:n=3,m=2"``-style identifiers and build the problem."""
    name, _, rest = spec.strip().partition(":")
    kv: dict[str, str] = {}
    if rest:
        for item in rest.split(","):
            key, sep, val = item.partition("=")
            if not sep or not key.strip() or not val.strip():
                raise ValueError(f"malformed problem parameters {rest!r}; expected key=value pairs")
            kv[key.strip()] = val.strip()
    try:
        n = int(kv.pop("n")) if "n" in kv else None
        params = {k: int(v) for k, v in kv.items()}
    except ValueError:
        raise ValueError(f"problem parameters must be integers, got {rest!r}") from None
    return registry_build(name.strip(), n, params)


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class SubgradientReport:
    max_violation: float
    is_smooth_point: bool
    fd_error: float
    inequality_violation: float


def validate_subgradient(oracle: ConvexOracle, x, step: float = 1e-6, box: Box | None = None,
                         samples: int = 100, rng: np.random.Generator | None = None) -> SubgradientReport:
    """Check an oracle's subgradient at ``x`` numerically.

    Finite differences are compared only at smooth points: forward and
    backward differences agree to within ``10 * step``, or their gap shrinks
    in proportion when the step is cut tenfold (curvature, not a kink). The subgradient inequality is
    checked on ``samples`` uniform points from ``box`` (default: the unit
    cube around ``x``).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rng = np.random.default_rng(0) if rng is None else rng
    fx, c = oracle.value_and_subgradient(x)
    n = x.size

    smooth = True
    fd = np.empty(n)
    for i in range(n):
        e = _unit(n, i, step)
        fp, fm = float(oracle.eval(x + e)), float(oracle.eval(x - e))
        jump = abs(fp - 2 * fx + fm) / step
        if jump > 10 * step:
            # curvature also separates the one-sided slopes, but that part
            # shrinks with the step while a kink's jump does not
            e10 = e / 10
            fine = abs(float(oracle.eval(x + e10)) - 2 * fx + float(oracle.eval(x - e10))) / (step / 10)
            if fine > 0.5 * jump:
                smooth = False
        fd[i] = (fp - fm) / (2 * step)
    fd_error = float(np.max(np.abs(fd - c))) if smooth else 0.0

    if box is None:
        box = Box(x - 1.0, x + 1.0)
    ys = box.sample(rng, samples)
    worst = 0.0
    for y in ys:
        worst = max(worst, fx + float(c @ (y - x)) - float(oracle.eval(y)))
    return SubgradientReport(max(fd_error, worst), smooth, fd_error, worst)
