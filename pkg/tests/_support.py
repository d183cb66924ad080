import numpy as np

from dcpoly import AffineMinorant, Box, ConvexOracle, DcProblem


def quadratic_1d() -> ConvexOracle:
    return ConvexOracle(lambda x: float(np.asarray(x)[0] ** 2), lambda x: np.array([2.0 * np.asarray(x)[0]]), 1)


def sum_of_squares(n: int) -> ConvexOracle:
    return ConvexOracle(lambda x: float(np.dot(x, x)), lambda x: 2.0 * np.asarray(x, dtype=float), n)


def affine(c, b) -> ConvexOracle:
    c = np.asarray(c, dtype=float)
    return ConvexOracle(lambda x: float(c @ np.asarray(x, dtype=float) + b), lambda x: c.copy(), c.size)


def zero(n: int) -> ConvexOracle:
    return ConvexOracle(lambda x: 0.0, lambda x: np.zeros(n), n)


def abs_1d() -> ConvexOracle:
    return ConvexOracle(lambda x: abs(float(np.asarray(x)[0])),
                        lambda x: np.array([float(np.sign(np.asarray(x)[0]))]), 1)


def minorant(c, b) -> AffineMinorant:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return AffineMinorant(c, b, np.zeros(c.size))


def lifted(vertices) -> np.ndarray:
    return np.array([np.append(v.point, v.height) for v in vertices])


def same_vertex_set(a, b, tol=1e-7) -> bool:
    """Set equality of two vertex lists, pointwise within ``tol``."""
    if len(a) != len(b):
        return False
    A, B = lifted(a), lifted(b)
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    return bool(np.all(D.min(axis=1) <= tol) and np.all(D.min(axis=0) <= tol))


def random_instance(rng: np.random.Generator):
    n = int(rng.integers(1, 4))
    lo = rng.uniform(-3, 0, n)
    box = Box(lo, lo + rng.uniform(0.5, 4, n))
    cuts = [minorant(rng.normal(size=n), rng.normal()) for _ in range(int(rng.integers(1, 9)))]
    return box, cuts


def convex_problem(g: ConvexOracle, box: Box, name="convex") -> DcProblem:
    return DcProblem(g, zero(box.n), box, name)
