"""Epigraph polyhedra of pointwise maxima of affine functions over a box.

The polyhedron ``epi(max_j s_j) ∩ (box × R)`` lives in R^(n+1) and has the
single recession direction ``e_(n+1)``, so it is stored by its vertices only.
Cuts of the form ``t >= s(x)`` are added incrementally: vertices strictly
below the new plane are dropped and new vertices are created on the edges
(and on the vertical rays above box corners) that cross it.

Constraint identifiers used in vertex active sets:

* ``j >= 0``      -- the j-th minorant, ``t - gradient_j . x >= offset_j``
* ``-(2i + 1)``   -- lower box facet ``x_i >= lower_i``
* ``-(2i + 2)``   -- upper box facet ``x_i <= upper_i``
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Box",
    "AffineMinorant",
    "LiftedVertex",
    "EpigraphPoly",
    "CutUpdate",
    "init_epigraph",
    "intersect_halfspace",
    "enumerate_vertices_bruteforce",
    "max_over_box_vertices",
    "REL_TOL",
    "MERGE_TOL",
]

REL_TOL = 1e-9
MERGE_TOL = 1e-8
MAX_CORNER_DIM = 20


def _tol(t: float) -> float:
    return REL_TOL * (1.0 + abs(t))


def lower_facet(i: int) -> int:
    return -(2 * i + 1)


def upper_facet(i: int) -> int:
    return -(2 * i + 2)


def _facet_coord(cid: int) -> tuple[int, bool]:
    """Return ``(coordinate, is_upper)`` for a box-facet identifier."""
    k = -cid - 1
    return k // 2, bool(k % 2)


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError(f"box bounds must be vectors of equal length, got {lo.shape} and {hi.shape}")
        if lo.size < 1:
            raise ValueError("box dimension must be at least 1")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("box bounds must be finite")
        if np.any(lo >= hi):
            raise ValueError(f"box needs lower < upper in every coordinate, got {lo} and {hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return (self.lower + self.upper) / 2.0

    def corners(self) -> np.ndarray:
        """All 2^n corners, lexicographically ordered."""
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.n))

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class AffineMinorant:
    """The affine function ``offset + gradient . x``, generated at ``anchor``."""

    gradient: np.ndarray
    offset: float
    anchor: np.ndarray

    def __post_init__(self):
        grad = np.atleast_1d(np.asarray(self.gradient, dtype=float)).copy()
        anchor = np.atleast_1d(np.asarray(self.anchor, dtype=float)).copy()
        if grad.ndim != 1 or grad.shape != anchor.shape:
            raise ValueError("gradient and anchor must be vectors of equal length")
        offset = float(self.offset)
        if not (np.all(np.isfinite(grad)) and np.isfinite(offset)):
            raise ValueError("minorant coefficients must be finite")
        grad.flags.writeable = False
        anchor.flags.writeable = False
        object.__setattr__(self, "gradient", grad)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def from_subgradient(cls, value: float, subgradient, anchor) -> "AffineMinorant":
        """Build ``s(x) = value + subgradient . (x - anchor)``."""
        c = np.atleast_1d(np.asarray(subgradient, dtype=float))
        a = np.atleast_1d(np.asarray(anchor, dtype=float))
        return cls(gradient=c, offset=float(value) - float(c @ a), anchor=a)

    @property
    def n(self) -> int:
        return self.gradient.size

    def evaluate(self, x):
        """Value at a point, or at each row of a 2-d array."""
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            return self.offset + float(self.gradient @ np.atleast_1d(x))
        return self.offset + x @ self.gradient

    def normal(self) -> np.ndarray:
        """Normal of the induced halfspace ``t - gradient . x >= offset``."""
        return np.append(-self.gradient, 1.0)

    def to_dict(self) -> dict:
        return {
            "gradient": self.gradient.tolist(),
            "offset": self.offset,
            "anchor": self.anchor.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineMinorant":
        return cls(gradient=d["gradient"], offset=d["offset"], anchor=d["anchor"])


@dataclass(frozen=True)
class LiftedVertex:
    point: np.ndarray
    height: float
    active_set: frozenset = field(default_factory=frozenset)

    def sort_key(self) -> tuple:
        return (*self.point.tolist(), self.height)


class CutUpdate(NamedTuple):
    """Vertex identifiers removed and created by one cut."""

    removed: tuple
    added: tuple


def _box_normal(cid: int, n: int) -> np.ndarray:
    i, upper = _facet_coord(cid)
    a = np.zeros(n + 1)
    a[i] = -1.0 if upper else 1.0
    return a


class EpigraphPoly:
    """Vertex representation of ``epi(max of minorants) ∩ (box × R)``.

    Vertices carry stable integer ids (never reused) so that callers can
    cache per-vertex quantities such as gaps across cuts.
    """

    def __init__(self, box: Box, first_cut: AffineMinorant):
        if first_cut.n != box.n:
            raise ValueError(f"cut has dimension {first_cut.n}, box has dimension {box.n}")
        self.box = box
        n = box.n
        self._n = n
        self.minorants: list[AffineMinorant] = []
        self._grads = np.empty((16, n))
        self._offs = np.empty(16)

        cap = max(16, 2 ** n)
        self._pts = np.empty((cap, n))
        self._hts = np.empty(cap)
        self._alive = np.zeros(cap, dtype=bool)
        self._active: list = [None] * cap
        self._slot_vid = np.full(cap, -1, dtype=np.int64)
        self._slot_of: dict[int, int] = {}
        self._free: list[int] = list(range(cap - 1, -1, -1))
        self._next_vid = 0
        self._index: dict[int, set] = {}
        self._line_cache: dict[frozenset, bool] = {}

        cid = self._push_minorant(first_cut)
        for corner in box.corners():
            active = set(self._box_facets_at(corner)) | {cid}
            self._new_vertex(corner, first_cut.evaluate(corner), frozenset(active))

    # ------------------------------------------------------------------ storage

    @property
    def n(self) -> int:
        return self._n

    def __len__(self) -> int:
        return len(self._slot_of)

    def _push_minorant(self, cut: AffineMinorant) -> int:
        m = len(self.minorants)
        if m == self._offs.size:
            self._grads = np.concatenate([self._grads, np.empty_like(self._grads)])
            self._offs = np.concatenate([self._offs, np.empty_like(self._offs)])
        self._grads[m] = cut.gradient
        self._offs[m] = cut.offset
        self.minorants.append(cut)
        return m

    def _grow(self):
        old = self._hts.size
        self._pts = np.concatenate([self._pts, np.empty_like(self._pts)])
        self._hts = np.concatenate([self._hts, np.empty_like(self._hts)])
        self._alive = np.concatenate([self._alive, np.zeros(old, dtype=bool)])
        self._slot_vid = np.concatenate([self._slot_vid, np.full(old, -1, dtype=np.int64)])
        self._active.extend([None] * old)
        self._free.extend(range(2 * old - 1, old - 1, -1))

    def _new_vertex(self, x, t: float, active: frozenset) -> int:
        if not self._free:
            self._grow()
        slot = self._free.pop()
        vid = self._next_vid
        self._next_vid += 1
        self._pts[slot] = x
        self._hts[slot] = t
        self._alive[slot] = True
        self._slot_vid[slot] = vid
        self._active[slot] = active
        self._slot_of[vid] = slot
        for c in active:
            self._index.setdefault(c, set()).add(vid)
        return vid

    def _drop_vertex(self, vid: int):
        slot = self._slot_of.pop(vid)
        for c in self._active[slot]:
            self._index[c].discard(vid)
        self._alive[slot] = False
        self._slot_vid[slot] = -1
        self._active[slot] = None
        self._free.append(slot)

    def _extend_active(self, vid: int, extra: Iterable[int]):
        slot = self._slot_of[vid]
        extra = set(extra) - self._active[slot]
        if extra:
            self._active[slot] = self._active[slot] | extra
            for c in extra:
                self._index.setdefault(c, set()).add(vid)

    def _box_facets_at(self, x) -> list[int]:
        out = []
        for i in range(self._n):
            if abs(x[i] - self.box.lower[i]) <= _tol(self.box.lower[i]):
                out.append(lower_facet(i))
            elif abs(x[i] - self.box.upper[i]) <= _tol(self.box.upper[i]):
                out.append(upper_facet(i))
        return out

    def _polish(self, x: np.ndarray, t: float, active) -> tuple[np.ndarray, float]:
        """Re-solve the active constraints to undo interpolation drift.

        Falls back to ``(x, t)`` when the system is rank deficient or the
        solution strays from the interpolated point.
        """
        fixed = {}
        mins = []
        for c in active:
            if c < 0:
                i, upper = _facet_coord(c)
                fixed[i] = self.box.upper[i] if upper else self.box.lower[i]
            else:
                mins.append(c)
        free = [i for i in range(self._n) if i not in fixed]
        if len(mins) < len(free) + 1:
            return x, t
        mins.sort()
        G = self._grads[mins]
        xf = x.copy()
        for i, v in fixed.items():
            xf[i] = v
        A = np.hstack([G[:, free], -np.ones((len(mins), 1))])
        rhs = -self._offs[mins] - G[:, sorted(fixed)] @ xf[sorted(fixed)]
        try:
            if A.shape[0] == A.shape[1]:
                sol = np.linalg.solve(A, rhs)
            else:
                sol, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
                if rank < len(free) + 1:
                    return x, t
        except np.linalg.LinAlgError:
            return x, t
        xf[free] = sol[:-1]
        tf = float(sol[-1])
        if np.hypot(np.linalg.norm(xf - x), tf - t) > MERGE_TOL:
            return x, t
        return xf, tf

    def _normal(self, cid: int) -> np.ndarray:
        if cid >= 0:
            return np.append(-self._grads[cid], 1.0)
        return _box_normal(cid, self._n)

    # ------------------------------------------------------------------ queries

    def vertex_ids(self) -> list[int]:
        return sorted(self._slot_of)

    def has_vertex(self, vid: int) -> bool:
        return vid in self._slot_of

    def point(self, vid: int) -> np.ndarray:
        return self._pts[self._slot_of[vid]].copy()

    def height(self, vid: int) -> float:
        return float(self._hts[self._slot_of[vid]])

    def active_set(self, vid: int) -> frozenset:
        return self._active[self._slot_of[vid]]

    def vertex(self, vid: int) -> LiftedVertex:
        slot = self._slot_of[vid]
        return LiftedVertex(self._pts[slot].copy(), float(self._hts[slot]), self._active[slot])

    @property
    def vertices(self) -> list[LiftedVertex]:
        """Current vertices, sorted lexicographically by (point, height)."""
        out = [self.vertex(v) for v in self._slot_of]
        out.sort(key=LiftedVertex.sort_key)
        return out

    def vertex_array(self) -> tuple[np.ndarray, np.ndarray]:
        """Points and heights of all vertices, in lexicographic order."""
        vs = self.vertices
        pts = np.array([v.point for v in vs]).reshape(len(vs), self._n)
        return pts, np.array([v.height for v in vs])

    def evaluate(self, x):
        """The underestimator ``max_j s_j(x)`` at a point or at each row."""
        m = len(self.minorants)
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            return float(np.max(self._offs[:m] + self._grads[:m] @ np.atleast_1d(x)))
        return np.max(x @ self._grads[:m].T + self._offs[:m], axis=1)

    def neighbors(self, vid: int) -> list[int]:
        """Vertices joined to ``vid`` by a bounded edge."""
        slot = self._slot_of[vid]
        act = self._active[slot]
        cands: set[int] = set()
        for c in act:
            if c >= 0:
                cands.update(self._index.get(c, ()))
        cands.discard(vid)
        out = []
        for u in sorted(cands):
            other = self._active[self._slot_of[u]]
            common = act & other
            if len(common) < self._n:
                continue
            if len(common) == self._n and len(act) == self._n + 1 and len(other) == self._n + 1:
                out.append(u)
            elif self._spans_line_cached(common):
                out.append(u)
        return out

    def _spans_line_cached(self, common: frozenset) -> bool:
        # minorants never change once added, so the answer is stable
        hit = self._line_cache.get(common)
        if hit is None:
            hit = self._line_cache[common] = self._spans_line(common)
        return hit

    def _spans_line(self, common: frozenset) -> bool:
        """Whether the constraint normals in ``common`` have rank n.

        Box-facet normals are distinct unit vectors and every minorant normal
        has last coordinate 1, so the rank is the number of facets plus one
        plus the affine rank of the minorant gradients restricted to the
        free coordinates.
        """
        fixed = set()
        mins = []
        for c in common:
            if c < 0:
                fixed.add(_facet_coord(c)[0])
            else:
                mins.append(c)
        need = self._n - len(fixed)
        if need <= 0:
            return True
        if not mins or len(mins) < need:
            return False
        if need == 1:
            return True
        free = [i for i in range(self._n) if i not in fixed]
        G = self._grads[sorted(mins)][:, free]
        D = G[1:] - G[0]
        scale = 1.0 + float(np.abs(G).max())
        if need == 2:
            return bool(np.abs(D).max() > 1e-12 * scale)
        return int(np.linalg.matrix_rank(D, tol=1e-12 * scale * max(D.shape))) >= need - 1

    def copy(self) -> "EpigraphPoly":
        new = object.__new__(EpigraphPoly)
        new.box = self.box
        new._n = self._n
        new.minorants = list(self.minorants)
        new._grads = self._grads.copy()
        new._offs = self._offs.copy()
        new._pts = self._pts.copy()
        new._hts = self._hts.copy()
        new._alive = self._alive.copy()
        new._active = list(self._active)
        new._slot_vid = self._slot_vid.copy()
        new._slot_of = dict(self._slot_of)
        new._free = list(self._free)
        new._next_vid = self._next_vid
        new._index = {c: set(s) for c, s in self._index.items()}
        new._line_cache = dict(self._line_cache)
        return new

    # ------------------------------------------------------------------ update

    def _violation(self, vid: int, cut: AffineMinorant) -> float:
        slot = self._slot_of[vid]
        return cut.offset + float(self._pts[slot] @ cut.gradient) - float(self._hts[slot])

    def polish(self, vids: Iterable[int]):
        """Re-solve the active constraints of the given live vertices."""
        for v in vids:
            slot = self._slot_of[v]
            x, t = self._polish(self._pts[slot].copy(), float(self._hts[slot]), self._active[slot])
            self._pts[slot] = x
            self._hts[slot] = t

    def add_cut(self, cut: AffineMinorant, seed: int | None = None, polish: bool = True) -> CutUpdate:
        """Intersect in place with ``{(x, t): t >= cut(x)}``.

        ``seed`` is an optional vertex id believed to lie strictly below the
        new plane; when it does, the region to remove is found by walking
        edges from it instead of scanning every vertex.  With ``polish``
        off, new vertices keep their interpolated coordinates until
        :meth:`polish` is called on them.
        """
        if cut.n != self._n:
            raise ValueError(f"cut has dimension {cut.n}, polyhedron has dimension {self._n}")
        cid = self._push_minorant(cut)

        viol: dict[int, float] = {}

        def status(v: int) -> int:
            if v not in viol:
                viol[v] = self._violation(v, cut)
            s = viol[v]
            tol = _tol(self._hts[self._slot_of[v]])
            return 1 if s > tol else (0 if s >= -tol else -1)

        if seed is not None and seed in self._slot_of and status(seed) == 1:
            doomed = {seed}
            stack = [seed]
            while stack:
                w = stack.pop()
                for u in self.neighbors(w):
                    if u not in doomed and status(u) == 1:
                        doomed.add(u)
                        stack.append(u)
        else:
            slots = np.flatnonzero(self._alive)
            s = cut.offset + self._pts[slots] @ cut.gradient - self._hts[slots]
            tols = REL_TOL * (1.0 + np.abs(self._hts[slots]))
            vids = self._slot_vid[slots]
            cut_mask = s > tols
            viol.update(zip(vids[cut_mask].tolist(), s[cut_mask].tolist()))
            doomed = set(vids[cut_mask].tolist())
            if not doomed:
                for v in sorted(vids[np.abs(s) <= tols].tolist()):
                    self._extend_active(v, (cid,))
                return CutUpdate((), ())

        # edges leaving the doomed region, and rays above doomed box corners
        crossings: list[tuple[int, int]] = []
        on_plane: set[int] = set()
        corners: list[int] = []
        for w in sorted(doomed):
            act = self.active_set(w)
            if sum(1 for c in act if c < 0) == self._n:
                corners.append(w)
            for u in self.neighbors(w):
                if u in doomed:
                    continue
                st = status(u)
                if st == 0:
                    on_plane.add(u)
                else:
                    crossings.append((w, u))

        for u in sorted(on_plane):
            self._extend_active(u, (cid,))

        fresh: list[tuple[np.ndarray, float, set]] = []
        merged_into_old: dict[int, set] = {}

        def place(x, t, active, near: int | None):
            if near is not None:
                slot = self._slot_of[near]
                d = np.hypot(np.linalg.norm(self._pts[slot] - x), self._hts[slot] - t)
                if d <= MERGE_TOL:
                    merged_into_old.setdefault(near, set()).update(active)
                    return
            for item in fresh:
                if np.hypot(np.linalg.norm(item[0] - x), item[1] - t) <= MERGE_TOL:
                    item[2].update(active)
                    return
            fresh.append((x, t, set(active)))

        for w, u in crossings:
            sw, su = viol[w], viol[u]
            lam = sw / (sw - su)
            pw, pu = self._pts[self._slot_of[w]], self._pts[self._slot_of[u]]
            hw, hu = self._hts[self._slot_of[w]], self._hts[self._slot_of[u]]
            x = pw + lam * (pu - pw)
            t = float(hw + lam * (hu - hw))
            common = self.active_set(w) & self.active_set(u)
            for c in common:
                if c < 0:
                    i, upper = _facet_coord(c)
                    x[i] = self.box.upper[i] if upper else self.box.lower[i]
            place(x, t, common | {cid}, u)

        for w in corners:
            x = self.point(w)
            facets = {c for c in self.active_set(w) if c < 0}
            place(x, cut.evaluate(x), facets | {cid}, None)

        removed = tuple(sorted(doomed))
        for w in removed:
            self._drop_vertex(w)
        for u, act in merged_into_old.items():
            self._extend_active(u, act)
        added = []
        for x, t, act in fresh:
            act.update(self._box_facets_at(x))
            if polish:
                x, t = self._polish(x, t, act)
            added.append(self._new_vertex(x, t, frozenset(act)))
        if not self._slot_of:
            raise RuntimeError("cut emptied the epigraph polyhedron; upward cuts cannot do this")
        return CutUpdate(removed, tuple(added))

    # ------------------------------------------------------------------ export

    def to_dict(self) -> dict:
        return {
            "n": self._n,
            "box": self.box.to_dict(),
            "minorants": [m.to_dict() for m in self.minorants],
            "vertices": [{"point": v.point.tolist(), "height": v.height} for v in self.vertices],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "EpigraphPoly":
        """Rebuild by replaying the stored minorants; stored vertices are ignored."""
        box = Box(d["box"]["lower"], d["box"]["upper"])
        cuts = [AffineMinorant.from_dict(m) for m in d["minorants"]]
        if not cuts:
            raise ValueError("epigraph document has no minorants")
        poly = cls(box, cuts[0])
        for c in cuts[1:]:
            poly.add_cut(c)
        return poly


def init_epigraph(box: Box, first_cut: AffineMinorant) -> EpigraphPoly:
    return EpigraphPoly(box, first_cut)


def intersect_halfspace(poly: EpigraphPoly, cut: AffineMinorant) -> EpigraphPoly:
    """Non-mutating intersection with the halfspace above ``cut``."""
    out = poly.copy()
    out.add_cut(cut)
    return out


def enumerate_vertices_bruteforce(box: Box, minorants: Sequence[AffineMinorant]) -> list[LiftedVertex]:
    """Vertices by solving every (n+1)-subset of constraints.

    Exponential; intended as a reference for small instances.
    """
    n = box.n
    rows, rhs, ids = [], [], []
    for j, m in enumerate(minorants):
        if m.n != n:
            raise ValueError("minorant dimension does not match box")
        rows.append(m.normal())
        rhs.append(m.offset)
        ids.append(j)
    for i in range(n):
        rows.append(_box_normal(lower_facet(i), n))
        rhs.append(box.lower[i])
        ids.append(lower_facet(i))
        rows.append(_box_normal(upper_facet(i), n))
        rhs.append(-box.upper[i])
        ids.append(upper_facet(i))
    A = np.array(rows)
    b = np.array(rhs)

    found: list[LiftedVertex] = []
    for subset in itertools.combinations(range(len(ids)), n + 1):
        sub = A[list(subset)]
        if np.linalg.matrix_rank(sub) < n + 1:
            continue
        z = np.linalg.solve(sub, b[list(subset)])
        slack = A @ z - b
        scale = 1.0 + np.abs(z[-1])
        if np.any(slack < -1e-9 * scale * (1.0 + np.abs(b))):
            continue
        tight = frozenset(ids[k] for k in np.flatnonzero(np.abs(slack) <= 1e-9 * scale * (1.0 + np.abs(b))))
        x, t = z[:n], float(z[-1])
        for c in tight:
            if c < 0:
                i, upper = _facet_coord(c)
                x[i] = box.upper[i] if upper else box.lower[i]
        for k, v in enumerate(found):
            if np.hypot(np.linalg.norm(v.point - x), v.height - t) <= MERGE_TOL:
                found[k] = LiftedVertex(v.point, v.height, v.active_set | tight)
                break
        else:
            found.append(LiftedVertex(x, t, tight))
    found.sort(key=LiftedVertex.sort_key)
    return found


def max_over_box_vertices(box: Box, f) -> float:
    """Max of ``f`` over the box corners; the sup over the box when f is convex.

    ``f`` is either a callable or an object with an ``eval`` method.
    """
    if box.n > MAX_CORNER_DIM:
        raise ValueError(f"refusing to enumerate 2^{box.n} corners (limit n <= {MAX_CORNER_DIM})")
    fn: Callable = f.eval if hasattr(f, "eval") else f
    return max(float(fn(c)) for c in box.corners())
