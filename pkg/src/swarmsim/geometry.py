"""Voronoi-neighborhood geometry: Delaunay edges, neighborhoods, summaries.

Two agents are neighbors exactly when their Voronoi cells share an edge,
i.e. when they are connected in the Delaunay triangulation of all agent
positions.  The triangulation is built with an incremental Bowyer-Watson
algorithm; the convex-hull boundary is handled with ghost triangles
(a symbolic vertex at infinity), which avoids the precision pitfalls of a
large finite super-triangle.

Cocircular ties are resolved deterministically by a symbolic perturbation
in index order: point i is lifted onto the paraboloid z = x^2 + y^2 and
pushed down by an infinitesimal eps^(i+1), so lower-indexed points win
ties.  For four cocircular points this amounts to a lexicographic choice
of diagonal.  The same rule is applied by the brute-force oracle in
:mod:`swarmsim.oracles`, which shares the predicate below so that the
tie-break is definitional rather than implementation-dependent.

All functions are pure; they never mutate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DuplicatePoints, EmptyNeighborhood, IndexOutOfRange, TooFewPoints

#: Two points closer than this are considered coincident (meters).
MIN_SEPARATION = 1e-9

#: If every point lies within this distance of one line, the triangulation
#: degenerates and neighborhoods fall back to a path graph (meters).
COLLINEAR_TOL = 1e-9

_GHOST = -1


@dataclass(frozen=True)
class Point2:
    """A position in the plane, in meters. Components must be finite."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Point2 components must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class NeighborGraph:
    """Delaunay edge set over ``n_agents`` positions.

    ``edges`` holds unordered index pairs stored as sorted tuples. The
    graph is symmetric by construction and, for valid inputs, connected
    with no self-edges.
    """

    n_agents: int
    edges: frozenset[tuple[int, int]]

    def neighbors(self, i: int) -> set[int]:
        if not (0 <= i < self.n_agents):
            raise IndexOutOfRange(f"agent index {i} out of range [0, {self.n_agents})")
        out = set()
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def degrees(self) -> list[int]:
        counts = [0] * self.n_agents
        for a, b in self.edges:
            counts[a] += 1
            counts[b] += 1
        return counts


@dataclass(frozen=True)
class NeighborhoodSummary:
    """Per-agent neighborhood center and relative state.

    ``center`` is the arithmetic mean of the neighbor positions,
    ``rel_pos`` is own position minus center, and ``rel_vel`` is own
    velocity minus the mean neighbor velocity (topology frozen within
    the step).
    """

    center: np.ndarray
    rel_pos: np.ndarray
    rel_vel: np.ndarray
    degree: int


def _as_coords(positions) -> np.ndarray:
    seq = list(positions)
    if seq and isinstance(seq[0], Point2):
        arr = np.array([(p.x, p.y) for p in seq], dtype=np.float64)
    else:
        arr = np.asarray(seq, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (n, 2) positions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("positions must be finite")
    return arr


def _orient(ax, ay, bx, by, cx, cy) -> float:
    """Twice the signed area of triangle (a, b, c); positive if CCW."""
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _circumcircle(ax, ay, bx, by, cx, cy):
    """Circumcenter and squared radius of a non-degenerate triangle."""
    d = 2.0 * _orient(ax, ay, bx, by, cx, cy)
    b2 = (bx - ax) ** 2 + (by - ay) ** 2
    c2 = (cx - ax) ** 2 + (cy - ay) ** 2
    ux = ax + ((cy - ay) * b2 - (by - ay) * c2) / d
    uy = ay + ((bx - ax) * c2 - (cx - ax) * b2) / d
    r2 = (ux - ax) ** 2 + (uy - ay) ** 2
    return ux, uy, r2


class CircumcirclePredicate:
    """Point-in-circumcircle test with the index-ordered symbolic tie-break.

    Instances are bound to one point set so that the tolerances (which
    scale with the set's extent) are computed once. Shared by the
    Bowyer-Watson triangulation and by the brute-force oracle.
    """

    def __init__(self, coords: np.ndarray):
        self.pts = [(float(x), float(y)) for x, y in coords]
        if len(self.pts) >= 2:
            xs = coords[:, 0]
            ys = coords[:, 1]
            extent = max(float(xs.max() - xs.min()), float(ys.max() - ys.min()), 1.0)
        else:
            extent = 1.0
        self.scale2 = extent * extent
        self.orient_tol = 1e-12 * self.scale2
        self.tie_tol = 1e-9 * self.scale2

    def orient(self, ia: int, ib: int, ic: int) -> float:
        (ax, ay), (bx, by), (cx, cy) = self.pts[ia], self.pts[ib], self.pts[ic]
        return _orient(ax, ay, bx, by, cx, cy)

    def in_circumcircle(self, ia: int, ib: int, ic: int, iq: int) -> bool:
        """True if point iq lies strictly inside the circumcircle of
        (ia, ib, ic) after the symbolic perturbation."""
        if self.orient(ia, ib, ic) < 0.0:
            ib, ic = ic, ib
        (ax, ay), (bx, by), (cx, cy) = self.pts[ia], self.pts[ib], self.pts[ic]
        ux, uy, r2 = _circumcircle(ax, ay, bx, by, cx, cy)
        qx, qy = self.pts[iq]
        d2 = (qx - ux) ** 2 + (qy - uy) ** 2
        tol = self.tie_tol * max(1.0, r2 / self.scale2)
        if d2 < r2 - tol:
            return True
        if d2 > r2 + tol:
            return False
        return self._tie_break(ia, ib, ic, iq)

    def _tie_break(self, ia: int, ib: int, ic: int, iq: int) -> bool:
        """Sign of the perturbed in-circle determinant for a cocircular
        configuration: the lowest-indexed point's lift term dominates."""
        terms = (
            (ia, -self.orient(ib, ic, iq)),
            (ib, +self.orient(ia, ic, iq)),
            (ic, -self.orient(ia, ib, iq)),
            (iq, +self.orient(ia, ib, ic)),
        )
        for _, coef in sorted(terms):
            if abs(coef) > self.orient_tol:
                return coef > 0.0
        return False


def _collinear_line(coords: np.ndarray):
    """If all points lie within COLLINEAR_TOL of one line, return the
    (origin, direction) of that line; otherwise None."""
    n = len(coords)
    if n < 3:
        return coords[0], (coords[-1] - coords[0])
    # Line through the two farthest points bounds the best-fit deviation
    # within a factor of two, which is plenty at this tolerance.
    diffs = coords[:, None, :] - coords[None, :, :]
    d2 = (diffs**2).sum(axis=2)
    i, j = np.unravel_index(int(d2.argmax()), d2.shape)
    origin = coords[i]
    direction = coords[j] - coords[i]
    length = float(np.hypot(*direction))
    if length == 0.0:
        return None
    direction = direction / length
    rel = coords - origin
    offsets = np.abs(rel[:, 0] * direction[1] - rel[:, 1] * direction[0])
    if float(offsets.max()) <= COLLINEAR_TOL:
        return origin, direction
    return None


def _path_graph_edges(coords: np.ndarray, origin, direction) -> set[tuple[int, int]]:
    proj = (coords - origin) @ direction
    order = np.argsort(proj, kind="stable")
    return {tuple(sorted((int(order[k]), int(order[k + 1])))) for k in range(len(order) - 1)}


class _Triangulation:
    """Incremental Bowyer-Watson state: real triangles cached with their
    circumcircles, ghost triangles (u, v, GHOST) fanning the hull."""

    def __init__(self, pred: CircumcirclePredicate):
        self.pred = pred
        self.tris: dict[int, tuple[int, int, int]] = {}
        self.circles: dict[int, tuple[float, float, float]] = {}
        self._next_id = 0

    def _add(self, ia: int, ib: int, ic: int) -> None:
        tid = self._next_id
        self._next_id += 1
        if ic == _GHOST:
            self.tris[tid] = (ia, ib, _GHOST)
            return
        if self.pred.orient(ia, ib, ic) < 0.0:
            ib, ic = ic, ib
        self.tris[tid] = (ia, ib, ic)
        (ax, ay), (bx, by), (cx, cy) = (
            self.pred.pts[ia],
            self.pred.pts[ib],
            self.pred.pts[ic],
        )
        self.circles[tid] = _circumcircle(ax, ay, bx, by, cx, cy)

    def _is_bad(self, tid: int, iq: int) -> bool:
        ia, ib, ic = self.tris[tid]
        if ic == _GHOST:
            # Ghost circumdisk = open half-plane left of hull edge (ia, ib),
            # plus the open edge segment itself.
            o = self.pred.orient(ia, ib, iq)
            tol = self.pred.orient_tol
            if o > tol:
                return True
            if o < -tol:
                return False
            (ax, ay), (bx, by) = self.pred.pts[ia], self.pred.pts[ib]
            (qx, qy) = self.pred.pts[iq]
            t = (qx - ax) * (bx - ax) + (qy - ay) * (by - ay)
            ab2 = (bx - ax) ** 2 + (by - ay) ** 2
            return 0.0 < t < ab2
        ux, uy, r2 = self.circles[tid]
        qx, qy = self.pred.pts[iq]
        d2 = (qx - ux) ** 2 + (qy - uy) ** 2
        tol = self.pred.tie_tol * max(1.0, r2 / self.pred.scale2)
        if d2 < r2 - tol:
            return True
        if d2 > r2 + tol:
            return False
        return self.pred.in_circumcircle(ia, ib, ic, iq)

    def insert(self, iq: int) -> None:
        bad = [tid for tid in self.tris if self._is_bad(tid, iq)]
        bad_edges = set()
        for tid in bad:
            ia, ib, ic = self.tris[tid]
            bad_edges.update(((ia, ib), (ib, ic), (ic, ia)))
        boundary = [(x, y) for (x, y) in bad_edges if (y, x) not in bad_edges]
        for tid in bad:
            self.tris.pop(tid)
            self.circles.pop(tid, None)
        for x, y in boundary:
            # New triangle fills the cavity side of (x, y); rotate ghosts
            # into (u, v, GHOST) storage form.
            if x == _GHOST:
                self._add(y, iq, _GHOST)
            elif y == _GHOST:
                self._add(iq, x, _GHOST)
            else:
                self._add(x, y, iq)

    def real_edges(self) -> set[tuple[int, int]]:
        out = set()
        for ia, ib, ic in self.tris.values():
            if ic == _GHOST:
                continue
            out.add((ia, ib) if ia < ib else (ib, ia))
            out.add((ib, ic) if ib < ic else (ic, ib))
            out.add((ia, ic) if ia < ic else (ic, ia))
        return out


def _bowyer_watson_edges(coords: np.ndarray) -> set[tuple[int, int]]:
    pred = CircumcirclePredicate(coords)
    n = len(coords)
    k = next(
        (m for m in range(2, n) if abs(pred.orient(0, 1, m)) > pred.orient_tol),
        None,
    )
    if k is None:  # should be unreachable: caller already handled collinear sets
        line = _collinear_line(coords)
        return _path_graph_edges(coords, *line)
    tri = _Triangulation(pred)
    a, b, c = (0, 1, k) if pred.orient(0, 1, k) > 0.0 else (0, k, 1)
    tri._add(a, b, c)
    tri._add(b, a, _GHOST)
    tri._add(c, b, _GHOST)
    tri._add(a, c, _GHOST)
    for iq in range(2, n):
        if iq == k:
            continue
        tri.insert(iq)
    return tri.real_edges()


def delaunay_edges(positions) -> NeighborGraph:
    """Delaunay edge set of the given positions.

    Raises TooFewPoints for n < 2 and DuplicatePoints if any two points
    coincide within MIN_SEPARATION. For n = 2 the single pair is an edge;
    for fully collinear sets the Voronoi cells are parallel slabs and the
    result is the path graph along the common line.
    """
    coords = _as_coords(positions)
    n = len(coords)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points, got {n}")
    diffs = coords[:, None, :] - coords[None, :, :]
    d2 = (diffs**2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    if float(d2.min()) < MIN_SEPARATION**2:
        i, j = np.unravel_index(int(d2.argmin()), d2.shape)
        raise DuplicatePoints(f"points {min(i, j)} and {max(i, j)} coincide within {MIN_SEPARATION} m")
    if n == 2:
        return NeighborGraph(2, frozenset({(0, 1)}))
    line = _collinear_line(coords)
    if line is not None:
        return NeighborGraph(n, frozenset(_path_graph_edges(coords, *line)))
    return NeighborGraph(n, frozenset(_bowyer_watson_edges(coords)))


def neighborhood(i: int, g: NeighborGraph) -> set[int]:
    """Indices Delaunay-adjacent to agent i. Nonempty for any valid graph."""
    return g.neighbors(i)


def summarize(i: int, positions, velocities, g: NeighborGraph) -> NeighborhoodSummary:
    """Neighborhood center, relative position and velocity of agent i.

    The center is the mean of the neighbor positions; the relative
    velocity freezes the topology within the step, i.e. it subtracts the
    mean of the current neighbors' velocities.
    """
    coords = _as_coords(positions)
    vels = _as_coords(velocities)
    if coords.shape != vels.shape:
        raise ValueError("positions and velocities must have matching shapes")
    nbrs = sorted(g.neighbors(i))
    if not nbrs:
        raise EmptyNeighborhood(f"agent {i} has no neighbors")
    center = coords[nbrs].mean(axis=0)
    mean_vel = vels[nbrs].mean(axis=0)
    return NeighborhoodSummary(
        center=center,
        rel_pos=coords[i] - center,
        rel_vel=vels[i] - mean_vel,
        degree=len(nbrs),
    )
