"""Brute-force reference oracles used by tests and the CLI selfcheck.

These deliberately take the slow, obviously-correct route so they stay
independent of the production algorithms they validate:

* ``delaunay_edges_bruteforce`` enumerates every point triple and keeps
  the triangles whose circumcircle is empty; the incremental cavity
  algorithm in :mod:`swarmsim.geometry` is never consulted.
* ``lemma_grid_feasible`` exhaustively scans the (u1, u2) box that the
  corner-incompatibility predicates reason about analytically.

The circumcircle membership predicate (including the cocircular
tie-break) is shared with :mod:`swarmsim.geometry` on purpose: the
tie-break is part of the edge-set definition, not an implementation
detail, and both sides must apply the identical rule.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .errors import DuplicatePoints, TooFewPoints
from .geometry import (
    MIN_SEPARATION,
    CircumcirclePredicate,
    _as_coords,
    _collinear_line,
    _path_graph_edges,
)


def lemma_grid_feasible(rows, rhs, alpha: float, resolution: int = 401) -> bool:
    """Exhaustive feasibility check on the corner-control box.

    Scans (u1/u_max, u2/u_max) over a resolution x resolution grid of
    [1/alpha, 1]^2 (endpoints included, so box corners are exact grid
    points) and reports whether any point satisfies every inequality
    rows[i] . x >= rhs[i].
    """
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, 2)
    rhs = np.asarray(rhs, dtype=np.float64).ravel()
    ticks = np.linspace(1.0 / alpha, 1.0, resolution)
    u1, u2 = np.meshgrid(ticks, ticks, indexing="ij")
    feasible = np.ones_like(u1, dtype=bool)
    for (g1, g2), r in zip(rows, rhs):
        feasible &= g1 * u1 + g2 * u2 >= r
    return bool(feasible.any())


def corner_margin(rows, rhs, alpha: float) -> float:
    """Exact maximin margin max_x min_i (rows[i] . x - rhs[i]) over the
    corner-control box [1/alpha, 1]^2.

    Positive means strictly feasible, negative strictly infeasible; the
    magnitude is the distance (in constraint value) from the decision
    boundary. The maximum of this concave piecewise-linear function is
    attained at a box corner or where two constraint margins are equal
    ("ridge") on the box boundary, so those finitely many candidates
    are exact.
    """
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, 2)
    rhs = np.asarray(rhs, dtype=np.float64).ravel()
    lo, hi = 1.0 / alpha, 1.0
    cands = [(x, y) for x in (lo, hi) for y in (lo, hi)]
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            g = rows[i] - rows[j]
            h = rhs[i] - rhs[j]
            # ridge line g . x = h clipped to the box boundary
            for axis in range(2):
                for bound in (lo, hi):
                    other = 1 - axis
                    if abs(g[other]) < 1e-300:
                        continue
                    t = (h - g[axis] * bound) / g[other]
                    if lo - 1e-15 <= t <= hi + 1e-15:
                        pt = [0.0, 0.0]
                        pt[axis] = bound
                        pt[other] = min(max(t, lo), hi)
                        cands.append((pt[0], pt[1]))
    best = -np.inf
    for x, y in cands:
        margin = min(float(rows[i, 0] * x + rows[i, 1] * y - rhs[i]) for i in range(len(rows)))
        if margin > best:
            best = margin
    return best


def delaunay_edges_bruteforce(positions) -> set[tuple[int, int]]:
    """Edge set by exhaustive empty-circumcircle search over all triples.

    (i, j) is an edge iff some circle through p_i and p_j contains no
    other point strictly inside (after the tie-break perturbation);
    equivalently, iff (i, j) belongs to a triangle whose circumcircle is
    empty. Degenerate inputs follow the same rules as the production
    triangulation: n = 2 is a single edge, fully collinear sets become a
    path graph.
    """
    coords = _as_coords(positions)
    n = len(coords)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points, got {n}")
    diffs = coords[:, None, :] - coords[None, :, :]
    d2 = (diffs**2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    if float(d2.min()) < MIN_SEPARATION**2:
        raise DuplicatePoints("coincident points")
    if n == 2:
        return {(0, 1)}
    line = _collinear_line(coords)
    if line is not None:
        return _path_graph_edges(coords, *line)

    pred = CircumcirclePredicate(coords)
    edges: set[tuple[int, int]] = set()
    for i, j, k in combinations(range(n), 3):
        if abs(pred.orient(i, j, k)) <= pred.orient_tol:
            continue
        if any(
            pred.in_circumcircle(i, j, k, m)
            for m in range(n)
            if m != i and m != j and m != k
        ):
            continue
        edges.update({(i, j), (i, k), (j, k)})
    return edges
