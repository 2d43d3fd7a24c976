"""Per-agent linear control constraints and 2D feasibility machinery.

Every behavioral rule reduces to a half-plane on the control input u:

* wall safety: when the stopping-distance margin of a wall is nearly
  active, the control must brake along the wall normal
  (u . n <= -u_max/alpha, sign-matched to the approach direction);
* flocking: outside the neighborhood disk, u must not let the relative
  position grow ((|r_dot|/u_max) u . r + r_dot . r <= 0);
* predator: inside the threat radius, the mirrored form repels
  (-(|d_dot|/u_max) u . d - d_dot . d <= 0).

Feasibility of a constraint set is decided by enumerating the vertices
of the (always bounded, box-intersected) polygon: the box guarantees
boundedness, so the set is nonempty iff it has a vertex. This avoids a
general LP dependency in 2D. The corner-state incompatibility
predicates (``lemma*_infeasible``) give the closed-form answer for
states pinned at two perpendicular walls and are validated against a
grid oracle in :mod:`swarmsim.oracles`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from .errors import PremiseViolated, StateUnsafe

#: Polytope emptiness / constraint-satisfaction tolerance (on normalized rows).
FEASIBILITY_TOL = 1e-9

#: Vertices closer than this are merged.
VERTEX_DEDUP_TOL = 1e-10

#: |v . n| below this emits no wall constraint (the margin derivative is
#: zero for every control input at that instant).
VELOCITY_DEADBAND = 1e-12

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class HalfPlane:
    """A wall: unit outward normal and offset, signed distance p.n + b <= 0 inside."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        object.__setattr__(self, "normal", n)
        if n.shape != (2,) or not np.all(np.isfinite(n)):
            raise ValueError("normal must be a finite 2-vector")
        if abs(float(np.hypot(n[0], n[1])) - 1.0) > _UNIT_TOL:
            raise ValueError("normal must have unit length")
        if not math.isfinite(self.offset):
            raise ValueError("offset must be finite")

    def signed_distance(self, p) -> float:
        p = np.asarray(p, dtype=np.float64)
        return float(p @ self.normal) + self.offset


@dataclass(frozen=True)
class RectDomain:
    """Axis-pair rectangular domain: walls 1..4 with n1 = -n3, n2 = -n4, n1 . n2 = 0."""

    walls: tuple[HalfPlane, HalfPlane, HalfPlane, HalfPlane]

    def __post_init__(self):
        w = self.walls
        if len(w) != 4:
            raise ValueError("RectDomain needs exactly 4 walls")
        n1, n2, n3, n4 = (wall.normal for wall in w)
        if not (np.allclose(n1, -n3, atol=1e-12) and np.allclose(n2, -n4, atol=1e-12)):
            raise ValueError("walls must come in opposing pairs (1,3) and (2,4)")
        if abs(float(n1 @ n2)) > 1e-12:
            raise ValueError("wall pairs must be perpendicular")
        if -(w[0].offset + w[2].offset) <= 0 or -(w[1].offset + w[3].offset) <= 0:
            raise ValueError("domain interior is empty")

    @classmethod
    def square(cls, length: float) -> "RectDomain":
        """The [0, length] x [0, length] square."""
        if not (math.isfinite(length) and length > 0):
            raise ValueError("length must be positive")
        return cls(
            walls=(
                HalfPlane(np.array([1.0, 0.0]), -length),
                HalfPlane(np.array([0.0, 1.0]), -length),
                HalfPlane(np.array([-1.0, 0.0]), 0.0),
                HalfPlane(np.array([0.0, -1.0]), 0.0),
            )
        )

    def contains(self, p, inflate: float = 0.0) -> bool:
        return all(w.signed_distance(p) <= inflate for w in self.walls)


class ConstraintKind(Enum):
    WALL = "wall"
    FLOCKING = "flocking"
    PREDATOR = "predator"
    BOX = "box"


@dataclass(frozen=True)
class ControlConstraint:
    """Linear inequality a . u <= c on the control input (m/s^2)."""

    a: np.ndarray
    c: float
    kind: ConstraintKind
    wall_index: int | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        object.__setattr__(self, "a", a)
        if a.shape != (2,) or not np.all(np.isfinite(a)) or not math.isfinite(self.c):
            raise ValueError("constraint coefficients must be finite 2-vector and scalar")

    def violation(self, u) -> float:
        """a . u - c; <= 0 when satisfied."""
        u = np.asarray(u, dtype=np.float64)
        return float(self.a @ u) - self.c


@dataclass(frozen=True)
class SafetyParams:
    """Stopping-distance parameters: alpha >= 1 guarantees recursive feasibility.

    ``activation_margin`` is the band below zero in which a wall's
    control constraint engages. Under a dt time step the margin of an
    unconstrained boid can grow by up to
    dt (1 + alpha) s + dt^2 u_max (1 + alpha/2) in one step (s = speed
    into the wall), so the band must cover that increment or a fast boid
    can jump it; 0.025 m covers approach speeds up to ~0.25 m/s at the
    reference dt = 0.05 s, u_max = 0.1 m/s^2, alpha = 1.
    """

    alpha: float = 1.0
    u_max: float = 0.1
    activation_margin: float = 0.025

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 1.0):
            raise ValueError("alpha must be >= 1")
        if not (math.isfinite(self.u_max) and self.u_max > 0.0):
            raise ValueError("u_max must be positive")
        if not (math.isfinite(self.activation_margin) and self.activation_margin >= 0.0):
            raise ValueError("activation_margin must be >= 0")


def safety_margin(p, v, wall: HalfPlane, params: SafetyParams) -> float:
    """Stopping-distance margin g = (p.n + b) + alpha (v.n)^2 / (2 u_max).

    Nonpositive values mean the boid can still stop before the wall at
    full braking; the quadratic term is the braking distance.
    """
    v = np.asarray(v, dtype=np.float64)
    vn = float(v @ wall.normal)
    return wall.signed_distance(p) + params.alpha * vn * vn / (2.0 * params.u_max)


def wall_margins(p, v, domain: RectDomain, params: SafetyParams) -> np.ndarray:
    return np.array([safety_margin(p, v, w, params) for w in domain.walls])


def _wall_constraints_from_margins(
    v: np.ndarray, margins: np.ndarray, domain: RectDomain, params: SafetyParams
) -> list[ControlConstraint]:
    worst = float(margins.max())
    if worst > FEASIBILITY_TOL:
        raise StateUnsafe(f"wall margin {worst:.3e} exceeds tolerance; state is unsafe")
    bound = params.u_max / params.alpha
    out: list[ControlConstraint] = []
    for k, wall in enumerate(domain.walls):
        if margins[k] < -params.activation_margin:
            continue
        vn = float(v[0] * wall.normal[0] + v[1] * wall.normal[1])
        if vn > VELOCITY_DEADBAND:
            out.append(ControlConstraint(wall.normal.copy(), -bound, ConstraintKind.WALL, k))
        elif vn < -VELOCITY_DEADBAND:
            out.append(ControlConstraint(-wall.normal, bound, ConstraintKind.WALL, k))
    return out


def wall_control_constraints(
    p, v, domain: RectDomain, params: SafetyParams
) -> list[ControlConstraint]:
    """Braking constraints for every wall whose margin is nearly active.

    For an active wall k: if the boid moves toward it (v.n > 0) the
    margin derivative must be forced down, u.n <= -u_max/alpha; if it
    moves away (v.n < 0) the same derivative condition flips to
    u.n >= -u_max/alpha. With v.n = 0 the derivative vanishes for every
    control, so nothing is emitted. The activation band
    ``activation_margin`` below zero absorbs discrete-time overshoot;
    see :func:`discrete_wall_guards` for the companion rule that covers
    the velocity sign-flip window a discrete integrator introduces.
    """
    v = np.asarray(v, dtype=np.float64)
    margins = wall_margins(p, v, domain, params)
    return _wall_constraints_from_margins(v, margins, domain, params)


def _wall_guards_from_margins(
    v: np.ndarray, margins: np.ndarray, domain: RectDomain, params: SafetyParams, dt: float
) -> list[ControlConstraint]:
    out: list[ControlConstraint] = []
    flip_window = dt * params.u_max
    for k, wall in enumerate(domain.walls):
        if margins[k] < -params.activation_margin:
            continue
        vn = float(v[0] * wall.normal[0] + v[1] * wall.normal[1])
        if -flip_window < vn <= VELOCITY_DEADBAND:
            out.append(ControlConstraint(wall.normal.copy(), 0.0, ConstraintKind.WALL, k))
    return out


def discrete_wall_guards(
    p, v, domain: RectDomain, params: SafetyParams, dt: float
) -> list[ControlConstraint]:
    """No inward acceleration at an active wall while the normal velocity
    can change sign within one step.

    In continuous time, v.n = 0 at an active wall makes the margin
    derivative zero for every control, so the braking rule emits
    nothing there. A dt integrator breaks that argument: from
    |v.n| < dt u_max a control with u.n > 0 can flip the sign of v.n
    mid-step and push the margin past zero. Requiring u.n <= 0 in that
    window makes the one-step margin increment nonpositive (for
    alpha <= 2), restoring the containment guarantee; outside the
    window the braking constraints already enforce a strict decrease.
    """
    v = np.asarray(v, dtype=np.float64)
    margins = wall_margins(p, v, domain, params)
    return _wall_guards_from_margins(v, margins, domain, params, dt)


def flocking_constraint(r, r_dot, u_max: float) -> ControlConstraint | None:
    """Half-plane keeping the boid from drifting away from its
    neighborhood center: (|r_dot|/u_max) u . r + r_dot . r <= 0.

    Only meaningful outside the disk (callers gate on |r| > R). With
    r_dot = 0 the inequality holds for every u, so nothing is returned.
    """
    r = np.asarray(r, dtype=np.float64)
    r_dot = np.asarray(r_dot, dtype=np.float64)
    nrd = float(np.hypot(r_dot[0], r_dot[1]))
    if nrd == 0.0:
        return None
    return ControlConstraint((nrd / u_max) * r, -float(r_dot @ r), ConstraintKind.FLOCKING)


def predator_constraint(d, d_dot, u_max: float) -> ControlConstraint | None:
    """Mirrored half-plane repelling the boid from the predator:
    -(|d_dot|/u_max) u . d - d_dot . d <= 0.

    Callers gate on |d| < Gamma. With d_dot = 0 nothing is returned.
    """
    d = np.asarray(d, dtype=np.float64)
    d_dot = np.asarray(d_dot, dtype=np.float64)
    ndd = float(np.hypot(d_dot[0], d_dot[1]))
    if ndd == 0.0:
        return None
    return ControlConstraint(-(ndd / u_max) * d, float(d_dot @ d), ConstraintKind.PREDATOR)


@njit(cache=True)
def _polygon_kernel(rows, offs, feas_tol, dedup_tol):  # pragma: no cover - via wrapper
    """Vertices (CCW, deduplicated, lexicographically-smallest first) of
    {x : rows x <= offs}, which must be bounded.

    Rows are normalized in place so feas_tol acts as a geometric
    distance. Zero rows are vacuous when satisfiable; otherwise the
    polygon is empty. The boolean flags that emptiness came from a
    contradictory zero row."""
    m = rows.shape[0]
    A = np.empty((m, 2), dtype=np.float64)
    b = np.empty(m, dtype=np.float64)
    mr = 0
    for i in range(m):
        nrm = math.sqrt(rows[i, 0] ** 2 + rows[i, 1] ** 2)
        if nrm <= 1e-14:
            if offs[i] < -1e-12:
                return np.empty((0, 2), dtype=np.float64)
            continue
        A[mr, 0] = rows[i, 0] / nrm
        A[mr, 1] = rows[i, 1] / nrm
        b[mr] = offs[i] / nrm
        mr += 1
    cand = np.empty((mr * (mr - 1) // 2, 2), dtype=np.float64)
    cnt = 0
    for i in range(mr):
        for j in range(i + 1, mr):
            det = A[i, 0] * A[j, 1] - A[i, 1] * A[j, 0]
            if abs(det) <= 1e-12:
                continue
            x = (b[i] * A[j, 1] - b[j] * A[i, 1]) / det
            y = (A[i, 0] * b[j] - A[j, 0] * b[i]) / det
            ok = True
            for k in range(mr):
                if A[k, 0] * x + A[k, 1] * y - b[k] > feas_tol:
                    ok = False
                    break
            if not ok:
                continue
            dup = False
            for q in range(cnt):
                if abs(cand[q, 0] - x) <= dedup_tol and abs(cand[q, 1] - y) <= dedup_tol:
                    dup = True
                    break
            if not dup:
                cand[cnt, 0] = x
                cand[cnt, 1] = y
                cnt += 1
    verts = cand[:cnt].copy()
    if cnt <= 1:
        return verts
    if cnt == 2:
        if verts[0, 0] > verts[1, 0] or (verts[0, 0] == verts[1, 0] and verts[0, 1] > verts[1, 1]):
            tx = verts[0, 0]
            ty = verts[0, 1]
            verts[0, 0] = verts[1, 0]
            verts[0, 1] = verts[1, 1]
            verts[1, 0] = tx
            verts[1, 1] = ty
        return verts
    cx = 0.0
    cy = 0.0
    for q in range(cnt):
        cx += verts[q, 0]
        cy += verts[q, 1]
    cx /= cnt
    cy /= cnt
    keys = np.empty(cnt, dtype=np.float64)
    for q in range(cnt):
        keys[q] = math.atan2(verts[q, 1] - cy, verts[q, 0] - cx)
    order = np.argsort(keys)
    start = 0
    bx = np.inf
    by = np.inf
    for q in range(cnt):
        vq = order[q]
        if verts[vq, 0] < bx or (verts[vq, 0] == bx and verts[vq, 1] < by):
            bx = verts[vq, 0]
            by = verts[vq, 1]
            start = q
    out = np.empty((cnt, 2), dtype=np.float64)
    for q in range(cnt):
        src = order[(start + q) % cnt]
        out[q, 0] = verts[src, 0]
        out[q, 1] = verts[src, 1]
    return out


def _polygon_array(rows: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Array-valued variant of :func:`halfplane_polygon` for hot paths."""
    return _polygon_kernel(
        np.ascontiguousarray(rows, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.float64),
        FEASIBILITY_TOL,
        VERTEX_DEDUP_TOL,
    )


def halfplane_polygon(rows: np.ndarray, offsets: np.ndarray) -> list[np.ndarray]:
    """Vertices (CCW, deduplicated) of the polygon {x : rows x <= offsets}.

    The system must be bounded. Zero rows are treated as vacuous when
    satisfiable and as a contradiction otherwise. Returns [] iff the
    polygon is empty within FEASIBILITY_TOL.
    """
    return list(_polygon_array(np.asarray(rows, dtype=np.float64), np.asarray(offsets, dtype=np.float64)))


def _polytope_rows(constraints: list[ControlConstraint], u_max: float):
    rows = np.empty((4 + len(constraints), 2), dtype=np.float64)
    offs = np.empty(4 + len(constraints), dtype=np.float64)
    rows[0, 0] = 1.0
    rows[0, 1] = 0.0
    rows[1, 0] = -1.0
    rows[1, 1] = 0.0
    rows[2, 0] = 0.0
    rows[2, 1] = 1.0
    rows[3, 0] = 0.0
    rows[3, 1] = -1.0
    offs[:4] = u_max
    for idx, cc in enumerate(constraints):
        rows[4 + idx] = cc.a
        offs[4 + idx] = cc.c
    return rows, offs


def _polytope_array(constraints: list[ControlConstraint], u_max: float) -> np.ndarray:
    rows, offs = _polytope_rows(constraints, u_max)
    verts = _polygon_kernel(rows, offs, FEASIBILITY_TOL, VERTEX_DEDUP_TOL)
    if len(verts):
        # Vertices formed by two non-box rows may overhang the box by up
        # to FEASIBILITY_TOL; clamp so controls never exceed u_max.
        np.clip(verts, -u_max, u_max, out=verts)
    return verts


def polytope_vertices(
    constraints: list[ControlConstraint], u_max: float
) -> list[np.ndarray]:
    """Vertices of the feasible control polygon, box included.

    The actuation box |u|_inf <= u_max is always intersected in, so the
    region is bounded and nonempty iff a vertex exists. Vertices are
    returned counterclockwise starting from the lexicographically
    smallest; [] means empty within FEASIBILITY_TOL.
    """
    return list(_polytope_array(constraints, u_max))


# --------------------------------------------------------------------------
# Corner-state incompatibility predicates
# --------------------------------------------------------------------------

_CORNERS = ((1.0, 1.0), (None, 1.0), (1.0, None), (None, None))  # None -> 1/alpha


def _check_corner_premise(n1, n2, v, alpha: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n1 = np.asarray(n1, dtype=np.float64)
    n2 = np.asarray(n2, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if abs(float(np.hypot(*n1)) - 1.0) > 1e-9 or abs(float(np.hypot(*n2)) - 1.0) > 1e-9:
        raise PremiseViolated("wall normals must be unit vectors")
    if abs(float(n1 @ n2)) > 1e-9:
        raise PremiseViolated("walls must be perpendicular")
    if float(v @ n1) < -VELOCITY_DEADBAND or float(v @ n2) < -VELOCITY_DEADBAND:
        raise PremiseViolated("velocity must point into both active walls (v.n >= 0)")
    if not (math.isfinite(alpha) and alpha >= 1.0):
        raise PremiseViolated("alpha must be >= 1")
    return n1, n2, v


def _corner_values(alpha: float):
    inv = 1.0 / alpha
    return [(c1 if c1 is not None else inv, c2 if c2 is not None else inv) for c1, c2 in _CORNERS]


def lemma1_infeasible(n1, n2, v, r, r_dot, R: float, alpha: float) -> bool:
    """No control satisfies walls + flocking at a two-wall corner state.

    Premises: both corner wall margins exactly active, v.n_k >= 0, and
    |r| > R. The candidate controls u = -u1 n1 - u2 n2 with
    u_max/alpha <= u_k <= u_max reduce the flocking half-plane to four
    corner conditions; infeasible iff none holds.
    """
    n1, n2, _ = _check_corner_premise(n1, n2, v, alpha)
    r = np.asarray(r, dtype=np.float64)
    r_dot = np.asarray(r_dot, dtype=np.float64)
    nr = float(np.hypot(*r))
    if nr <= R:
        raise PremiseViolated(f"|r| = {nr:.6g} must exceed R = {R:.6g}")
    r_hat = r / nr
    nrd = float(np.hypot(*r_dot))
    a1 = float(n1 @ r_hat)
    a2 = float(n2 @ r_hat)
    rhs = float(r_dot @ r_hat)
    return not any(nrd * (c1 * a1 + c2 * a2) >= rhs for c1, c2 in _corner_values(alpha))


def lemma2_infeasible(n1, n2, v, d, d_dot, Gamma: float, alpha: float) -> bool:
    """No control satisfies walls + predator avoidance at a corner state.

    Premises mirror lemma1 with |d| > Gamma (as stated for this
    predicate). Infeasible iff none of the four corner conditions
    |d_dot| (c1 n1.d_hat + c2 n2.d_hat) <= d_dot . d_hat holds.
    """
    n1, n2, _ = _check_corner_premise(n1, n2, v, alpha)
    d = np.asarray(d, dtype=np.float64)
    d_dot = np.asarray(d_dot, dtype=np.float64)
    nd = float(np.hypot(*d))
    if nd <= Gamma:
        raise PremiseViolated(f"|d| = {nd:.6g} must exceed Gamma = {Gamma:.6g}")
    d_hat = d / nd
    ndd = float(np.hypot(*d_dot))
    a1 = float(n1 @ d_hat)
    a2 = float(n2 @ d_hat)
    rhs = float(d_dot @ d_hat)
    return not any(ndd * (c1 * a1 + c2 * a2) <= rhs for c1, c2 in _corner_values(alpha))


def lemma3_infeasible(n1, n2, v, r, r_dot, d, d_dot, R: float, Gamma: float, alpha: float) -> bool:
    """No control satisfies walls + flocking + predator jointly at a corner.

    The two reduced inequalities must hold simultaneously for some
    (u1/u_max, u2/u_max) in [1/alpha, 1]^2; decided exactly by vertex
    enumeration of the intersection polygon.
    """
    n1, n2, _ = _check_corner_premise(n1, n2, v, alpha)
    r = np.asarray(r, dtype=np.float64)
    r_dot = np.asarray(r_dot, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    d_dot = np.asarray(d_dot, dtype=np.float64)
    nr = float(np.hypot(*r))
    nd = float(np.hypot(*d))
    if nr <= R:
        raise PremiseViolated(f"|r| = {nr:.6g} must exceed R = {R:.6g}")
    if nd <= Gamma:
        raise PremiseViolated(f"|d| = {nd:.6g} must exceed Gamma = {Gamma:.6g}")
    r_hat = r / nr
    d_hat = d / nd
    nrd = float(np.hypot(*r_dot))
    ndd = float(np.hypot(*d_dot))
    # rows x >= rhs  ->  -rows x <= -rhs, plus the [1/alpha, 1]^2 box.
    inv = 1.0 / alpha
    rows = np.array(
        [
            [-nrd * float(n1 @ r_hat), -nrd * float(n2 @ r_hat)],
            [ndd * float(n1 @ d_hat), ndd * float(n2 @ d_hat)],
            [1.0, 0.0],
            [-1.0, 0.0],
            [0.0, 1.0],
            [0.0, -1.0],
        ]
    )
    offs = np.array(
        [
            -float(r_dot @ r_hat),
            float(d_dot @ d_hat),
            1.0,
            -inv,
            1.0,
            -inv,
        ]
    )
    return len(halfplane_polygon(rows, offs)) == 0
