"""Constrained speed-tracking control via multi-start projected gradient.

Each agent minimizes the squared deviation of its next-step speed from
the optimal locomotion speed,

    J(u) = (|v + dt u| - v*)^2,

over the feasible control polygon. The one-step lookahead w = v + dt u
is the minimal discretization that makes the decision variable appear
in the cost. J is not convex (its unconstrained minimizer is a whole
circle in u-space), so a single projected-gradient descent can stall on
a face while a vertex is strictly better; multi-starting from the
origin, the previous control, and every polygon vertex restores
oracle-level optimality at this problem scale (checked against an
exhaustive grid in tests).

Descent details, all deterministic: the gradient is
2 (|w| - v*) dt w/|w|, with w/|w| replaced by the fixed reference
direction (1, 0) when |w| is numerically zero; steps move a fixed
distance along the normalized descent direction, halving on failure to
decrease (the step is carried, non-increasing, across iterations of one
start); ties between starts resolve toward larger u_x, then larger u_y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptyPolytope

#: Tolerance used by the exhaustive grid oracle when filtering feasible
#: grid points.
GRID_FEAS_TOL = 1e-12


@dataclass(frozen=True)
class SpeedObjective:
    """Current velocity, target speed, and step length defining J."""

    v_current: np.ndarray
    v_star: float
    dt: float

    def __post_init__(self):
        v = np.asarray(self.v_current, dtype=np.float64)
        object.__setattr__(self, "v_current", v)
        if v.shape != (2,) or not np.all(np.isfinite(v)):
            raise ValueError("v_current must be a finite 2-vector")
        if not (math.isfinite(self.v_star) and self.v_star >= 0.0):
            raise ValueError("v_star must be >= 0")
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """Projected-gradient settings.

    ``initial_step`` is a displacement in control units; it defaults to
    the Table-scale actuation bound and callers normally pass their own
    u_max. ``stall_tol`` is the step size below which a start is
    declared converged.
    """

    max_iters: int = 100
    initial_step: float = 0.1
    shrink_factor: float = 0.5
    stall_tol: float = 1e-10
    zero_speed_eps: float = 1e-9

    def __post_init__(self):
        if self.max_iters <= 0:
            raise ValueError("max_iters must be positive")
        if not (self.initial_step > 0 and self.stall_tol > 0 and self.zero_speed_eps > 0):
            raise ValueError("steps and tolerances must be positive")
        if not (0.0 < self.shrink_factor < 1.0):
            raise ValueError("shrink_factor must lie in (0, 1)")


def objective(u, obj: SpeedObjective) -> float:
    """J(u) = (|v + dt u| - v*)^2."""
    u = np.asarray(u, dtype=np.float64)
    w = obj.v_current + obj.dt * u
    return (float(np.hypot(w[0], w[1])) - obj.v_star) ** 2


def gradient(u, obj: SpeedObjective, zero_speed_eps: float = 1e-9) -> np.ndarray:
    """Analytic gradient 2 (|w| - v*) dt w_hat, with w_hat = (1, 0) at |w| ~ 0."""
    u = np.asarray(u, dtype=np.float64)
    w = obj.v_current + obj.dt * u
    nw = float(np.hypot(w[0], w[1]))
    if nw <= zero_speed_eps:
        w_hat = np.array([1.0, 0.0])
    else:
        w_hat = w / nw
    return 2.0 * (nw - obj.v_star) * obj.dt * w_hat


@njit(cache=True)
def _project_kernel(vx, vy, px, py):  # pragma: no cover - exercised via wrapper
    k = vx.shape[0]
    if k == 1:
        return vx[0], vy[0]
    if k >= 3:
        inside = True
        for i in range(k):
            j = (i + 1) % k
            cr = (vx[j] - vx[i]) * (py - vy[i]) - (vy[j] - vy[i]) * (px - vx[i])
            if cr < 0.0:
                inside = False
                break
        if inside:
            return px, py
    best = np.inf
    bqx = vx[0]
    bqy = vy[0]
    nedges = 1 if k == 2 else k
    for i in range(nedges):
        j = (i + 1) % k
        ex = vx[j] - vx[i]
        ey = vy[j] - vy[i]
        e2 = ex * ex + ey * ey
        if e2 > 0.0:
            t = ((px - vx[i]) * ex + (py - vy[i]) * ey) / e2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        else:
            t = 0.0
        qx = vx[i] + t * ex
        qy = vy[i] + t * ey
        d2 = (px - qx) ** 2 + (py - qy) ** 2
        if d2 < best:
            best = d2
            bqx = qx
            bqy = qy
    return bqx, bqy


@njit(cache=True)
def _solve_kernel(
    vx, vy, vcx, vcy, vstar, dt, sx, sy, max_iters, initial_step, shrink, stall_tol, zero_eps
):  # pragma: no cover - exercised via wrapper
    best_f = np.inf
    bux = 0.0
    buy = 0.0
    for s in range(sx.shape[0]):
        ux, uy = _project_kernel(vx, vy, sx[s], sy[s])
        wx = vcx + dt * ux
        wy = vcy + dt * uy
        nw = math.sqrt(wx * wx + wy * wy)
        f = (nw - vstar) ** 2
        step = initial_step
        for _ in range(max_iters):
            if nw <= zero_eps:
                hx = 1.0
                hy = 0.0
            else:
                hx = wx / nw
                hy = wy / nw
            coef = 2.0 * (nw - vstar) * dt
            gx = coef * hx
            gy = coef * hy
            gn = math.sqrt(gx * gx + gy * gy)
            if gn <= 0.0:
                break
            dx = gx / gn
            dy = gy / gn
            improved = False
            while step >= stall_tol:
                cx, cy = _project_kernel(vx, vy, ux - step * dx, uy - step * dy)
                nwx = vcx + dt * cx
                nwy = vcy + dt * cy
                nn = math.sqrt(nwx * nwx + nwy * nwy)
                fc = (nn - vstar) ** 2
                if fc < f:
                    ux = cx
                    uy = cy
                    wx = nwx
                    wy = nwy
                    nw = nn
                    f = fc
                    improved = True
                    break
                step *= shrink
            if not improved:
                break
        if f < best_f or (f == best_f and (ux > bux or (ux == bux and uy > buy))):
            best_f = f
            bux = ux
            buy = uy
    return bux, buy, best_f


def _vertices_to_arrays(vertices) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(vertices, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise EmptyPolytope("feasible polygon has no vertices")
    return np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1])


def project_onto_polytope(u, vertices) -> np.ndarray:
    """Euclidean-closest point of the polygon to u (u itself if inside).

    ``vertices`` must be counterclockwise as produced by
    ``polytope_vertices``; a segment or single point is fine.
    """
    vx, vy = _vertices_to_arrays(vertices)
    u = np.asarray(u, dtype=np.float64)
    qx, qy = _project_kernel(vx, vy, float(u[0]), float(u[1]))
    return np.array([qx, qy])


def solve_control(
    obj: SpeedObjective,
    vertices,
    cfg: SolverConfig | None = None,
    prev_u=None,
) -> np.ndarray:
    """Minimize J over the polygon by multi-start projected gradient.

    Starts from the origin, from ``prev_u`` when given (warm start), and
    from every polygon vertex; returns the best endpoint (ties toward
    larger u_x, then u_y). Deterministic for identical inputs.
    """
    cfg = cfg or SolverConfig()
    vx, vy = _vertices_to_arrays(vertices)
    n_starts = 1 + (1 if prev_u is not None else 0) + vx.shape[0]
    sx = np.empty(n_starts, dtype=np.float64)
    sy = np.empty(n_starts, dtype=np.float64)
    sx[0] = 0.0
    sy[0] = 0.0
    idx = 1
    if prev_u is not None:
        sx[1] = float(prev_u[0])
        sy[1] = float(prev_u[1])
        idx = 2
    sx[idx:] = vx
    sy[idx:] = vy
    ux, uy, _ = _solve_kernel(
        vx,
        vy,
        float(obj.v_current[0]),
        float(obj.v_current[1]),
        obj.v_star,
        obj.dt,
        sx,
        sy,
        cfg.max_iters,
        cfg.initial_step,
        cfg.shrink_factor,
        cfg.stall_tol,
        cfg.zero_speed_eps,
    )
    return np.array([ux, uy])


def grid_oracle(
    obj: SpeedObjective, constraints, u_max: float, resolution: int = 201
) -> tuple[np.ndarray | None, float]:
    """Exhaustive reference: evaluate J on a resolution^2 grid of the box,
    keep points satisfying every constraint within GRID_FEAS_TOL, return
    the best (u, cost). Returns (None, inf) when no grid point is
    feasible.
    """
    if resolution < 3:
        raise ValueError("resolution must be >= 3")
    ticks = np.linspace(-u_max, u_max, resolution)
    ux, uy = np.meshgrid(ticks, ticks, indexing="ij")
    feasible = np.ones(ux.shape, dtype=bool)
    for cc in constraints:
        feasible &= cc.a[0] * ux + cc.a[1] * uy <= cc.c + GRID_FEAS_TOL
    if not feasible.any():
        return None, np.inf
    wx = obj.v_current[0] + obj.dt * ux
    wy = obj.v_current[1] + obj.dt * uy
    cost = (np.hypot(wx, wy) - obj.v_star) ** 2
    cost[~feasible] = np.inf
    k = int(cost.argmin())
    return np.array([ux.flat[k], uy.flat[k]]), float(cost.flat[k])
