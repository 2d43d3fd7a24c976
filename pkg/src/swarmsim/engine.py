"""World state and the synchronous per-step simulation pipeline.

Each step reads one immutable snapshot at time t and produces the state
at t + dt: triangulate positions, summarize every neighborhood, build
wall / flocking / predator constraints, pick the per-agent mode through
the relaxation cascade, solve for the control, then integrate with
semi-implicit Euler (v += dt u, then p += dt v_new). All agents use the
time-t snapshot, so the update order is irrelevant.

The predator is a pure kinematic script, unconstrained by walls or the
actuation box: it aims at the flock centroid, travels straight for
``predator_period`` seconds at 1.2x the boids' target speed, re-aims,
and repeats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterator

import numpy as np

from .behavior import AgentMode, _cascade
from .constraints import (
    FEASIBILITY_TOL,
    RectDomain,
    SafetyParams,
    _wall_constraints_from_margins,
    _wall_guards_from_margins,
    flocking_constraint,
    predator_constraint,
)
from .errors import PackingFailed, SafetyViolation, ValidationError
from .geometry import delaunay_edges
from .solver import SolverConfig, SpeedObjective, solve_control

#: Positions may exceed the domain by at most this much (meters).
DOMAIN_INFLATE = 1e-6

#: Sub-seed label for initial placement; keeps initialization identical
#: when unrelated toggles (e.g. the predator) change.
_INIT_STREAM = 0x1A17

_MAX_PACKING_REJECTIONS = 10_000


@dataclass(frozen=True)
class WorldConfig:
    """Run parameters. Defaults reproduce the reference swarming setup:
    15 boids in a 6 m square, v* = 0.125 m/s, u_max = 0.1 m/s^2,
    R = 0.025 m, Gamma = 0.25 m, 120 s at dt = 0.05 s."""

    n_boids: int = 15
    domain_length: float = 6.0
    v_star: float = 0.125
    u_max: float = 0.1
    R: float = 0.025
    Gamma: float = 0.25
    alpha: float = 1.0
    dt: float = 0.05
    duration: float = 120.0
    boid_diameter: float = 0.05
    predator_enabled: bool = False
    predator_period: float = 8.0
    seed: int = 0
    flocking_enabled: bool = True

    def __post_init__(self):
        checks = [
            (self.n_boids >= 2, "n_boids must be >= 2"),
            (math.isfinite(self.domain_length) and self.domain_length > 0, "domain_length must be positive"),
            (math.isfinite(self.v_star) and self.v_star >= 0, "v_star must be >= 0"),
            (math.isfinite(self.u_max) and self.u_max > 0, "u_max must be positive"),
            (math.isfinite(self.alpha) and self.alpha >= 1.0, "alpha must be >= 1"),
            (math.isfinite(self.dt) and self.dt > 0, "dt must be positive"),
            (math.isfinite(self.duration) and self.duration >= 0, "duration must be >= 0"),
            (
                math.isfinite(self.R) and 0 < self.R < self.Gamma < self.domain_length,
                "R < Gamma < domain_length must hold with R > 0",
            ),
            (math.isfinite(self.boid_diameter) and self.boid_diameter >= 0, "boid_diameter must be >= 0"),
            (math.isfinite(self.predator_period) and self.predator_period > 0, "predator_period must be positive"),
            (0 <= int(self.seed) < 2**64, "seed must fit in 64 unsigned bits"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(msg)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9))

    @property
    def predator_turn_steps(self) -> int:
        return int(math.ceil(self.predator_period / self.dt - 1e-9))


@dataclass(frozen=True)
class BoidState:
    """Snapshot of one agent."""

    id: int
    position: np.ndarray
    velocity: np.ndarray
    last_control: np.ndarray
    mode: AgentMode


@dataclass(frozen=True)
class PredatorState:
    """Scripted predator: straight-line legs re-aimed at the centroid."""

    position: np.ndarray
    heading: np.ndarray
    speed: float
    steps_since_turn: int
    enabled: bool

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * self.heading

    def time_since_turn(self, dt: float) -> float:
        return self.steps_since_turn * dt


@dataclass(frozen=True)
class BoidRecord:
    """One boid's row in a step trace (post-step state, step's decision)."""

    id: int
    px: float
    py: float
    vx: float
    vy: float
    ux: float
    uy: float
    mode: AgentMode
    degree: int
    g_max: float


@dataclass(frozen=True)
class StepTrace:
    """Per-step record: the state reached at time t and, per boid, the
    control/mode/degree decided from the preceding snapshot."""

    t: float
    boids: tuple[BoidRecord, ...]
    predator_position: tuple[float, float] | None


@dataclass
class World:
    """Mutable-by-replacement simulation state; ``step`` returns a fresh one."""

    positions: np.ndarray
    velocities: np.ndarray
    controls: np.ndarray
    modes: list[AgentMode]
    degrees: list[int]
    margins: np.ndarray  # (n, 4) wall margins at this state
    predator: PredatorState | None
    domain: RectDomain
    step_index: int = 0

    @property
    def n_boids(self) -> int:
        return len(self.positions)

    def time(self, dt: float) -> float:
        return self.step_index * dt

    def boid(self, i: int) -> BoidState:
        return BoidState(
            id=i,
            position=self.positions[i].copy(),
            velocity=self.velocities[i].copy(),
            last_control=self.controls[i].copy(),
            mode=self.modes[i],
        )


@lru_cache(maxsize=8)
def _square_domain(length: float) -> RectDomain:
    return RectDomain.square(length)


def _wall_margin_matrix(positions, velocities, domain: RectDomain, params: SafetyParams) -> np.ndarray:
    normals = np.array([w.normal for w in domain.walls])  # (4, 2)
    offsets = np.array([w.offset for w in domain.walls])
    dist = positions @ normals.T + offsets  # (n, 4)
    vn = velocities @ normals.T
    return dist + params.alpha * vn * vn / (2.0 * params.u_max)


def init_world(cfg: WorldConfig) -> World:
    """Boids at rest, uniformly placed in the domain shrunk by the wall
    activation margin, rejection-sampled so no two overlap
    (pairwise distance >= boid_diameter). Deterministic per seed."""
    params = SafetyParams(alpha=cfg.alpha, u_max=cfg.u_max)
    margin = params.activation_margin
    lo, hi = margin, cfg.domain_length - margin
    if hi <= lo:
        raise ValidationError("domain too small for the activation margin")
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), _INIT_STREAM]))
    placed: list[np.ndarray] = []
    rejections = 0
    min_d2 = cfg.boid_diameter**2
    while len(placed) < cfg.n_boids:
        cand = rng.uniform(lo, hi, 2)
        if all((cand[0] - q[0]) ** 2 + (cand[1] - q[1]) ** 2 >= min_d2 for q in placed):
            placed.append(cand)
        else:
            rejections += 1
            if rejections > _MAX_PACKING_REJECTIONS:
                raise PackingFailed(
                    f"could not place {cfg.n_boids} boids of diameter "
                    f"{cfg.boid_diameter} after {rejections} rejections"
                )
    positions = np.array(placed)
    velocities = np.zeros_like(positions)
    domain = _square_domain(cfg.domain_length)
    predator = None
    if cfg.predator_enabled:
        L = cfg.domain_length
        corners = np.array([(0.0, 0.0), (L, 0.0), (L, L), (0.0, L)])
        centroid = positions.mean(axis=0)
        far = int(np.argmax(((corners - centroid) ** 2).sum(axis=1)))
        start = corners[far]
        aim = centroid - start
        heading = aim / float(np.hypot(*aim))
        predator = PredatorState(
            position=start,
            heading=heading,
            speed=1.2 * cfg.v_star,
            steps_since_turn=0,
            enabled=True,
        )
    return World(
        positions=positions,
        velocities=velocities,
        controls=np.zeros_like(positions),
        modes=[AgentMode.NOMINAL] * cfg.n_boids,
        degrees=[0] * cfg.n_boids,
        margins=_wall_margin_matrix(positions, velocities, domain, params),
        predator=predator,
        domain=domain,
        step_index=0,
    )


def make_world(cfg: WorldConfig, positions, velocities=None, predator: PredatorState | None = None) -> World:
    """World from explicit state (velocities default to rest); validates
    that every boid starts inside the domain with safe wall margins."""
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 2:
        raise ValidationError("positions must be (n, 2)")
    if len(positions) != cfg.n_boids:
        raise ValidationError(f"expected {cfg.n_boids} positions, got {len(positions)}")
    velocities = (
        np.zeros_like(positions) if velocities is None else np.asarray(velocities, dtype=np.float64)
    )
    if velocities.shape != positions.shape:
        raise ValidationError("velocities must match positions in shape")
    params = SafetyParams(alpha=cfg.alpha, u_max=cfg.u_max)
    domain = _square_domain(cfg.domain_length)
    margins = _wall_margin_matrix(positions, velocities, domain, params)
    if float(margins.max()) > FEASIBILITY_TOL:
        raise ValidationError(f"initial state is unsafe: wall margin {float(margins.max()):.3e}")
    return World(
        positions=positions.copy(),
        velocities=velocities.copy(),
        controls=np.zeros_like(positions),
        modes=[AgentMode.NOMINAL] * cfg.n_boids,
        degrees=[0] * cfg.n_boids,
        margins=margins,
        predator=predator,
        domain=domain,
        step_index=0,
    )


def step(world: World, cfg: WorldConfig) -> World:
    """Advance one synchronous step; raises SafetyViolation if any wall
    margin exceeds tolerance afterwards (bug detector, not recoverable)."""
    params = SafetyParams(alpha=cfg.alpha, u_max=cfg.u_max)
    solver_cfg = SolverConfig(initial_step=cfg.u_max)
    pos = world.positions
    vel = world.velocities
    n = world.n_boids

    graph = delaunay_edges(pos)
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for a, b in graph.edges:
        adjacency[a].append(b)
        adjacency[b].append(a)

    predator = world.predator
    pred_vel = None
    if predator is not None and predator.enabled:
        if predator.steps_since_turn >= cfg.predator_turn_steps:
            centroid = pos.mean(axis=0)
            aim = centroid - predator.position
            norm = float(np.hypot(*aim))
            heading = aim / norm if norm > 0 else predator.heading
            predator = replace(predator, heading=heading, steps_since_turn=0)
        pred_vel = predator.velocity

    new_vel = np.empty_like(vel)
    new_ctl = np.empty_like(vel)
    modes: list[AgentMode] = []
    degrees: list[int] = []
    for i in range(n):
        nbrs = adjacency[i]
        center = pos[nbrs].mean(axis=0)
        r = pos[i] - center
        r_dot = vel[i] - vel[nbrs].mean(axis=0)
        wall_cs = _wall_constraints_from_margins(vel[i], world.margins[i], world.domain, params)
        wall_cs += _wall_guards_from_margins(vel[i], world.margins[i], world.domain, params, cfg.dt)
        flock_c = None
        if cfg.flocking_enabled and float(np.hypot(*r)) > cfg.R:
            flock_c = flocking_constraint(r, r_dot, cfg.u_max)
        pred_c = None
        if pred_vel is not None:
            d = pos[i] - predator.position
            if float(np.hypot(*d)) < cfg.Gamma:
                pred_c = predator_constraint(d, vel[i] - pred_vel, cfg.u_max)
        mode, _, verts = _cascade(wall_cs, flock_c, pred_c, cfg.u_max)
        obj = SpeedObjective(vel[i], cfg.v_star, cfg.dt)
        u = solve_control(obj, verts, solver_cfg, prev_u=world.controls[i])
        np.clip(u, -cfg.u_max, cfg.u_max, out=u)
        new_ctl[i] = u
        new_vel[i] = vel[i] + cfg.dt * u
        modes.append(mode)
        degrees.append(len(nbrs))

    new_pos = pos + cfg.dt * new_vel
    if predator is not None and predator.enabled:
        predator = replace(
            predator,
            position=predator.position + cfg.dt * predator.velocity,
            steps_since_turn=predator.steps_since_turn + 1,
        )

    margins = _wall_margin_matrix(new_pos, new_vel, world.domain, params)
    worst = float(margins.max())
    if worst > FEASIBILITY_TOL:
        k = int(np.unravel_index(margins.argmax(), margins.shape)[0])
        raise SafetyViolation(
            f"boid {k} wall margin {worst:.3e} exceeds tolerance at step {world.step_index + 1}"
        )

    return World(
        positions=new_pos,
        velocities=new_vel,
        controls=new_ctl,
        modes=modes,
        degrees=degrees,
        margins=margins,
        predator=predator,
        domain=world.domain,
        step_index=world.step_index + 1,
    )


def _trace_of(world: World, cfg: WorldConfig) -> StepTrace:
    records = tuple(
        BoidRecord(
            id=i,
            px=float(world.positions[i, 0]),
            py=float(world.positions[i, 1]),
            vx=float(world.velocities[i, 0]),
            vy=float(world.velocities[i, 1]),
            ux=float(world.controls[i, 0]),
            uy=float(world.controls[i, 1]),
            mode=world.modes[i],
            degree=world.degrees[i],
            g_max=float(world.margins[i].max()),
        )
        for i in range(world.n_boids)
    )
    pred = world.predator
    pred_pos = (float(pred.position[0]), float(pred.position[1])) if pred is not None else None
    return StepTrace(t=world.time(cfg.dt), boids=records, predator_position=pred_pos)


def run(cfg: WorldConfig, world: World | None = None) -> Iterator[StepTrace]:
    """Execute duration/dt steps, yielding one StepTrace per step.

    Each trace carries the post-step state together with the control,
    mode, and neighborhood degree decided from the snapshot that began
    the step. Deterministic per seed.
    """
    if world is None:
        world = init_world(cfg)
    for _ in range(cfg.n_steps):
        world = step(world, cfg)
        yield _trace_of(world, cfg)
