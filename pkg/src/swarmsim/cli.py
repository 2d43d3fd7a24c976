"""Configuration ingestion, run orchestration, and artifact persistence.

Subcommands:

* ``run``       - simulate, writing trace.csv, metrics.json, manifest.json
                  (and predator.csv when the predator is enabled);
* ``metrics``   - recompute metrics from a previously written trace;
* ``oracle``    - randomized solver-vs-grid comparison, nonzero exit on
                  any tolerance breach;
* ``selfcheck`` - triangulation and corner-predicate oracles.

Exit codes: 0 success, 1 configuration error, 2 runtime assertion
(e.g. a wall-safety violation), 3 oracle mismatch. The SWARM_LOG
environment variable selects the log level (DEBUG, INFO, ...).

All files are deterministic for a given config and seed: floats are
written as their shortest round-trip decimal and JSON keys are emitted
in a fixed order, so golden-file comparisons are byte-exact.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .behavior import AgentMode
from .engine import BoidRecord, StepTrace, WorldConfig, run
from .errors import (
    IoError,
    ParseError,
    SwarmError,
    UnknownField,
    ValidationError,
)
from .metrics import SPEED_TRACKING_THRESHOLDS, RunMetrics, compute_metrics, histogram_csv

logger = logging.getLogger(__name__)

TRACE_HEADER = ["t", "id", "px", "py", "vx", "vy", "ux", "uy", "mode", "degree", "gmax"]

_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(WorldConfig)}
_BOOL_FIELDS = {"predator_enabled", "flocking_enabled"}
_INT_FIELDS = {"n_boids", "seed"}


def config_to_dict(cfg: WorldConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(WorldConfig)}


def config_from_dict(data: dict) -> WorldConfig:
    if not isinstance(data, dict):
        raise ParseError("config must be a JSON object")
    unknown = sorted(set(data) - set(_CONFIG_FIELDS))
    if unknown:
        raise UnknownField(f"unknown config field(s): {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if name in _BOOL_FIELDS:
            if not isinstance(value, bool):
                raise ValidationError(f"{name} must be a boolean, got {value!r}")
            kwargs[name] = value
        elif name in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError(f"{name} must be an integer, got {value!r}")
            kwargs[name] = value
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"{name} must be a number, got {value!r}")
            kwargs[name] = float(value)
    return WorldConfig(**kwargs)


def load_config(path) -> WorldConfig:
    """Read a JSON config; missing fields take the reference defaults,
    unknown fields are rejected."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc
    return config_from_dict(data)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace(stream, path) -> list[StepTrace]:
    """Write one CSV row per boid per step; returns the collected trace
    so callers can post-process without re-running."""
    collected: list[StepTrace] = []
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for st in stream:
                collected.append(st)
                t = _fmt(st.t)
                for b in st.boids:
                    writer.writerow(
                        [
                            t,
                            b.id,
                            _fmt(b.px),
                            _fmt(b.py),
                            _fmt(b.vx),
                            _fmt(b.vy),
                            _fmt(b.ux),
                            _fmt(b.uy),
                            b.mode.value,
                            b.degree,
                            _fmt(b.g_max),
                        ]
                    )
    except OSError as exc:
        raise IoError(f"cannot write trace to {path}: {exc}") from exc
    return collected


def read_trace(path) -> list[StepTrace]:
    """Inverse of write_trace (predator positions are not persisted in
    trace.csv, so they come back as None)."""
    steps: list[StepTrace] = []
    current_t = None
    boids: list[BoidRecord] = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != TRACE_HEADER:
                raise ParseError(f"unexpected trace header in {path}: {header}")
            for row in reader:
                t = float(row[0])
                if current_t is None or t != current_t:
                    if boids:
                        steps.append(StepTrace(t=current_t, boids=tuple(boids), predator_position=None))
                    current_t = t
                    boids = []
                boids.append(
                    BoidRecord(
                        id=int(row[1]),
                        px=float(row[2]),
                        py=float(row[3]),
                        vx=float(row[4]),
                        vy=float(row[5]),
                        ux=float(row[6]),
                        uy=float(row[7]),
                        mode=AgentMode(row[8]),
                        degree=int(row[9]),
                        g_max=float(row[10]),
                    )
                )
    except OSError as exc:
        raise IoError(f"cannot read trace from {path}: {exc}") from exc
    if boids:
        steps.append(StepTrace(t=current_t, boids=tuple(boids), predator_position=None))
    return steps


def _write_json_atomic(data: dict, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def build_manifest(
    cfg: WorldConfig, outputs: dict[str, str], wall_clock_s: float, metrics: RunMetrics
) -> dict:
    def num(x):
        return None if x is None or not math.isfinite(x) else x

    return {
        "artifact_version": __version__,
        "config": config_to_dict(cfg),
        "seed": int(cfg.seed),
        "outputs": outputs,
        "wall_clock_s": wall_clock_s,
        "speed_tracking": {
            "median_speed": num(metrics.median_speed),
            "median_abs_speed_error": num(metrics.median_abs_speed_error),
            "thresholds": {
                "median_speed_band_fraction_of_v_star": list(
                    SPEED_TRACKING_THRESHOLDS["median_speed_band"]
                ),
                "max_median_abs_speed_error": SPEED_TRACKING_THRESHOLDS[
                    "max_median_abs_speed_error"
                ],
            },
        },
    }


def _cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else WorldConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.predator is not None:
        overrides["predator_enabled"] = args.predator == "on"
    if args.duration is not None:
        overrides["duration"] = args.duration
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("running %d boids for %.1f s (seed %d)", cfg.n_boids, cfg.duration, cfg.seed)
    t0 = time.perf_counter()
    trace = write_trace(run(cfg), out_dir / "trace.csv")
    wall_clock = time.perf_counter() - t0
    outputs = {"trace": "trace.csv", "metrics": "metrics.json", "manifest": "manifest.json"}
    if cfg.predator_enabled:
        outputs["predator"] = "predator.csv"
        try:
            with open(out_dir / "predator.csv", "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["t", "ox", "oy"])
                for st in trace:
                    writer.writerow([_fmt(st.t), _fmt(st.predator_position[0]), _fmt(st.predator_position[1])])
        except OSError as exc:
            raise IoError(f"cannot write predator trace: {exc}") from exc
    if trace:
        m = compute_metrics(trace, cfg)
        _write_json_atomic(m.to_dict(), out_dir / "metrics.json")
        (out_dir / "histogram.csv").write_text(histogram_csv(m))
        outputs["histogram"] = "histogram.csv"
    else:
        m = RunMetrics({}, 0, float("nan"), float("nan"), float("nan"), float("nan"), None, {}, 0)
        _write_json_atomic({}, out_dir / "metrics.json")
    _write_json_atomic(build_manifest(cfg, outputs, wall_clock, m), out_dir / "manifest.json")
    logger.info("run complete in %.2f s -> %s", wall_clock, out_dir)
    print(f"wrote {out_dir / 'trace.csv'} ({len(trace)} steps x {cfg.n_boids} boids)")
    return 0


def _cmd_metrics(args) -> int:
    trace_path = Path(args.trace)
    if args.config:
        cfg = load_config(args.config)
    else:
        manifest_path = trace_path.parent / "manifest.json"
        if manifest_path.exists():
            cfg = config_from_dict(json.loads(manifest_path.read_text())["config"])
        else:
            cfg = WorldConfig()
    trace = read_trace(trace_path)
    m = compute_metrics(trace, cfg)
    _write_json_atomic(m.to_dict(), Path(args.out))
    print(f"wrote {args.out}")
    return 0


def _cmd_oracle(args) -> int:
    from .constraints import ConstraintKind, ControlConstraint, polytope_vertices
    from .solver import SolverConfig, SpeedObjective, grid_oracle, objective, solve_control

    rng = np.random.default_rng(args.seed)
    u_max, v_star, dt = 0.1, 0.125, 0.05
    worst = -np.inf
    breaches = 0
    for _ in range(args.instances):
        v = rng.normal(0.0, v_star, 2)
        nv = float(np.hypot(*v))
        if nv > 2 * v_star:
            v *= 2 * v_star / nv
        witness = rng.uniform(-u_max, u_max, 2)
        ccs = []
        for _ in range(int(rng.integers(0, 4))):
            a = rng.normal(0.0, 1.0, 2)
            a /= float(np.hypot(*a))
            a *= rng.uniform(0.2, 5.0)
            c = float(a @ witness) + abs(rng.normal(0.0, 0.05)) * float(np.hypot(*a))
            ccs.append(ControlConstraint(a, c, ConstraintKind.FLOCKING))
        verts = polytope_vertices(ccs, u_max)
        obj = SpeedObjective(v, v_star, dt)
        u = solve_control(obj, verts, SolverConfig(initial_step=u_max))
        gap = objective(u, obj) - grid_oracle(obj, ccs, u_max)[1]
        worst = max(worst, gap)
        if gap > 1e-4:
            breaches += 1
    print(f"{args.instances} instances, worst solver-vs-grid gap {worst:.3e}, breaches {breaches}")
    return 3 if breaches else 0


def _cmd_selfcheck(args) -> int:
    from .constraints import lemma1_infeasible, lemma2_infeasible, lemma3_infeasible
    from .geometry import delaunay_edges
    from .oracles import corner_margin, delaunay_edges_bruteforce, lemma_grid_feasible

    rng = np.random.default_rng(0)
    mismatches = 0
    for trial in range(60):
        n = int(rng.integers(3, 13))
        pts = rng.uniform(0.0, 6.0, (n, 2))
        if set(delaunay_edges(pts).edges) != delaunay_edges_bruteforce(pts):
            mismatches += 1
    print(f"delaunay: 60 point sets, {mismatches} mismatches")

    lemma_bad = 0
    tested = 0
    while tested < 60:
        th = rng.uniform(0, 2 * np.pi)
        n1 = np.array([np.cos(th), np.sin(th)])
        n2 = np.array([-np.sin(th), np.cos(th)])
        alpha = float(rng.uniform(1.0, 3.0))
        v = rng.uniform(0, 1) * n1 + rng.uniform(0, 1) * n2
        r = rng.normal(0, 1, 2)
        r *= rng.uniform(0.05, 2.0) / float(np.hypot(*r))
        rd = rng.normal(0, 0.2, 2)
        d = rng.normal(0, 1, 2)
        d *= rng.uniform(0.3, 2.0) / float(np.hypot(*d))
        dd = rng.normal(0, 0.2, 2)
        R, Gamma = 0.025, 0.25
        if np.hypot(*r) <= R or np.hypot(*d) <= Gamma:
            continue
        r_hat = r / np.hypot(*r)
        d_hat = d / np.hypot(*d)
        row_r = [float(np.hypot(*rd)) * float(n1 @ r_hat), float(np.hypot(*rd)) * float(n2 @ r_hat)]
        row_d = [-float(np.hypot(*dd)) * float(n1 @ d_hat), -float(np.hypot(*dd)) * float(n2 @ d_hat)]
        rhs_r = float(rd @ r_hat)
        rhs_d = -float(dd @ d_hat)
        cases = [
            (lambda: lemma1_infeasible(n1, n2, v, r, rd, R, alpha), [row_r], [rhs_r], 1e-6),
            (lambda: lemma2_infeasible(n1, n2, v, d, dd, Gamma, alpha), [row_d], [rhs_d], 1e-6),
            (
                lambda: lemma3_infeasible(n1, n2, v, r, rd, d, dd, R, Gamma, alpha),
                [row_r, row_d],
                [rhs_r, rhs_d],
                1.5e-3,
            ),
        ]
        used = False
        for predicate, rows, rhs, excl in cases:
            if abs(corner_margin(rows, rhs, alpha)) <= excl:
                continue
            used = True
            if predicate() != (not lemma_grid_feasible(rows, rhs, alpha)):
                lemma_bad += 1
        if used:
            tested += 1
    print(f"lemmas: {tested} corner states, {lemma_bad} mismatches")
    total_bad = mismatches + lemma_bad
    return 3 if total_bad else 0


def cli_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="swarmsim", description="Constraint-driven flocking simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate and write trace/metrics/manifest")
    p_run.add_argument("--config", type=str, default=None, help="JSON config (defaults otherwise)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--predator", choices=["on", "off"], default=None)
    p_run.add_argument("--duration", type=float, default=None)
    p_run.add_argument("--out", type=str, default="out")
    p_run.set_defaults(func=_cmd_run)

    p_met = sub.add_parser("metrics", help="recompute metrics from a trace")
    p_met.add_argument("--trace", type=str, required=True)
    p_met.add_argument("--out", type=str, required=True)
    p_met.add_argument("--config", type=str, default=None)
    p_met.set_defaults(func=_cmd_metrics)

    p_or = sub.add_parser("oracle", help="solver vs exhaustive-grid comparison")
    p_or.add_argument("--instances", type=int, default=1000)
    p_or.add_argument("--seed", type=int, default=0)
    p_or.set_defaults(func=_cmd_oracle)

    p_sc = sub.add_parser("selfcheck", help="triangulation and corner-predicate oracles")
    p_sc.set_defaults(func=_cmd_selfcheck)

    args = parser.parse_args(argv)
    logging.basicConfig(level=os.environ.get("SWARM_LOG", "WARNING").upper())
    try:
        return args.func(args)
    except (ParseError, ValidationError, UnknownField) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SwarmError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
