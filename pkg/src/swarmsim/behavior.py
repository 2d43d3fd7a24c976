"""Per-step mode selection: event-triggered constraint relaxation.

Each agent is, at every step, in exactly one of three modes determined
memorylessly from the current snapshot:

* ``NOMINAL`` - walls, flocking, and predator constraints are jointly
  feasible and all are enforced;
* ``STRAINED`` - the full set is empty, so the flocking constraint is
  dropped and walls + predator are enforced;
* ``EVASIVE`` - walls + predator are also empty, so the predator
  constraint is dropped too and only walls (and the actuation box)
  remain.

Wall and box constraints are never dropped: for a safe state the walls
set is guaranteed nonempty, and an empty walls polygon is reported as
``Infeasible`` because it can only arise from an integration or
tolerance bug upstream.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .constraints import ControlConstraint, _polytope_array
from .errors import Infeasible


class AgentMode(Enum):
    NOMINAL = "N"
    STRAINED = "S"
    EVASIVE = "E"


def _cascade(
    wall_cs: list[ControlConstraint],
    flock_c: ControlConstraint | None,
    pred_c: ControlConstraint | None,
    u_max: float,
) -> tuple[AgentMode, list[ControlConstraint], np.ndarray]:
    """Mode, active constraints, and the feasible polygon (saves callers
    re-enumerating the vertices they need for the solve)."""
    walls = list(wall_cs)
    nominal = walls + [c for c in (flock_c, pred_c) if c is not None]
    verts = _polytope_array(nominal, u_max)
    if len(verts):
        return AgentMode.NOMINAL, nominal, verts
    if flock_c is not None:
        strained = walls + ([pred_c] if pred_c is not None else [])
        verts = _polytope_array(strained, u_max)
        if len(verts):
            return AgentMode.STRAINED, strained, verts
    if pred_c is not None:
        verts = _polytope_array(walls, u_max)
        if len(verts):
            return AgentMode.EVASIVE, walls, verts
    raise Infeasible(
        "box+walls control set is empty; this contradicts the recursive "
        "feasibility guarantee and indicates an integration or tolerance bug"
    )


def select_mode(
    wall_cs: list[ControlConstraint],
    flock_c: ControlConstraint | None,
    pred_c: ControlConstraint | None,
    u_max: float,
) -> tuple[AgentMode, list[ControlConstraint]]:
    """Relaxation cascade: try the full constraint set, then drop
    flocking, then drop the predator term.

    Returns the selected mode and the constraint list actually handed
    to the solver (walls always included; the box is implicit).
    """
    mode, active, _ = _cascade(wall_cs, flock_c, pred_c, u_max)
    return mode, active
