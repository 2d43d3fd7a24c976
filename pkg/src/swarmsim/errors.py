"""Exception hierarchy for the swarm simulator.

Every error that callers may want to distinguish gets its own class; all
inherit from SwarmError so coarse handling (e.g. the CLI's exit codes)
stays simple.
"""


class SwarmError(Exception):
    """Base class for all swarmsim errors."""


# ---------------------------------------------------------------- geometry
class TooFewPoints(SwarmError):
    """Triangulation requires at least two points."""


class DuplicatePoints(SwarmError):
    """Two input points coincide within the minimum separation (1e-9 m)."""


class IndexOutOfRange(SwarmError):
    """Agent index does not exist in the neighbor graph."""


class EmptyNeighborhood(SwarmError):
    """An agent has no neighbors; cannot summarize."""


# -------------------------------------------------------------- constraints
class StateUnsafe(SwarmError):
    """A wall safety margin is positive: the state is outside the safe set."""


class PremiseViolated(SwarmError):
    """A corner-incompatibility predicate was called outside its premises."""


# ------------------------------------------------------------------- solver
class EmptyPolytope(SwarmError):
    """The feasible control polytope is empty."""


# ----------------------------------------------------------------- behavior
class Infeasible(SwarmError):
    """Even the box+walls control set is empty; indicates a tolerance bug."""


# ------------------------------------------------------------------- engine
class PackingFailed(SwarmError):
    """Could not place all boids without overlap (domain too crowded)."""


class SafetyViolation(SwarmError):
    """A wall margin exceeded tolerance after a step; bug detector."""


# ------------------------------------------------------------------ metrics
class EmptyTrace(SwarmError):
    """Metrics requested on an empty trace."""


# ------------------------------------------------------------------- cli-io
class ParseError(SwarmError):
    """Config file is not well-formed JSON."""


class ValidationError(SwarmError):
    """Config violates an invariant (e.g. alpha < 1)."""


class UnknownField(SwarmError):
    """Config contains a field that is not part of the schema."""


class IoError(SwarmError):
    """Trace or manifest could not be written."""
