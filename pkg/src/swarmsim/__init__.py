"""Constraint-driven cluster flocking: geometry, constraints, control, simulation."""

__version__ = "0.1.0"
