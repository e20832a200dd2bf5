"""Exception hierarchy for corridor-planner."""

from __future__ import annotations


class PlannerError(Exception):
    """Base class for every error raised by this package."""


# ── geometry ──────────────────────────────────────────────────


class DegeneratePolyline(PlannerError):
    """Fewer than two distinct points in a reference polyline."""


class AmbiguousProjection(PlannerError):
    """Two far-apart stations are equally close to the projected point."""


class StationOutOfRange(PlannerError):
    """A station lies outside [0, length] of its reference line."""


# ── ingestion ─────────────────────────────────────────────────


class ParseError(PlannerError):
    """Malformed scenario text or config; ``locus`` names the offending field or line."""

    def __init__(self, message: str, locus: str = ""):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


class ValidationError(PlannerError):
    """A parsed scenario violates one or more invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ShapeMismatch(PlannerError):
    """Reference profile arrays do not match the grid size."""


class TraceIOError(PlannerError):
    """Trace artifacts could not be written."""


# ── planning phases ───────────────────────────────────────────


class PlanningFailure(PlannerError):
    """A planning phase could not produce a result; the planner falls back to a stop."""


class NoRoom(PlanningFailure):
    """The road leaves no lateral sample for the vehicle."""


class AllBlocked(PlanningFailure):
    """Every lattice path to the terminal station has infinite cost."""


class TunnelCollapse(PlanningFailure):
    """Tunnel bounds cross or no longer contain the coarse trajectory."""


class StInfeasible(PlanningFailure):
    """The s-t corridor is empty at some time sample."""


class InfeasibleBounds(PlanningFailure):
    """Constraint bounds are contradictory before the solver runs."""


class SolverFailure(PlanningFailure):
    """The QP solver ended without an optimal status."""
