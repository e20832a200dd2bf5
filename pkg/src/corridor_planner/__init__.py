"""Decision and trajectory planning for a low-speed last-mile delivery vehicle."""

from .errors import PlannerError, PlanningFailure
from .planner import Planner, fallback_stop, plan_cycle
from .scenario import Scenario, load_scenario
from .trajectory import Trajectory

__all__ = [
    "Planner",
    "PlannerError",
    "PlanningFailure",
    "Scenario",
    "Trajectory",
    "fallback_stop",
    "load_scenario",
    "plan_cycle",
]
