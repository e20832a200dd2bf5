"""Low-level monitor that can override the planner.

``check`` looks at the ego and the obstacles as they are now; ``HealthMonitor``
watches the planner itself (deadline misses, repeated fallbacks). Both return
a :class:`GuardianVerdict` whose override trajectory replaces the plan.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np
from shapely.ops import nearest_points

from .config import GuardianConfig, PlannerConfig
from .geometry import ReferenceLine, vehicle_polygon
from .prediction import velocity
from .scenario import EgoState, Obstacle, VehicleParams
from .trajectory import Trajectory, braking_trajectory, retime

logger = logging.getLogger(__name__)


class GuardianLevel(IntEnum):
    OK = 0
    SLOWDOWN = 1
    EMERGENCY_STOP = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class Reason:
    trigger: str  # clearance | ttc | deadline | fallbacks | none
    obstacle_id: str | None = None
    value: float = math.inf
    threshold: float = math.inf

    def __str__(self) -> str:
        subject = f" {self.obstacle_id}" if self.obstacle_id else ""
        if self.trigger == "none":
            return "none"
        return f"{self.trigger}{subject}: {self.value:.3f} vs {self.threshold:.3f}"


NO_REASON = Reason("none")


@dataclass(frozen=True)
class GuardianVerdict:
    level: GuardianLevel
    reason: Reason = NO_REASON
    override: Trajectory | None = None

    def __post_init__(self) -> None:
        if (self.override is None) != (self.level == GuardianLevel.OK):
            raise ValueError("override must be present exactly when the level is not ok")

    @property
    def ok(self) -> bool:
        return self.level == GuardianLevel.OK


def classify(clearance: float, ttc: float, config: GuardianConfig) -> GuardianLevel:
    """Level for one obstacle; never lower when either input shrinks."""
    if clearance < config.d_emerg or ttc < config.ttc_emerg:
        return GuardianLevel.EMERGENCY_STOP
    if ttc < config.ttc_slow:
        return GuardianLevel.SLOWDOWN
    return GuardianLevel.OK


def time_to_collision(clearance: float, closing: float, eps: float) -> float:
    """Clearance over closing speed; infinite when the gap is not closing."""
    if clearance <= 0.0:
        return 0.0
    if closing <= eps:
        return math.inf
    return clearance / max(closing, eps)


def _override(
    level: GuardianLevel,
    planned: Trajectory,
    ego: EgoState,
    vehicle: VehicleParams,
    config: GuardianConfig,
) -> Trajectory | None:
    if level == GuardianLevel.EMERGENCY_STOP:
        return braking_trajectory(
            ego,
            vehicle.max_decel,
            planned.t,
            previous=planned,
            provenance="guardian_stop",
            diagnostics=planned.diagnostics,
        )
    if level == GuardianLevel.SLOWDOWN:
        return retime(planned, config.slowdown_factor, ego, vehicle.max_accel, vehicle.max_decel)
    return None


def _verdict(
    level: GuardianLevel,
    reason: Reason,
    planned: Trajectory,
    ego: EgoState,
    vehicle: VehicleParams,
    config: GuardianConfig,
) -> GuardianVerdict:
    if level != GuardianLevel.OK:
        logger.info("guardian %s: %s", level.label, reason)
    override = _override(level, planned, ego, vehicle, config)
    return GuardianVerdict(level, reason if level else NO_REASON, override)


def check(
    ego: EgoState,
    obstacles: Sequence[Obstacle],
    planned: Trajectory,
    vehicle: VehicleParams,
    line: ReferenceLine,
    config: PlannerConfig | None = None,
) -> GuardianVerdict:
    """Clearance and time-to-collision check against the current obstacle poses.

    The most severe obstacle wins; ties go to the smallest TTC.
    """
    config = config or PlannerConfig()
    gcfg = config.guardian
    body = vehicle_polygon(vehicle.length, vehicle.width, ego.pose)
    ego_velocity = ego.speed * np.array([math.cos(ego.heading), math.sin(ego.heading)])

    worst: tuple[int, float, float, Reason] | None = None
    for ob in obstacles:
        poly = ob.polygon()
        clearance = float(body.distance(poly))
        closing = 0.0
        if clearance > 0.0:
            near_ego, near_ob = nearest_points(body, poly)
            gap = np.array([near_ob.x - near_ego.x, near_ob.y - near_ego.y])
            direction = gap / np.linalg.norm(gap)
            relative = ego_velocity - velocity(ob, line, config.prediction)
            closing = float(relative @ direction)
        ttc = time_to_collision(clearance, closing, gcfg.closing_eps)
        level = classify(clearance, ttc, gcfg)
        if level == GuardianLevel.OK:
            continue
        if clearance < gcfg.d_emerg:
            reason = Reason("clearance", ob.id, clearance, gcfg.d_emerg)
        elif level == GuardianLevel.EMERGENCY_STOP:
            reason = Reason("ttc", ob.id, ttc, gcfg.ttc_emerg)
        else:
            reason = Reason("ttc", ob.id, ttc, gcfg.ttc_slow)
        key = (-int(level), ttc, clearance, reason)
        if worst is None or key[:3] < worst[:3]:
            worst = key

    if worst is None:
        return GuardianVerdict(GuardianLevel.OK)
    level = GuardianLevel(-worst[0])
    return _verdict(level, worst[3], planned, ego, vehicle, gcfg)


class HealthMonitor:
    """Counts consecutive fallback cycles and watches the cycle deadline."""

    def __init__(self, config: GuardianConfig | None = None):
        self.config = config or GuardianConfig()
        self.consecutive_fallbacks = 0

    def reset(self) -> None:
        self.consecutive_fallbacks = 0

    def monitor_health(
        self,
        trajectory: Trajectory,
        deadline: float,
        ego: EgoState,
        vehicle: VehicleParams,
        cycle_time: float | None = None,
    ) -> GuardianVerdict:
        cfg = self.config
        if trajectory.provenance == "fallback_stop":
            self.consecutive_fallbacks += 1
        else:
            self.consecutive_fallbacks = 0
        elapsed = trajectory.diagnostics.cycle_time if cycle_time is None else cycle_time

        count = self.consecutive_fallbacks
        if count >= cfg.fallback_emergency_count:
            level = GuardianLevel.EMERGENCY_STOP
            reason = Reason("fallbacks", None, count, cfg.fallback_emergency_count)
        elif count >= cfg.fallback_slowdown_count:
            level = GuardianLevel.SLOWDOWN
            reason = Reason("fallbacks", None, count, cfg.fallback_slowdown_count)
        elif elapsed > deadline:
            level = GuardianLevel.SLOWDOWN
            reason = Reason("deadline", None, elapsed, deadline)
        else:
            return GuardianVerdict(GuardianLevel.OK)
        return _verdict(level, reason, trajectory, ego, vehicle, cfg)


def most_severe(*verdicts: GuardianVerdict) -> GuardianVerdict:
    """Highest level; the first verdict wins ties."""
    return max(verdicts, key=lambda v: int(v.level), default=GuardianVerdict(GuardianLevel.OK))
