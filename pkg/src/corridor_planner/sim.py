"""Closed-loop simulation: plan, guard, advance, record."""

from __future__ import annotations

import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PlannerError
from .geometry import Pose, to_frenet, vehicle_polygon
from .guardian import GuardianLevel, HealthMonitor, check, most_severe
from .planner import Planner
from .prediction import propagate
from .scenario import EgoState, Obstacle, Scenario, StaticMotion

logger = logging.getLogger(__name__)

EVENTS = ("fallback", "guardian", "collision", "model_gap", "goal_reached", "stalled")


@dataclass
class CycleRecord:
    cycle: int
    t: float  # s
    ego: EgoState  # at the start of the cycle
    station: float  # m, ego s on the reference line
    provenance: str  # of the applied trajectory
    planner_provenance: str
    guardian_level: str
    guardian_reason: str
    cycle_ms: float
    timings: dict[str, float] = field(default_factory=dict)
    qp_times: dict[str, float] = field(default_factory=dict)  # s, solver time per QP that ran
    decisions: dict[str, str] = field(default_factory=dict)
    fallback_reason: str | None = None
    events: list[str] = field(default_factory=list)


@dataclass
class SimTrace:
    scenario: Scenario
    seed: int
    records: list[CycleRecord] = field(default_factory=list)
    outcome: str = "timeout"
    final_ego: EgoState | None = None

    @property
    def cycles(self) -> int:
        return len(self.records)

    def event_counts(self) -> dict[str, int]:
        counts = Counter(e for r in self.records for e in r.events)
        return {name: counts.get(name, 0) for name in EVENTS}

    def yield_cycles(self) -> int:
        return sum(1 for r in self.records if "yield" in r.decisions.values())

    def emergency_cycles(self) -> int:
        return sum(1 for r in self.records if r.guardian_level == "emergency_stop")

    def expectation_met(self) -> bool | None:
        expect = self.scenario.expect
        if expect is None:
            return None
        if expect.outcome is not None and expect.outcome != self.outcome:
            return False
        return self.yield_cycles() >= expect.min_yield


def _station(scenario: Scenario, ego: EgoState) -> float:
    try:
        return to_frenet((ego.x, ego.y), scenario.line).s
    except PlannerError:
        return math.nan


def _perceive(
    obstacles: tuple[Obstacle, ...], noise: float, rng: np.random.Generator
) -> tuple[Obstacle, ...]:
    """Obstacle poses as the planner sees them."""
    if noise <= 0.0:
        return obstacles
    seen = []
    for ob in obstacles:
        dx, dy = rng.normal(0.0, noise, 2)
        seen.append(replace(ob, pose=Pose(ob.pose.x + dx, ob.pose.y + dy, ob.pose.heading)))
    return tuple(seen)


def _collides(scenario: Scenario, ego: EgoState, obstacles: tuple[Obstacle, ...]) -> str | None:
    body = vehicle_polygon(scenario.vehicle.length, scenario.vehicle.width, ego.pose)
    for ob in obstacles:
        if body.intersects(ob.polygon()):
            return ob.id
    return None


def simulate(
    scenario: Scenario, max_cycles: int = 1200, seed: int = 0, planner: Planner | None = None
) -> SimTrace:
    """Run the planner in closed loop until goal, collision, stall or max_cycles."""
    cfg = scenario.config
    period = cfg.planner.replan_period
    substeps = cfg.sim.substeps
    line = scenario.line
    rng = np.random.default_rng(seed)
    planner = planner or Planner()
    monitor = HealthMonitor(cfg.guardian)
    trace = SimTrace(scenario=scenario, seed=seed)

    ego = scenario.ego
    truth = scenario.obstacles
    previous = None
    at_rest = 0.0
    for cycle in range(max_cycles):
        t = cycle * period
        seen = _perceive(truth, cfg.sim.obstacle_noise, rng)
        snapshot = replace(scenario, ego=ego, obstacles=seen)

        started = time.perf_counter()
        planned = planner.plan(snapshot, previous)
        elapsed = time.perf_counter() - started
        cycle_time = elapsed if cfg.sim.clock == "wall" else 0.0

        safety = check(ego, seen, planned, scenario.vehicle, line, cfg)
        health = monitor.monitor_health(planned, cfg.deadline, ego, scenario.vehicle, cycle_time)
        verdict = most_severe(safety, health)
        applied = verdict.override or planned

        events: list[str] = []
        if planned.provenance == "fallback_stop":
            events.append("fallback")
        if verdict.level != GuardianLevel.OK:
            events.append("guardian")

        hit = None
        for k in range(1, substeps + 1):
            tau = period * k / substeps
            moved = tuple(
                ob
                if isinstance(ob.motion, StaticMotion)
                else propagate(ob, line, tau, cfg.prediction)
                for ob in truth
            )
            hit = _collides(scenario, applied.state_at(tau), moved)
            if hit is not None:
                break

        record = CycleRecord(
            cycle=cycle,
            t=t,
            ego=ego,
            station=_station(scenario, ego),
            provenance=applied.provenance,
            planner_provenance=planned.provenance,
            guardian_level=verdict.level.label,
            guardian_reason=str(verdict.reason),
            cycle_ms=1e3 * cycle_time,
            timings=dict(planned.diagnostics.timings),
            qp_times=dict(planned.diagnostics.solve_times),
            decisions=dict(planned.diagnostics.decisions),
            fallback_reason=planned.diagnostics.fallback_reason,
            events=events,
        )
        trace.records.append(record)

        if hit is not None:
            events.append("collision")
            if applied.provenance == "nominal":
                events.append("model_gap")
            trace.outcome = "collision"
            trace.final_ego = applied.state_at(tau)
            logger.info("%s: collision with %s at t=%.2f", scenario.name, hit, t + tau)
            return trace

        ego = applied.state_at(period)
        truth = tuple(propagate(ob, line, period, cfg.prediction) for ob in truth)
        previous = applied

        s = _station(scenario, ego)
        stopped = ego.speed < cfg.sim.stop_speed
        if cfg.sim.stop_at_goal:
            arrived = abs(s - scenario.goal_s) < cfg.sim.goal_tolerance and stopped
        else:
            arrived = s > scenario.goal_s - cfg.sim.goal_tolerance
        if arrived:
            events.append("goal_reached")
            trace.outcome = "goal_reached"
            break

        at_rest = at_rest + period if stopped else 0.0
        if at_rest >= cfg.sim.stall_time - 1e-9:
            events.append("stalled")
            trace.outcome = "stopped"
            break

    trace.final_ego = ego
    logger.info(
        "%s: %s after %d cycles (%s)",
        scenario.name or "scenario",
        trace.outcome,
        trace.cycles,
        ", ".join(f"{k}={v}" for k, v in trace.event_counts().items() if v),
    )
    return trace
