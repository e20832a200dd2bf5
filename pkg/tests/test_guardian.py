import math

import numpy as np
import pytest

from corridor_planner.config import GuardianConfig
from corridor_planner.geometry import arc_length_parametrize
from corridor_planner.guardian import (
    GuardianLevel,
    GuardianVerdict,
    HealthMonitor,
    Reason,
    check,
    classify,
    most_severe,
    time_to_collision,
)
from corridor_planner.scenario import EgoState
from corridor_planner.trajectory import Diagnostics, braking_trajectory

LINE = arc_length_parametrize([[0, 0], [120, 0]])
T = np.arange(40) * 0.2
CFG = GuardianConfig()


def holding(ego: EgoState, provenance: str = "nominal", cycle_time: float = 0.0):
    """Plan that stays at the ego pose."""
    return braking_trajectory(
        ego, 0.0, T, provenance=provenance, diagnostics=Diagnostics(timings={"total": cycle_time})
    )


@pytest.mark.parametrize(
    "clearance, closing, expected",
    [
        (5.0, 5.0, 1.0),
        (0.0, 5.0, 0.0),
        (-1.0, 0.0, 0.0),
        (5.0, 0.0, math.inf),
        (5.0, -2.0, math.inf),
    ],
)
def test_time_to_collision(clearance, closing, expected):
    assert time_to_collision(clearance, closing, CFG.closing_eps) == expected


def test_classify_thresholds():
    assert classify(5.0, math.inf, CFG) == GuardianLevel.OK
    assert classify(5.0, 2.5, CFG) == GuardianLevel.SLOWDOWN
    assert classify(5.0, 1.0, CFG) == GuardianLevel.EMERGENCY_STOP
    assert classify(0.2, math.inf, CFG) == GuardianLevel.EMERGENCY_STOP
    assert classify(0.3, 3.0, CFG) == GuardianLevel.OK


@pytest.mark.slow
def test_classify_is_monotone():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        clearance, ttc = rng.uniform(0.0, 6.0, 2)
        worse_clearance = clearance * rng.uniform()
        worse_ttc = ttc * rng.uniform()
        assert classify(worse_clearance, worse_ttc, CFG) >= classify(clearance, ttc, CFG)
        assert classify(worse_clearance, ttc, CFG) >= classify(clearance, ttc, CFG)
        assert classify(clearance, worse_ttc, CFG) >= classify(clearance, ttc, CFG)


def test_oncoming_intruder_forces_an_emergency_stop(load_named, vehicle):
    scenario = load_named("intrusion")
    planned = holding(scenario.ego)
    verdict = check(scenario.ego, scenario.obstacles, planned, vehicle, scenario.line)
    assert verdict.level == GuardianLevel.EMERGENCY_STOP
    assert verdict.reason.trigger == "ttc"
    assert verdict.reason.obstacle_id == "intruder"
    assert verdict.reason.value == pytest.approx(1.0)
    assert verdict.override.provenance == "guardian_stop"


def test_closing_on_a_static_obstacle_slows_down(obstacle_box, vehicle):
    ego = EgoState(0.0, 0.0, 0.0, 2.0)
    verdict = check(ego, [obstacle_box("box", 7.0, 0.0)], holding(ego), vehicle, LINE)
    assert verdict.level == GuardianLevel.SLOWDOWN
    assert verdict.reason.value == pytest.approx(2.5)
    assert verdict.override.provenance == "guardian_slowdown"
    assert verdict.override.speed[-1] < 2.0


def test_tiny_clearance_is_an_emergency(obstacle_box, vehicle):
    ego = EgoState(0.0, 0.0, 0.0, 0.0)
    verdict = check(ego, [obstacle_box("box", 2.2, 0.0)], holding(ego), vehicle, LINE)
    assert verdict.level == GuardianLevel.EMERGENCY_STOP
    assert verdict.reason.trigger == "clearance"
    assert verdict.reason.value == pytest.approx(0.2)


def test_receding_obstacle_is_ignored(obstacle_box, vehicle):
    ego = EgoState(0.0, 0.0, math.pi, 2.0)
    verdict = check(ego, [obstacle_box("box", 5.0, 0.0)], holding(ego), vehicle, LINE)
    assert verdict.ok
    assert verdict.override is None


def test_worst_obstacle_wins(obstacle_box, vehicle):
    ego = EgoState(0.0, 0.0, 0.0, 2.0)
    obstacles = [obstacle_box("far", 7.0, 0.0), obstacle_box("near", 2.2, 0.0)]
    verdict = check(ego, obstacles, holding(ego), vehicle, LINE)
    assert verdict.reason.obstacle_id == "near"


def test_override_must_match_the_level():
    with pytest.raises(ValueError):
        GuardianVerdict(GuardianLevel.OK, override=holding(EgoState(0.0, 0.0, 0.0, 1.0)))
    with pytest.raises(ValueError):
        GuardianVerdict(GuardianLevel.SLOWDOWN, Reason("ttc"))


def test_repeated_fallbacks_escalate(vehicle):
    ego = EgoState(0.0, 0.0, 0.0, 1.0)
    monitor = HealthMonitor(CFG)
    fallback = holding(ego, provenance="fallback_stop")
    levels = [monitor.monitor_health(fallback, 0.1, ego, vehicle).level for _ in range(5)]
    assert levels == [
        GuardianLevel.OK,
        GuardianLevel.SLOWDOWN,
        GuardianLevel.SLOWDOWN,
        GuardianLevel.EMERGENCY_STOP,
        GuardianLevel.EMERGENCY_STOP,
    ]
    assert monitor.monitor_health(holding(ego), 0.1, ego, vehicle).ok
    assert monitor.consecutive_fallbacks == 0


def test_deadline_miss_slows_down(vehicle):
    ego = EgoState(0.0, 0.0, 0.0, 1.0)
    monitor = HealthMonitor()
    late = holding(ego, cycle_time=0.2)
    verdict = monitor.monitor_health(late, 0.1, ego, vehicle)
    assert verdict.level == GuardianLevel.SLOWDOWN
    assert verdict.reason.trigger == "deadline"
    assert monitor.monitor_health(late, 0.1, ego, vehicle, cycle_time=0.05).ok


def test_most_severe():
    ego = EgoState(0.0, 0.0, 0.0, 1.0)
    ok = GuardianVerdict(GuardianLevel.OK)
    slow = GuardianVerdict(GuardianLevel.SLOWDOWN, Reason("ttc", "a"), holding(ego))
    other = GuardianVerdict(GuardianLevel.SLOWDOWN, Reason("deadline"), holding(ego))
    assert most_severe(ok, slow) is slow
    assert most_severe(slow, other) is slow
    assert most_severe().ok
