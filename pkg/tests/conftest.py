from __future__ import annotations

import copy
import json
from dataclasses import replace
from pathlib import Path

import pytest

from corridor_planner.config import PlannerConfig
from corridor_planner.geometry import Pose, rectangle
from corridor_planner.scenario import (
    EgoState,
    Obstacle,
    Scenario,
    StaticMotion,
    VehicleParams,
    load_scenario,
)

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"

VEHICLE = VehicleParams(
    length=2.0,
    width=1.0,
    wheelbase=1.4,
    max_speed=7.0,
    max_accel=1.5,
    max_decel=4.0,
    max_jerk=3.0,
    max_curvature=0.3,
)

STRAIGHT = ((0.0, 0.0), (30.0, 0.0), (60.0, 0.0), (90.0, 0.0), (120.0, 0.0))

SCENARIO_TEXT = {
    "name": "unit",
    "reference_line": [[0, 0], [50, 0], [100, 0]],
    "ego": {"x": 0, "y": 0, "heading": 0, "speed": 2.0},
    "vehicle": {
        "length": 2.0,
        "width": 1.0,
        "wheelbase": 1.4,
        "max_speed": 7.0,
        "max_accel": 1.5,
        "max_decel": 4.0,
        "max_jerk": 3.0,
        "max_curvature": 0.3,
    },
    "obstacles": [
        {
            "id": "parked",
            "footprint": [[1, 0.5], [-1, 0.5], [-1, -0.5], [1, -0.5]],
            "pose": {"x": 30, "y": -1.5, "heading": 0},
        }
    ],
    "goal_s": 80,
    "road_half_width": 2.5,
}


def box(
    obstacle_id: str,
    x: float,
    y: float,
    length: float = 2.0,
    width: float = 1.0,
    heading: float = 0.0,
    motion=None,
) -> Obstacle:
    footprint = tuple((float(px), float(py)) for px, py in rectangle(length, width))
    return Obstacle(
        id=obstacle_id,
        footprint=footprint,
        pose=Pose(x, y, heading),
        motion=motion or StaticMotion(),
    )


@pytest.fixture
def vehicle() -> VehicleParams:
    return VEHICLE


@pytest.fixture
def obstacle_box():
    return box


@pytest.fixture
def make_scenario():
    """Straight 120 m road, ego at the origin; keyword arguments override fields."""

    def build(
        obstacles=(),
        ego: EgoState | None = None,
        goal_s: float = 100.0,
        road_half_width: float = 2.0,
        config: PlannerConfig | None = None,
        polyline=STRAIGHT,
        **extra,
    ) -> Scenario:
        return Scenario(
            polyline=tuple(polyline),
            ego=ego or EgoState(0.0, 0.0, 0.0, 0.0),
            vehicle=extra.pop("vehicle", VEHICLE),
            obstacles=tuple(obstacles),
            goal_s=goal_s,
            road_half_width=road_half_width,
            config=config or PlannerConfig(),
            name=extra.pop("name", "unit"),
            **extra,
        )

    return build


@pytest.fixture
def load_named():
    def load(name: str, **changes) -> Scenario:
        scenario = load_scenario((SCENARIO_DIR / f"{name}.json").read_text(encoding="utf-8"))
        return replace(scenario, **changes) if changes else scenario

    return load


@pytest.fixture
def scenario_text():
    """A fresh, valid scenario document and a serializer for it."""
    data = copy.deepcopy(SCENARIO_TEXT)
    return data, lambda d=data: json.dumps(d)


@pytest.fixture
def scenario_paths() -> list[Path]:
    return sorted(SCENARIO_DIR.glob("*.json"))
