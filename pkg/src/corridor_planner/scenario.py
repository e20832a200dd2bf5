"""Scenario data model and scenario-file ingestion.

A scenario file is UTF-8 JSON:

    {
      "name": "crossing_pedestrian",            (optional)
      "description": "...",                     (optional)
      "reference_line": [[x, y], ...],
      "ego": {"x", "y", "heading", "speed", "accel", "curvature"},
      "vehicle": {"length", "width", "wheelbase", "max_speed", "max_accel",
                  "max_decel", "max_jerk", "max_curvature"},
      "obstacles": [{"id", "footprint": [[x, y], ...], "pose": {"x", "y", "heading"},
                     "motion": {"type": "static" | "constant_velocity" | "lane_follow"
                                        | "scripted", ...}}],
      "goal_s": 100.0,
      "road_half_width": 2.0,
      "config": {"path": {"horizon": 60.0}, ...},   (optional)
      "expect": {"outcome": "goal_reached", "min_yield": 1}   (optional)
    }

Unknown keys anywhere are a ParseError.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Union

import numpy as np
from shapely.geometry import Polygon

from .config import PlannerConfig, config_from_dict, config_to_dict, validate_config
from .errors import DegeneratePolyline, ParseError, ValidationError
from .geometry import (
    FrenetPose,
    Pose,
    ReferenceLine,
    arc_length_parametrize,
    from_frenet,
    place_footprint,
    to_frenet,
    wrap_angle,
)

OUTCOMES = ("goal_reached", "stopped", "collision", "timeout")


@dataclass(frozen=True)
class VehicleParams:
    length: float  # m
    width: float  # m
    wheelbase: float  # m
    max_speed: float  # m/s
    max_accel: float  # m/s²
    max_decel: float  # m/s², positive magnitude
    max_jerk: float  # m/s³
    max_curvature: float  # 1/m


@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    heading: float
    speed: float
    accel: float = 0.0
    curvature: float = 0.0

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.heading)


# ── motion specs ──────────────────────────────────────────────


@dataclass(frozen=True)
class StaticMotion:
    kind = "static"


@dataclass(frozen=True)
class ConstantVelocityMotion:
    speed: float  # m/s
    heading: float  # rad
    kind = "constant_velocity"


@dataclass(frozen=True)
class LaneFollowMotion:
    speed: float  # m/s along the lane
    lane: tuple[tuple[float, float], ...] | None = None  # None = scenario reference line
    kind = "lane_follow"


@dataclass(frozen=True)
class ScriptedMotion:
    times: tuple[float, ...]  # s, relative to now
    poses: tuple[Pose, ...]
    kind = "scripted"

    def pose_at(self, t: float) -> Pose:
        """Interpolated pose; holds the first/last pose outside the script."""
        times = np.asarray(self.times)
        if len(times) == 1 or t <= times[0]:
            return self.poses[0]
        if t >= times[-1]:
            return self.poses[-1]
        i = int(np.searchsorted(times, t, side="right")) - 1
        a, b = self.poses[i], self.poses[i + 1]
        u = (t - times[i]) / (times[i + 1] - times[i])
        dh = wrap_angle(b.heading - a.heading)
        return Pose(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), wrap_angle(a.heading + u * dh))


Motion = Union[StaticMotion, ConstantVelocityMotion, LaneFollowMotion, ScriptedMotion]


@dataclass(frozen=True)
class Obstacle:
    id: str
    footprint: tuple[tuple[float, float], ...]  # body frame, m
    pose: Pose
    motion: Motion

    def polygon(self, pose: Pose | None = None) -> Polygon:
        return place_footprint(self.footprint, pose or self.pose)


@dataclass(frozen=True)
class Expectation:
    outcome: str | None = None
    min_yield: int = 0


@dataclass(frozen=True)
class Scenario:
    polyline: tuple[tuple[float, float], ...]
    ego: EgoState
    vehicle: VehicleParams
    obstacles: tuple[Obstacle, ...]
    goal_s: float
    road_half_width: float
    config: PlannerConfig = field(default_factory=PlannerConfig)
    name: str = ""
    description: str = ""
    expect: Expectation | None = None
    line: ReferenceLine = field(default=None, compare=False, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.line is None:
            object.__setattr__(self, "line", arc_length_parametrize(self.polyline))

    def with_config(self, config: PlannerConfig) -> Scenario:
        return replace(self, config=config)


# ── parsing helpers ───────────────────────────────────────────


def _obj(value: Any, locus: str, allowed: set[str], required: set[str]) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise ParseError("expected an object", locus)
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise ParseError(f"unknown key {unknown[0]!r}", locus)
    missing = sorted(required - set(value))
    if missing:
        raise ParseError(f"missing key {missing[0]!r}", locus)
    return value


def _num(value: Any, locus: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", locus)
    if not math.isfinite(value):
        raise ParseError("expected a finite number", locus)
    return float(value)


def _points(value: Any, locus: str) -> tuple[tuple[float, float], ...]:
    if not isinstance(value, list):
        raise ParseError("expected an array of [x, y] pairs", locus)
    out = []
    for i, item in enumerate(value):
        if not isinstance(item, list) or len(item) != 2:
            raise ParseError("expected an [x, y] pair", f"{locus}[{i}]")
        out.append((_num(item[0], f"{locus}[{i}][0]"), _num(item[1], f"{locus}[{i}][1]")))
    return tuple(out)


def _pose(value: Any, locus: str) -> Pose:
    body = _obj(value, locus, {"x", "y", "heading"}, {"x", "y", "heading"})
    return Pose(
        _num(body["x"], f"{locus}.x"),
        _num(body["y"], f"{locus}.y"),
        wrap_angle(_num(body["heading"], f"{locus}.heading")),
    )


def _motion(value: Any, locus: str) -> Motion:
    if not isinstance(value, Mapping) or "type" not in value:
        raise ParseError("expected a tagged object with a 'type' key", locus)
    kind = value["type"]
    if kind == "static":
        _obj(value, locus, {"type"}, set())
        return StaticMotion()
    if kind == "constant_velocity":
        body = _obj(value, locus, {"type", "speed", "heading"}, {"speed", "heading"})
        return ConstantVelocityMotion(
            speed=_num(body["speed"], f"{locus}.speed"),
            heading=wrap_angle(_num(body["heading"], f"{locus}.heading")),
        )
    if kind == "lane_follow":
        body = _obj(value, locus, {"type", "speed", "lane"}, {"speed"})
        lane = _points(body["lane"], f"{locus}.lane") if "lane" in body else None
        return LaneFollowMotion(speed=_num(body["speed"], f"{locus}.speed"), lane=lane)
    if kind == "scripted":
        body = _obj(value, locus, {"type", "poses"}, {"poses"})
        if not isinstance(body["poses"], list) or not body["poses"]:
            raise ParseError("expected a non-empty array", f"{locus}.poses")
        times, poses = [], []
        for i, item in enumerate(body["poses"]):
            item_locus = f"{locus}.poses[{i}]"
            entry = _obj(item, item_locus, {"t", "x", "y", "heading"}, {"t", "x", "y", "heading"})
            times.append(_num(entry["t"], f"{item_locus}.t"))
            poses.append(
                _pose({k: entry[k] for k in ("x", "y", "heading")}, item_locus)
            )
        return ScriptedMotion(times=tuple(times), poses=tuple(poses))
    raise ParseError(f"unknown motion type {kind!r}", f"{locus}.type")


_TOP_KEYS = {
    "name",
    "description",
    "reference_line",
    "ego",
    "vehicle",
    "obstacles",
    "goal_s",
    "road_half_width",
    "config",
    "expect",
}
_VEHICLE_KEYS = {
    "length",
    "width",
    "wheelbase",
    "max_speed",
    "max_accel",
    "max_decel",
    "max_jerk",
    "max_curvature",
}
_EGO_KEYS = {"x", "y", "heading", "speed", "accel", "curvature"}


def _parse(data: Any) -> tuple[Scenario | None, list[str]]:
    top = _obj(
        data,
        "scenario",
        _TOP_KEYS,
        {"reference_line", "ego", "vehicle", "goal_s", "road_half_width"},
    )

    polyline = _points(top["reference_line"], "reference_line")

    ego_body = _obj(top["ego"], "ego", _EGO_KEYS, {"x", "y", "heading", "speed"})
    ego = EgoState(
        x=_num(ego_body["x"], "ego.x"),
        y=_num(ego_body["y"], "ego.y"),
        heading=wrap_angle(_num(ego_body["heading"], "ego.heading")),
        speed=_num(ego_body["speed"], "ego.speed"),
        accel=_num(ego_body.get("accel", 0.0), "ego.accel"),
        curvature=_num(ego_body.get("curvature", 0.0), "ego.curvature"),
    )

    vehicle_body = _obj(top["vehicle"], "vehicle", _VEHICLE_KEYS, _VEHICLE_KEYS)
    vehicle = VehicleParams(**{k: _num(v, f"vehicle.{k}") for k, v in vehicle_body.items()})

    obstacles = []
    raw_obstacles = top.get("obstacles", [])
    if not isinstance(raw_obstacles, list):
        raise ParseError("expected an array", "obstacles")
    for i, item in enumerate(raw_obstacles):
        locus = f"obstacles[{i}]"
        body = _obj(item, locus, {"id", "footprint", "pose", "motion"}, {"id", "footprint", "pose"})
        if not isinstance(body["id"], (str, int)) or isinstance(body["id"], bool):
            raise ParseError("expected a string id", f"{locus}.id")
        obstacles.append(
            Obstacle(
                id=str(body["id"]),
                footprint=_points(body["footprint"], f"{locus}.footprint"),
                pose=_pose(body["pose"], f"{locus}.pose"),
                motion=_motion(body.get("motion", {"type": "static"}), f"{locus}.motion"),
            )
        )

    expect = None
    if "expect" in top:
        body = _obj(top["expect"], "expect", {"outcome", "min_yield"}, set())
        outcome = body.get("outcome")
        if outcome is not None and outcome not in OUTCOMES:
            raise ParseError(f"unknown outcome {outcome!r}", "expect.outcome")
        min_yield = body.get("min_yield", 0)
        if isinstance(min_yield, bool) or not isinstance(min_yield, int):
            raise ParseError("expected an integer", "expect.min_yield")
        expect = Expectation(outcome=outcome, min_yield=min_yield)

    for key in ("name", "description"):
        if key in top and not isinstance(top[key], str):
            raise ParseError("expected a string", key)

    config = config_from_dict(top.get("config"))

    try:
        line = arc_length_parametrize(polyline)
    except DegeneratePolyline as e:
        return None, [f"reference line: {e}"]

    scenario = Scenario(
        polyline=polyline,
        ego=ego,
        vehicle=vehicle,
        obstacles=tuple(obstacles),
        goal_s=_num(top["goal_s"], "goal_s"),
        road_half_width=_num(top["road_half_width"], "road_half_width"),
        config=config,
        name=top.get("name", ""),
        description=top.get("description", ""),
        expect=expect,
        line=line,
    )
    return scenario, []


def load_scenario(text: str) -> Scenario:
    """Parse and validate scenario-file text.

    Raises:
        ParseError: malformed JSON or an unexpected/missing field.
        ValidationError: the parsed scenario breaks one or more invariants.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, f"line {e.lineno} column {e.colno}") from e
    scenario, violations = _parse(data)
    if scenario is not None:
        violations = validate(scenario)
    if violations:
        raise ValidationError(violations)
    return scenario


def validate(scenario: Scenario) -> list[str]:
    """Return every violated invariant; empty iff the scenario is valid."""
    problems: list[str] = []
    v = scenario.vehicle
    for name in _VEHICLE_KEYS:
        if getattr(v, name) <= 0:
            problems.append(f"vehicle.{name}: must be > 0")
    if v.length <= v.wheelbase:
        problems.append("vehicle: length must exceed wheelbase")

    ego = scenario.ego
    if ego.speed < 0:
        problems.append("ego: speed must be >= 0")
    if v.max_curvature > 0 and abs(ego.curvature) > v.max_curvature:
        problems.append("ego: |curvature| exceeds vehicle max_curvature")

    seen: set[str] = set()
    for ob in scenario.obstacles:
        if ob.id in seen:
            problems.append(f"duplicate obstacle id {ob.id}")
        seen.add(ob.id)
        if len(ob.footprint) < 3:
            problems.append(f"obstacle {ob.id}: footprint needs ≥ 3 vertices")
        else:
            poly = Polygon(ob.footprint)
            if not poly.is_valid or poly.area <= 0:
                problems.append(f"obstacle {ob.id}: footprint must have positive area")
            elif poly.convex_hull.area - poly.area > 1e-9 * max(poly.area, 1.0):
                problems.append(f"obstacle {ob.id}: footprint must be convex")
        problems += _motion_problems(ob)

    if scenario.goal_s > scenario.line.length + 1e-9:
        problems.append("goal_s beyond reference line length")
    if scenario.goal_s < 0:
        problems.append("goal_s must be >= 0")
    if scenario.road_half_width <= v.width / 2.0:
        problems.append("road narrower than vehicle")

    problems += validate_config(scenario.config)
    return problems


def _motion_problems(ob: Obstacle) -> list[str]:
    m = ob.motion
    if isinstance(m, (ConstantVelocityMotion, LaneFollowMotion)) and m.speed < 0:
        return [f"obstacle {ob.id}: speed must be >= 0"]
    if isinstance(m, LaneFollowMotion) and m.lane is not None:
        try:
            arc_length_parametrize(m.lane)
        except DegeneratePolyline:
            return [f"obstacle {ob.id}: lane needs ≥ 2 distinct points"]
    if isinstance(m, ScriptedMotion) and np.any(np.diff(m.times) <= 0):
        return [f"obstacle {ob.id}: script times must be strictly increasing"]
    return []


# ── writing ───────────────────────────────────────────────────


def _pose_dict(pose: Pose) -> dict[str, float]:
    return {"x": pose.x, "y": pose.y, "heading": pose.heading}


def _motion_dict(m: Motion) -> dict[str, Any]:
    if isinstance(m, ConstantVelocityMotion):
        return {"type": m.kind, "speed": m.speed, "heading": m.heading}
    if isinstance(m, LaneFollowMotion):
        out: dict[str, Any] = {"type": m.kind, "speed": m.speed}
        if m.lane is not None:
            out["lane"] = [list(p) for p in m.lane]
        return out
    if isinstance(m, ScriptedMotion):
        return {
            "type": m.kind,
            "poses": [{"t": t, **_pose_dict(p)} for t, p in zip(m.times, m.poses)],
        }
    return {"type": "static"}


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    ego = scenario.ego
    out: dict[str, Any] = {}
    if scenario.name:
        out["name"] = scenario.name
    if scenario.description:
        out["description"] = scenario.description
    out |= {
        "reference_line": [list(p) for p in scenario.polyline],
        "ego": {
            "x": ego.x,
            "y": ego.y,
            "heading": ego.heading,
            "speed": ego.speed,
            "accel": ego.accel,
            "curvature": ego.curvature,
        },
        "vehicle": {k: getattr(scenario.vehicle, k) for k in sorted(_VEHICLE_KEYS)},
        "obstacles": [
            {
                "id": ob.id,
                "footprint": [list(p) for p in ob.footprint],
                "pose": _pose_dict(ob.pose),
                "motion": _motion_dict(ob.motion),
            }
            for ob in scenario.obstacles
        ],
        "goal_s": scenario.goal_s,
        "road_half_width": scenario.road_half_width,
        "config": config_to_dict(scenario.config),
    }
    if scenario.expect is not None:
        out["expect"] = {"min_yield": scenario.expect.min_yield}
        if scenario.expect.outcome is not None:
            out["expect"]["outcome"] = scenario.expect.outcome
    return out


def dump_scenario(scenario: Scenario) -> str:
    """Serialize a scenario back to scenario-file text."""
    return json.dumps(scenario_to_dict(scenario), indent=2, ensure_ascii=False) + "\n"


# ── mirroring ─────────────────────────────────────────────────


def _mirror_pose(pose: Pose, line: ReferenceLine) -> Pose:
    fp = to_frenet(pose.xy, line)
    mirrored = from_frenet(FrenetPose(fp.s, -fp.l), line)
    ref_heading = float(line.heading_at(fp.s))
    return Pose(mirrored.x, mirrored.y, wrap_angle(2.0 * ref_heading - pose.heading))


def mirror_scenario(scenario: Scenario) -> Scenario:
    """Reflect every input about the reference line (l -> -l)."""
    line = scenario.line

    def mirror_motion(m: Motion) -> Motion:
        if isinstance(m, LaneFollowMotion) and m.lane is not None:
            lane = tuple(
                (p.x, p.y) for p in (_mirror_pose(Pose(x, y, 0.0), line) for x, y in m.lane)
            )
            return replace(m, lane=lane)
        if isinstance(m, ScriptedMotion):
            return replace(m, poses=tuple(_mirror_pose(p, line) for p in m.poses))
        return m

    obstacles = []
    for ob in scenario.obstacles:
        motion = ob.motion
        if isinstance(motion, ConstantVelocityMotion):
            ref = float(line.heading_at(to_frenet(ob.pose.xy, line).s))
            motion = replace(motion, heading=wrap_angle(2.0 * ref - motion.heading))
        else:
            motion = mirror_motion(motion)
        footprint = tuple((x, -y) for x, y in reversed(ob.footprint))
        obstacles.append(
            replace(ob, footprint=footprint, pose=_mirror_pose(ob.pose, line), motion=motion)
        )

    ego_pose = _mirror_pose(scenario.ego.pose, line)
    ego = replace(
        scenario.ego,
        x=ego_pose.x,
        y=ego_pose.y,
        heading=ego_pose.heading,
        curvature=-scenario.ego.curvature,
    )
    return replace(scenario, ego=ego, obstacles=tuple(obstacles))
