"""Obstacle prediction with a growing confidence band.

Rule-based layer: lane followers close to their lane are carried along it at
constant speed while their lateral offset decays toward the centerline.
Anything else (far from its lane, or a free mover) is extrapolated at constant
velocity. Scripted obstacles replay their script. The constant-velocity
branch is the seat for a learned predictor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from shapely.geometry import Polygon

from .config import PredictionConfig
from .errors import AmbiguousProjection
from .geometry import (
    Pose,
    ReferenceLine,
    arc_length_parametrize,
    from_frenet_many,
    place_footprint,
    to_frenet,
)
from .scenario import (
    ConstantVelocityMotion,
    LaneFollowMotion,
    Obstacle,
    Scenario,
    ScriptedMotion,
    StaticMotion,
)

logger = logging.getLogger(__name__)

SOURCES = ("lane_follow", "constant_velocity", "scripted")


@dataclass(frozen=True, eq=False)
class PredictedTrajectory:
    obstacle_id: str
    t: np.ndarray  # (k,) s, uniform from 0
    xy: np.ndarray  # (k, 2) m
    heading: np.ndarray  # (k,) rad
    sigma: np.ndarray  # (k,) m
    source: str
    footprint: tuple[tuple[float, float], ...]
    static: bool = False

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def index_at(self, t: float) -> int:
        """Nearest sample index, clamped to the horizon."""
        if len(self.t) == 1 or self.dt <= 0:
            return 0
        return int(np.clip(round(t / self.dt), 0, len(self.t) - 1))

    def pose(self, k: int) -> Pose:
        return Pose(float(self.xy[k, 0]), float(self.xy[k, 1]), float(self.heading[k]))

    def polygon(self, k: int) -> Polygon:
        return place_footprint(self.footprint, self.pose(k))

    def polygon_at(self, t: float) -> Polygon:
        return self.polygon(self.index_at(t))


def _lane_for(obstacle: Obstacle, line: ReferenceLine) -> ReferenceLine:
    motion = obstacle.motion
    if isinstance(motion, LaneFollowMotion) and motion.lane is not None:
        return arc_length_parametrize(motion.lane)
    return line


def velocity(obstacle: Obstacle, line: ReferenceLine, config: PredictionConfig) -> np.ndarray:
    """Current velocity vector (m/s) implied by its motion."""
    m = obstacle.motion
    if isinstance(m, ConstantVelocityMotion):
        return m.speed * np.array([math.cos(m.heading), math.sin(m.heading)])
    if isinstance(m, LaneFollowMotion):
        lane = _lane_for(obstacle, line)
        try:
            fp = to_frenet(obstacle.pose.xy, lane)
        except AmbiguousProjection:
            fp = None
        if fp is not None and abs(fp.l) <= config.lane_attach_threshold:
            theta = float(lane.heading_at(fp.s))
            return m.speed * np.array([math.cos(theta), math.sin(theta)])
        h = obstacle.pose.heading
        return m.speed * np.array([math.cos(h), math.sin(h)])
    if isinstance(m, ScriptedMotion):
        times = np.asarray(m.times)
        if len(times) < 2 or times[0] > 0.0 or times[-1] <= 0.0:
            return np.zeros(2)
        i = int(np.searchsorted(times, 0.0, side="right")) - 1
        a, b = m.poses[i], m.poses[i + 1]
        return (b.xy - a.xy) / (times[i + 1] - times[i])
    return np.zeros(2)


def _is_static(obstacle: Obstacle, line: ReferenceLine, config: PredictionConfig) -> bool:
    if isinstance(obstacle.motion, StaticMotion):
        return True
    if isinstance(obstacle.motion, ScriptedMotion):
        return all(p == obstacle.motion.poses[0] for p in obstacle.motion.poses)
    return float(np.linalg.norm(velocity(obstacle, line, config))) <= config.static_speed


def _constant_velocity(obstacle: Obstacle, vel: np.ndarray, t: np.ndarray):
    xy = obstacle.pose.xy + t[:, None] * vel
    heading = np.full(len(t), obstacle.pose.heading)
    return xy, heading


def _lane_follow(
    obstacle: Obstacle, lane: ReferenceLine, speed: float, t: np.ndarray, tau: float
):
    fp = to_frenet(obstacle.pose.xy, lane)
    s = np.clip(fp.s + speed * t, 0.0, lane.length)
    decay = np.exp(-t / tau)
    l = fp.l * decay
    if speed > 0:
        dl_ds = -fp.l * decay / (tau * speed)
    else:
        dl_ds = np.zeros(len(t))
    xy, heading = from_frenet_many(s, l, lane, dl_ds)
    return xy, heading


def predict(
    obstacle: Obstacle,
    line: ReferenceLine,
    horizon: float,
    dt: float,
    config: PredictionConfig | None = None,
) -> PredictedTrajectory:
    """Predict one obstacle over ``horizon`` seconds at step ``dt``.

    Never raises; anything the rules cannot place falls back to constant velocity.
    """
    config = config or PredictionConfig()
    count = max(1, int(round(horizon / dt))) + 1
    t = np.arange(count) * dt
    m = obstacle.motion
    static = _is_static(obstacle, line, config)

    if isinstance(m, ScriptedMotion):
        poses = [m.pose_at(float(tk)) for tk in t]
        xy = np.array([[p.x, p.y] for p in poses])
        heading = np.array([p.heading for p in poses])
        sigma = np.full(count, config.sigma0)
        source = "scripted"
    else:
        source = "constant_velocity"
        xy = heading = None
        if isinstance(m, LaneFollowMotion):
            lane = _lane_for(obstacle, line)
            try:
                fp = to_frenet(obstacle.pose.xy, lane)
            except AmbiguousProjection as e:
                logger.debug("lane projection failed for %s: %s", obstacle.id, e)
                fp = None
            if fp is not None and abs(fp.l) <= config.lane_attach_threshold:
                xy, heading = _lane_follow(
                    obstacle, lane, m.speed, t, config.lateral_time_constant
                )
                source = "lane_follow"
        if xy is None:
            xy, heading = _constant_velocity(obstacle, velocity(obstacle, line, config), t)
        k_sigma = 0.0 if static else config.k_sigma
        sigma = config.sigma0 + k_sigma * t

    xy[0] = obstacle.pose.xy
    heading[0] = obstacle.pose.heading
    return PredictedTrajectory(
        obstacle_id=obstacle.id,
        t=t,
        xy=xy,
        heading=heading,
        sigma=sigma,
        source=source,
        footprint=obstacle.footprint,
        static=static,
    )


def predict_all(scenario: Scenario, horizon: float, dt: float) -> list[PredictedTrajectory]:
    return [
        predict(ob, scenario.line, horizon, dt, scenario.config.prediction)
        for ob in scenario.obstacles
    ]


def propagate(
    obstacle: Obstacle, line: ReferenceLine, dt: float, config: PredictionConfig | None = None
) -> Obstacle:
    """Ground-truth obstacle after ``dt`` seconds of its own motion."""
    config = config or PredictionConfig()
    m = obstacle.motion
    if isinstance(m, StaticMotion) or dt <= 0:
        return obstacle
    if isinstance(m, ScriptedMotion):
        pose = m.pose_at(dt)
        times = tuple(tk - dt for tk in m.times)
        return replace(obstacle, pose=pose, motion=replace(m, times=times))

    track = predict(obstacle, line, dt, dt, config)
    return replace(obstacle, pose=track.pose(len(track.t) - 1))
