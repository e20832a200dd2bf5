"""Timestamped trajectories and the builders shared by planner and guardian."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import shapely
from shapely.geometry import LineString, Point

from .decision import FrenetPath
from .scenario import EgoState

PROVENANCES = ("nominal", "fallback_stop", "guardian_slowdown", "guardian_stop")

MIN_PATH_LENGTH = 1e-6  # m, shorter previous paths count as absent


@dataclass
class Diagnostics:
    timings: dict[str, float] = field(default_factory=dict)  # s per phase
    decisions: dict[str, str] = field(default_factory=dict)
    solver: dict[str, str] = field(default_factory=dict)  # status per QP
    iterations: dict[str, int] = field(default_factory=dict)
    solve_times: dict[str, float] = field(default_factory=dict)  # s per QP that ran
    fallback_reason: str | None = None
    failed_phase: str | None = None
    curvature_clamped: bool = False

    @property
    def cycle_time(self) -> float:
        return self.timings.get("total", 0.0)


class TrajectorySample(NamedTuple):
    t: float
    x: float
    y: float
    heading: float
    curvature: float
    speed: float
    accel: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray  # (n,) s, from 0
    xy: np.ndarray  # (n, 2) m
    heading: np.ndarray  # (n,) rad
    curvature: np.ndarray  # (n,) 1/m
    speed: np.ndarray  # (n,) m/s
    accel: np.ndarray  # (n,) m/s²
    provenance: str = "nominal"
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    path: FrenetPath | None = None  # solved l(s), nominal only
    stations: np.ndarray | None = None  # solved s(t), nominal only

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def samples(self) -> list[TrajectorySample]:
        return [
            TrajectorySample(
                float(self.t[k]),
                float(self.xy[k, 0]),
                float(self.xy[k, 1]),
                float(self.heading[k]),
                float(self.curvature[k]),
                float(self.speed[k]),
                float(self.accel[k]),
            )
            for k in range(len(self.t))
        ]

    def line_string(self) -> LineString | None:
        """Driven polyline with repeated points dropped; None if it has no length."""
        keep = np.concatenate([[True], np.linalg.norm(np.diff(self.xy, axis=0), axis=1) > 1e-9])
        pts = self.xy[keep]
        if len(pts) < 2:
            return None
        line = LineString(pts)
        return line if line.length > MIN_PATH_LENGTH else None

    def state_at(self, t: float) -> EgoState:
        """Linear interpolation of the samples; holds the last sample past the end."""
        heading = np.unwrap(self.heading)
        return EgoState(
            x=float(np.interp(t, self.t, self.xy[:, 0])),
            y=float(np.interp(t, self.t, self.xy[:, 1])),
            heading=math.remainder(float(np.interp(t, self.t, heading)), 2.0 * math.pi),
            speed=float(np.interp(t, self.t, self.speed)),
            accel=float(np.interp(t, self.t, self.accel)),
            curvature=float(np.interp(t, self.t, self.curvature)),
        )


# ── following an existing path ────────────────────────────────


def _along(
    previous: Trajectory | None, ego: EgoState, dist: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Positions, headings and curvatures ``dist`` meters ahead of the ego.

    Follows the previous trajectory's polyline when there is one, extended
    straight past its end; otherwise drives straight along the ego heading.
    """
    line = previous.line_string() if previous is not None else None
    if line is None:
        direction = np.array([math.cos(ego.heading), math.sin(ego.heading)])
        xy = np.array([ego.x, ego.y]) + dist[:, None] * direction
        return xy, np.full(len(dist), ego.heading), np.zeros(len(dist))

    coords = np.asarray(line.coords)
    seg = np.diff(coords, axis=0)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(seg, axis=1))])
    start = line.project(Point(ego.x, ego.y))
    target = start + dist

    inside = np.minimum(target, line.length)
    xy = shapely.get_coordinates(shapely.line_interpolate_point(line, inside))
    idx = np.clip(np.searchsorted(arc, inside, side="right") - 1, 0, len(seg) - 1)
    heading = np.arctan2(seg[idx, 1], seg[idx, 0])
    past = target > line.length
    if past.any():
        last = seg[-1] / np.linalg.norm(seg[-1])
        xy[past] = coords[-1] + (target[past] - line.length)[:, None] * last

    prev_arc = np.concatenate(
        [[0.0], np.cumsum(np.linalg.norm(np.diff(previous.xy, axis=0), axis=1))]
    )
    curvature = np.interp(inside, prev_arc, previous.curvature)
    curvature[past] = 0.0
    return xy, heading, curvature


def braking_trajectory(
    ego: EgoState,
    decel: float,
    t: np.ndarray,
    previous: Trajectory | None = None,
    provenance: str = "fallback_stop",
    diagnostics: Diagnostics | None = None,
) -> Trajectory:
    """Brake at ``decel`` from the ego speed to rest along the previous path."""
    v0 = max(ego.speed, 0.0)
    if v0 > 0.0 and decel > 0.0:
        t_stop = v0 / decel
        moving = t < t_stop
        speed = np.where(moving, v0 - decel * t, 0.0)
        dist = np.where(moving, v0 * t - 0.5 * decel * t * t, 0.5 * v0 * t_stop)
        accel = np.where(moving, -decel, 0.0)
    else:
        speed = np.zeros(len(t))
        dist = np.zeros(len(t))
        accel = np.zeros(len(t))
    xy, heading, curvature = _along(previous, ego, dist)
    return Trajectory(
        t=t,
        xy=xy,
        heading=heading,
        curvature=curvature,
        speed=speed,
        accel=accel,
        provenance=provenance,
        diagnostics=diagnostics or Diagnostics(),
    )


def retime(
    planned: Trajectory,
    factor: float,
    ego: EgoState,
    max_accel: float,
    max_decel: float,
    provenance: str = "guardian_slowdown",
) -> Trajectory:
    """Scale the planned speeds by ``factor`` and re-time along the same path.

    Speed changes between samples are capped by the accel limits, starting
    from the actual ego speed.
    """
    t = planned.t
    dt = np.diff(t)
    target = np.maximum(planned.speed * factor, 0.0)
    speed = np.empty(len(t))
    speed[0] = max(ego.speed, 0.0)
    for k in range(1, len(t)):
        speed[k] = np.clip(
            target[k], speed[k - 1] - max_decel * dt[k - 1], speed[k - 1] + max_accel * dt[k - 1]
        )
        speed[k] = max(speed[k], 0.0)
    accel = np.concatenate([[np.clip(ego.accel, -max_decel, max_accel)], np.diff(speed) / dt])
    dist = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * dt)])
    xy, heading, curvature = _along(planned, ego, dist)
    return Trajectory(
        t=t,
        xy=xy,
        heading=heading,
        curvature=curvature,
        speed=speed,
        accel=accel,
        provenance=provenance,
        diagnostics=planned.diagnostics,
    )


# ── jerk-limited speed ramp ───────────────────────────────────


def ramp_profile(
    v0: float,
    a0: float,
    v_target: float,
    max_accel: float,
    max_decel: float,
    max_jerk: float,
    t: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time-optimal jerk- and accel-limited change from (v0, a0) to v_target.

    Returns (distance from the start, speed, accel) at times ``t``.
    """
    t = np.asarray(t, dtype=float)
    v_zero = v0 + a0 * abs(a0) / (2.0 * max_jerk)
    d = 1.0 if v_target >= v_zero else -1.0
    limit = max_accel if d > 0 else max_decel
    a_start = d * a0
    dv = d * (v_target - v0)

    a_peak = min(math.sqrt(max(max_jerk * dv + 0.5 * a_start * a_start, 0.0)), limit)
    t1 = abs(a_peak - a_start) / max_jerk
    t3 = a_peak / max_jerk
    dv1 = 0.5 * (a_start + a_peak) * t1
    dv3 = 0.5 * a_peak * t3
    t2 = max(dv - dv1 - dv3, 0.0) / a_peak if a_peak > 0.0 else 0.0

    # piecewise-constant jerk phases, then hold the target speed
    jerks = [d * math.copysign(max_jerk, a_peak - a_start), 0.0, -d * max_jerk, 0.0]
    durations = [t1, t2, t3, math.inf]
    starts = np.concatenate([[0.0], np.cumsum(durations[:-1])])

    state_s, state_v, state_a = [0.0], [v0], [a0]
    for j, tau in zip(jerks[:-1], durations[:-1]):
        s, v, a = state_s[-1], state_v[-1], state_a[-1]
        state_s.append(s + v * tau + a * tau * tau / 2.0 + j * tau**3 / 6.0)
        state_v.append(v + a * tau + j * tau * tau / 2.0)
        state_a.append(a + j * tau)
    # the last phase coasts at exactly the target
    state_v[-1], state_a[-1] = v_target, 0.0

    phase = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(jerks) - 1)
    tau = t - starts[phase]
    j = np.array(jerks)[phase]
    s0 = np.array(state_s)[phase]
    vv = np.array(state_v)[phase]
    aa = np.array(state_a)[phase]
    s = s0 + vv * tau + aa * tau * tau / 2.0 + j * tau**3 / 6.0
    v = vv + aa * tau + j * tau * tau / 2.0
    a = aa + j * tau
    return s, np.maximum(v, 0.0), a


REST_HORIZON = 1e3  # s, long enough for any ramp to settle
BRAKE_SEARCH_STEPS = 24


def stop_profile(
    v0: float,
    a0: float,
    v_cruise: float,
    s_stop: float,
    max_accel: float,
    decel: float,
    max_jerk: float,
    t: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ramp toward v_cruise, then brake to rest at s_stop as late as the limits allow.

    Both legs are ramp_profile curves, so speed, accel and jerk stay inside
    (max_accel, decel, max_jerk). When braking at once still overshoots
    s_stop the profile brakes from t = 0 and rests past it.
    Returns (distance from the start, speed, accel) at times ``t``.
    """
    t = np.asarray(t, dtype=float)

    def cruise_at(when: float) -> tuple[float, float, float]:
        s, v, a = ramp_profile(v0, a0, v_cruise, max_accel, decel, max_jerk, np.array([when]))
        return float(s[0]), float(v[0]), float(a[0])

    def rest_at(when: float) -> float:
        s, v, a = cruise_at(when)
        brake, _, _ = ramp_profile(v, a, 0.0, max_accel, decel, max_jerk, np.array([REST_HORIZON]))
        return s + float(brake[0])

    lo, hi = 0.0, float(t[-1]) if t.size else 0.0
    if rest_at(hi) <= s_stop:
        t_brake = hi
    elif rest_at(lo) > s_stop:
        t_brake = lo
    else:
        for _ in range(BRAKE_SEARCH_STEPS):
            mid = 0.5 * (lo + hi)
            if rest_at(mid) <= s_stop:
                lo = mid
            else:
                hi = mid
        t_brake = lo

    s_c, v_c, a_c = ramp_profile(v0, a0, v_cruise, max_accel, decel, max_jerk, t)
    s_b0, v_b0, a_b0 = cruise_at(t_brake)
    s_b, v_b, a_b = ramp_profile(
        v_b0, a_b0, 0.0, max_accel, decel, max_jerk, np.maximum(t - t_brake, 0.0)
    )
    braking = t > t_brake
    return (
        np.where(braking, s_b0 + s_b, s_c),
        np.where(braking, v_b, v_c),
        np.where(braking, a_b, a_c),
    )
