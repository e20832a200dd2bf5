"""One planning cycle: decide, refine the path, refine the speed, combine.

Every phase failure degrades to a braking trajectory along the last known
path; :func:`plan_cycle` always returns a Trajectory.
"""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from .config import PlannerConfig
from .decision import (
    CoarseTrajectory,
    FrenetPath,
    StConstraintSet,
    Tunnel,
    build_lattice,
    dp_search,
    ego_frenet,
    extract_st_constraints,
    extract_tunnel,
    path_stations,
    vehicle_cover,
)
from .errors import PlannerError, SolverFailure
from .geometry import FrenetPose, compose_curvature, from_frenet_many, wrap_angle
from .prediction import predict_all
from .qp import (
    QPProblem,
    QPSolution,
    ReferenceProfileSet,
    build_objective,
    build_path_constraints,
    build_speed_constraints,
    derivative_operator,
    reference_profile,
    solve_qp,
)
from .scenario import EgoState, Scenario, VehicleParams
from .trajectory import (
    Diagnostics,
    Trajectory,
    braking_trajectory,
    ramp_profile,
    stop_profile,
)

logger = logging.getLogger(__name__)

PHASES = ("predict", "decision", "tunnel", "path_qp", "st", "speed_qp", "combine")

STOP_SHORT = 0.1  # m, rest target inside the station bound
REST_EPS = 1e-3  # m, samples this close to the rest station count as resting


def cruise_speed(scenario: Scenario) -> float:
    cfg = scenario.config.planner
    return min(cfg.v_target, cfg.speed_limit, scenario.vehicle.max_speed)


def speed_times(config: PlannerConfig) -> np.ndarray:
    return np.arange(config.speed.grid_count) * config.speed_delta


def fallback_stop(
    previous: Trajectory | None,
    ego: EgoState,
    vehicle: VehicleParams,
    config: PlannerConfig | None = None,
    diagnostics: Diagnostics | None = None,
) -> Trajectory:
    """Brake at min(max_decel, comfort_decel) along the previous path, or straight ahead."""
    config = config or PlannerConfig()
    decel = min(vehicle.max_decel, config.planner.comfort_decel)
    return braking_trajectory(
        ego,
        decel,
        speed_times(config),
        previous=previous,
        provenance="fallback_stop",
        diagnostics=diagnostics,
    )


def _start_pose(scenario: Scenario) -> FrenetPose:
    """Ego frenet state including l'' from the (clipped) ego curvature."""
    line, ego = scenario.line, scenario.ego
    pose = ego_frenet(scenario)
    limit = scenario.vehicle.max_curvature
    kappa = float(np.clip(ego.curvature, -limit, limit))
    kr = float(line.curvature_at(pose.s))
    dkr = float(line.curvature_rate_at(pose.s))
    one_minus = 1.0 - kr * pose.l
    delta = wrap_angle(ego.heading - float(line.heading_at(pose.s)))
    tan_d, cos_d = math.tan(delta), math.cos(delta)
    ddl = -(dkr * pose.l + kr * pose.dl_ds) * tan_d + one_minus / (cos_d * cos_d) * (
        kappa * one_minus / cos_d - kr
    )
    return FrenetPose(s=pose.s, l=pose.l, dl_ds=pose.dl_ds, ddl_ds2=ddl)


def _speed_start(scenario: Scenario, start: FrenetPose) -> tuple[float, float, float]:
    """(s, ds/dt, d²s/dt²) of the ego; accel clipped to the vehicle limits."""
    ego, line, vehicle = scenario.ego, scenario.line, scenario.vehicle
    delta = wrap_angle(ego.heading - float(line.heading_at(start.s)))
    one_minus = 1.0 - float(line.curvature_at(start.s)) * start.l
    v = max(ego.speed * math.cos(delta) / one_minus, 0.0)
    a = float(np.clip(ego.accel, -vehicle.max_decel, vehicle.max_accel))
    return start.s, v, a


class Planner:
    """Stateful planner: owns the QP warm-start cache across cycles."""

    def __init__(self) -> None:
        self._warm: dict[tuple[str, int, int], QPSolution] = {}

    def reset(self) -> None:
        self._warm.clear()

    def _solve(
        self, name: str, problem: QPProblem, scenario: Scenario, diag: Diagnostics
    ) -> QPSolution:
        cfg = scenario.config.solver
        key = (name, problem.n, len(problem.rows))
        warm = self._warm.get(key) if cfg.warm_start else None
        sol = solve_qp(problem, config=cfg, warm_start=warm)
        diag.solve_times[name] = sol.solve_time
        if not sol.optimal:
            self._warm.pop(key, None)
            raise SolverFailure(
                f"{name} QP {sol.status} after {sol.iterations} iterations"
                + (f": {sol.info}" if sol.info else "")
            )
        self._warm[key] = sol
        return sol

    # ── path ──────────────────────────────────────────────────

    def _path_qp(
        self,
        scenario: Scenario,
        coarse: CoarseTrajectory,
        tunnel: Tunnel,
        start: FrenetPose,
        diag: Diagnostics,
    ) -> FrenetPath:
        cfg = scenario.config
        stations = tunnel.stations
        n, delta = len(stations), cfg.path_delta
        initial = (start.l, start.dl_ds, start.ddl_ds2 or 0.0)
        follow = reference_profile(
            n,
            targets={0: coarse.path.l_at(stations)},
            weights={0: cfg.path.w_reference, 1: cfg.path.w_dl},
            name="coarse",
        )
        smooth = reference_profile(
            n, weights={2: cfg.path.w_ddl, 3: cfg.path.w_dddl}, name="smooth"
        )
        H, g, const = build_objective(ReferenceProfileSet((follow, smooth)), n, delta, initial)
        rows = build_path_constraints(
            tunnel,
            scenario.vehicle,
            start,
            delta,
            cfg.path.max_heading,
            vehicle_cover(scenario),
        )
        sol = self._solve("path", QPProblem(H, g, const, rows), scenario, diag)
        diag.solver["path"] = sol.status
        diag.iterations["path"] = sol.iterations

        l = sol.y
        D1, c1 = derivative_operator(1, n, delta, initial)
        D2, c2 = derivative_operator(2, n, delta, initial)
        return FrenetPath(stations, l, D1 @ l + c1, D2 @ l + c2)

    # ── speed ─────────────────────────────────────────────────

    def _speed_qp(
        self,
        scenario: Scenario,
        path: FrenetPath,
        st: StConstraintSet,
        initial: tuple[float, float, float],
        diag: Diagnostics,
    ) -> np.ndarray:
        """Solve for the distance travelled from s0; stations are shifted back on return."""
        cfg = scenario.config
        vehicle = scenario.vehicle
        s0, v0, a0 = initial
        n, delta = len(st.t), cfg.speed_delta
        local = StConstraintSet(st.t, st.s_lower - s0, st.s_upper - s0, st.regions)
        start = (0.0, v0, a0)
        cruise_v = cruise_speed(scenario)

        ref_s, _, _ = ramp_profile(
            v0, a0, cruise_v, vehicle.max_accel, vehicle.max_decel, vehicle.max_jerk, st.t
        )
        binding = ref_s > local.s_upper + 1e-9
        rest = None
        if binding.any():
            # rest just inside the first bound the cruise ramp would cross
            rest = max(float(local.s_upper[int(np.argmax(binding))]) - STOP_SHORT, 0.0)
            ref_s, _, _ = stop_profile(
                v0,
                a0,
                cruise_v,
                rest,
                vehicle.max_accel,
                min(vehicle.max_decel, cfg.planner.comfort_decel),
                vehicle.max_jerk,
                st.t,
            )
            ref_s = np.clip(ref_s, 0.0, np.maximum(local.s_upper - STOP_SHORT, 0.0))
        ref_v = np.concatenate([[v0], np.diff(ref_s) / delta])
        profiles = [
            reference_profile(
                n,
                targets={0: ref_s, 1: ref_v},
                weights={0: cfg.speed.w_cruise_s, 1: cfg.speed.w_cruise_v},
                name="cruise",
            ),
            reference_profile(
                n, weights={2: cfg.speed.w_accel, 3: cfg.speed.w_jerk}, name="comfort"
            ),
        ]
        if rest is not None:
            resting = ref_s >= rest - REST_EPS
            if resting.any():
                profiles.append(
                    reference_profile(
                        n,
                        targets={0: rest, 1: 0.0},
                        weights={0: cfg.speed.w_stop * resting, 1: cfg.speed.w_cruise_v * resting},
                        name="stop",
                    )
                )

        H, g, const = build_objective(ReferenceProfileSet(tuple(profiles)), n, delta, start)
        kappa = compose_curvature(
            scenario.line,
            np.clip(path.s, 0.0, scenario.line.length),
            path.l,
            path.dl,
            path.ddl,
        )
        rows = build_speed_constraints(
            local, vehicle, start, (path.s - s0, kappa), delta, cfg.planner.max_lateral_accel
        )
        sol = self._solve("speed", QPProblem(H, g, const, rows), scenario, diag)
        diag.solver["speed"] = sol.status
        diag.iterations["speed"] = sol.iterations
        return s0 + sol.y

    # ── combine ───────────────────────────────────────────────

    def _combine(
        self, scenario: Scenario, path: FrenetPath, s: np.ndarray, diag: Diagnostics
    ) -> Trajectory:
        line, vehicle, ego = scenario.line, scenario.vehicle, scenario.ego
        t = speed_times(scenario.config)
        s = np.clip(np.maximum.accumulate(s), 0.0, line.length)
        l = path.l_at(s)
        dl = path.dl_at(s)
        ddl = path.ddl_at(s)
        xy, heading = from_frenet_many(s, l, line, dl)

        curvature = compose_curvature(line, s, l, dl, ddl)
        clamped = np.abs(curvature) > vehicle.max_curvature
        if clamped.any():
            diag.curvature_clamped = True
            curvature = np.clip(curvature, -vehicle.max_curvature, vehicle.max_curvature)
            logger.debug("curvature clamped at %d samples", int(clamped.sum()))

        step = np.linalg.norm(np.diff(xy, axis=0), axis=1)
        speed = np.concatenate([[max(ego.speed, 0.0)], step / np.diff(t)])
        accel = np.concatenate([[ego.accel], np.diff(speed) / np.diff(t)])
        accel = np.clip(accel, -vehicle.max_decel, vehicle.max_accel)
        return Trajectory(
            t=t,
            xy=xy,
            heading=heading,
            curvature=curvature,
            speed=speed,
            accel=accel,
            provenance="nominal",
            diagnostics=diag,
            path=path,
            stations=s,
        )

    # ── cycle ─────────────────────────────────────────────────

    def plan(self, scenario: Scenario, previous: Trajectory | None = None) -> Trajectory:
        """Run one cycle; planning failures come back as a fallback stop."""
        cfg = scenario.config
        diag = Diagnostics()
        started = mark = time.perf_counter()
        phase = PHASES[0]

        def lap() -> None:
            nonlocal mark
            now = time.perf_counter()
            diag.timings[phase] = now - mark
            mark = now

        try:
            predictions = predict_all(scenario, cfg.speed.horizon, cfg.speed_delta)
            lap()

            phase = "decision"
            start = _start_pose(scenario)
            lattice = build_lattice(scenario, start)
            coarse = dp_search(lattice, predictions, scenario)
            diag.decisions = dict(coarse.decisions)
            lap()

            phase = "tunnel"
            tunnel = extract_tunnel(coarse, scenario, predictions, path_stations(scenario, start.s))
            lap()

            phase = "path_qp"
            path = self._path_qp(scenario, coarse, tunnel, start, diag)
            lap()

            phase = "st"
            initial = _speed_start(scenario, start)
            st = extract_st_constraints(
                coarse, path, predictions, scenario, speed_times(cfg), start_speed=initial[1]
            )
            lap()

            phase = "speed_qp"
            s = self._speed_qp(scenario, path, st, initial, diag)
            lap()

            phase = "combine"
            trajectory = self._combine(scenario, path, s, diag)
            lap()
        except PlannerError as e:
            diag.fallback_reason = f"{type(e).__name__}: {e}"
            diag.failed_phase = phase
            diag.timings["total"] = time.perf_counter() - started
            logger.warning("planning failed in %s, stopping: %s", phase, diag.fallback_reason)
            return fallback_stop(previous, scenario.ego, scenario.vehicle, cfg, diag)

        diag.timings["total"] = time.perf_counter() - started
        logger.debug(
            "cycle %.2f ms (%s)",
            1e3 * diag.timings["total"],
            ", ".join(f"{k} {1e3 * v:.2f}" for k, v in diag.timings.items() if k != "total"),
        )
        return trajectory


def plan_cycle(scenario: Scenario, previous: Trajectory | None = None) -> Trajectory:
    """Plan once with a fresh planner (no warm start)."""
    return Planner().plan(scenario, previous)
