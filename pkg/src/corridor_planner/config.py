"""Configuration management."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, get_type_hints

from dotenv import load_dotenv

from .errors import ParseError

load_dotenv()

MIN_GRID_COUNT = 4  # third-derivative stencils reach back three grid points


@dataclass(frozen=True)
class PlannerSection:
    replan_period: float = 0.1  # s
    v_target: float = 3.0  # m/s, cruise speed before the vehicle cap
    speed_limit: float = 7.0  # m/s, road limit
    comfort_decel: float = 2.0  # m/s², fallback braking
    max_lateral_accel: float = 1.0  # m/s², curvature speed cap


@dataclass(frozen=True)
class PathConfig:
    horizon: float = 60.0  # m
    grid_count: int = 30
    max_heading: float = 0.3  # rad, bound on atan(dl/ds)
    w_reference: float = 1.0  # pull toward the coarse trajectory
    w_dl: float = 1.0
    w_ddl: float = 100.0
    w_dddl: float = 1000.0


@dataclass(frozen=True)
class SpeedConfig:
    horizon: float = 8.0  # s
    grid_count: int = 40
    w_cruise_s: float = 1.0
    w_cruise_v: float = 1.0
    w_accel: float = 1e-3
    w_jerk: float = 1e-4
    w_stop: float = 5.0


@dataclass(frozen=True)
class DecisionConfig:
    station_spacing: float = 2.0  # m between lattice stations
    lateral_sample_spacing: float = 0.5  # m
    lateral_sample_count: int = 0  # 0 = as many as the road allows
    w_obs: float = 10.0
    w_ref: float = 1.0
    w_smooth: float = 5.0
    w_kappa: float = 5.0
    sigma_geom: float = 0.5  # m, base width of the risk field
    lateral_margin: float = 0.2  # m
    longitudinal_margin: float = 1.0  # m
    ignore_distance: float = 3.0  # m, farther obstacles get no decision


@dataclass(frozen=True)
class PredictionConfig:
    sigma0: float = 0.2  # m
    k_sigma: float = 0.3  # m/s, growth of sigma for moving obstacles
    lane_attach_threshold: float = 2.5  # m
    lateral_time_constant: float = 2.0  # s
    static_speed: float = 0.05  # m/s, slower obstacles count as static


@dataclass(frozen=True)
class SolverConfig:
    tol_prim: float = 1e-4
    tol_dual: float = 1e-4
    tol_rel: float = 0.0  # relative part of both tolerances, scaled by the problem norms
    max_iter: int = field(
        default_factory=lambda: int(os.environ.get("CORRIDOR_PLANNER_QP_MAX_ITER", "2000"))
    )
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho_interval: int = 25
    eps_infeasible: float = 1e-5
    scaling_iter: int = 10  # Ruiz equilibration passes, 0 turns scaling off
    polish: bool = True
    warm_start: bool = True


@dataclass(frozen=True)
class GuardianConfig:
    d_emerg: float = 0.3  # m
    ttc_emerg: float = 1.5  # s
    ttc_slow: float = 3.0  # s
    closing_eps: float = 1e-3  # m/s
    slowdown_factor: float = 0.5
    deadline: float = 0.0  # s, 0 = replan period
    fallback_slowdown_count: int = 2
    fallback_emergency_count: int = 4


@dataclass(frozen=True)
class SimConfig:
    substeps: int = 10
    goal_tolerance: float = 0.5  # m
    stop_speed: float = 0.1  # m/s
    stop_at_goal: bool = True
    stall_time: float = 5.0  # s at rest before a run counts as stopped
    obstacle_noise: float = 0.0  # m, std of perceived obstacle positions
    clock: str = field(default_factory=lambda: os.environ.get("CORRIDOR_PLANNER_CLOCK", "logical"))


@dataclass(frozen=True)
class PlannerConfig:
    planner: PlannerSection = field(default_factory=PlannerSection)
    path: PathConfig = field(default_factory=PathConfig)
    speed: SpeedConfig = field(default_factory=SpeedConfig)
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    guardian: GuardianConfig = field(default_factory=GuardianConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    @property
    def path_delta(self) -> float:
        return self.path.horizon / self.path.grid_count

    @property
    def speed_delta(self) -> float:
        return self.speed.horizon / self.speed.grid_count

    @property
    def deadline(self) -> float:
        return self.guardian.deadline or self.planner.replan_period


# ── dict / override plumbing ──────────────────────────────────


def _coerce(value: Any, annotation: Any, locus: str) -> Any:
    kind = annotation if isinstance(annotation, type) else str(annotation)
    try:
        if kind in (bool, "bool"):
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "1", "yes", "on"):
                return True
            if isinstance(value, str) and value.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if kind in (int, "int"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if kind in (float, "float"):
            if isinstance(value, bool):
                raise ValueError(f"not a number: {value!r}")
            return float(value)
        if kind in (str, "str"):
            if not isinstance(value, str):
                raise ValueError(f"not a string: {value!r}")
            return value
    except (TypeError, ValueError) as e:
        raise ParseError(str(e), locus) from e
    raise ParseError(f"unsupported field type {annotation}", locus)


def _section_types(section: type) -> dict[str, Any]:
    return get_type_hints(section)


def config_from_dict(data: Mapping[str, Any] | None, locus: str = "config") -> PlannerConfig:
    """Build a PlannerConfig from the nested "config" object of a scenario file.

    Absent sections and keys keep their defaults; unknown ones raise ParseError.
    """
    if data is None:
        return PlannerConfig()
    if not isinstance(data, Mapping):
        raise ParseError("expected an object", locus)

    sections = _section_types(PlannerConfig)
    built: dict[str, Any] = {}
    for name, body in data.items():
        if name not in sections:
            raise ParseError(f"unknown config section {name!r}", locus)
        if not isinstance(body, Mapping):
            raise ParseError("expected an object", f"{locus}.{name}")
        section_cls = sections[name]
        fields = _section_types(section_cls)
        values = {}
        for key, raw in body.items():
            if key not in fields:
                raise ParseError(f"unknown key {key!r}", f"{locus}.{name}")
            values[key] = _coerce(raw, fields[key], f"{locus}.{name}.{key}")
        built[name] = section_cls(**values)
    return PlannerConfig(**built)


def config_to_dict(config: PlannerConfig) -> dict[str, dict[str, Any]]:
    return dataclasses.asdict(config)


def apply_overrides(config: PlannerConfig, overrides: Iterable[str]) -> PlannerConfig:
    """Apply ``section.key=value`` overrides on top of an existing config."""
    sections = _section_types(PlannerConfig)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ParseError("override must look like section.key=value", item)
        section_name, dot, field_name = key.strip().partition(".")
        if not dot or section_name not in sections:
            raise ParseError(f"unknown config section {section_name!r}", key)
        section_cls = sections[section_name]
        fields = _section_types(section_cls)
        if field_name not in fields:
            raise ParseError(f"unknown key {field_name!r}", key)
        value = _coerce(raw.strip(), fields[field_name], key)
        section = dataclasses.replace(getattr(config, section_name), **{field_name: value})
        config = dataclasses.replace(config, **{section_name: section})
    return config


def validate_config(config: PlannerConfig) -> list[str]:
    """Return human-readable violations; empty when the config is usable."""
    problems: list[str] = []
    for name, count in (
        ("path.grid_count", config.path.grid_count),
        ("speed.grid_count", config.speed.grid_count),
    ):
        if count < MIN_GRID_COUNT:
            problems.append(f"{name}: grid count below minimum {MIN_GRID_COUNT}")

    positive = {
        "path.horizon": config.path.horizon,
        "speed.horizon": config.speed.horizon,
        "planner.replan_period": config.planner.replan_period,
        "planner.v_target": config.planner.v_target,
        "planner.comfort_decel": config.planner.comfort_decel,
        "planner.max_lateral_accel": config.planner.max_lateral_accel,
        "path.max_heading": config.path.max_heading,
        "decision.station_spacing": config.decision.station_spacing,
        "decision.lateral_sample_spacing": config.decision.lateral_sample_spacing,
        "decision.sigma_geom": config.decision.sigma_geom,
        "solver.tol_prim": config.solver.tol_prim,
        "solver.tol_dual": config.solver.tol_dual,
        "solver.rho": config.solver.rho,
        "solver.sigma": config.solver.sigma,
        "sim.substeps": config.sim.substeps,
    }
    problems += [f"{name}: must be > 0" for name, value in positive.items() if value <= 0]

    for section_name in ("path", "speed", "decision"):
        section = getattr(config, section_name)
        for f in dataclasses.fields(section):
            if f.name.startswith("w_") and getattr(section, f.name) < 0:
                problems.append(f"{section_name}.{f.name}: weight must be >= 0")

    if config.solver.max_iter < 1:
        problems.append("solver.max_iter: must be >= 1")
    if not 0.0 < config.solver.alpha < 2.0:
        problems.append("solver.alpha: must be in (0, 2)")
    if config.solver.tol_rel < 0:
        problems.append("solver.tol_rel: must be >= 0")
    if config.solver.scaling_iter < 0:
        problems.append("solver.scaling_iter: must be >= 0")
    if config.decision.lateral_sample_count < 0:
        problems.append("decision.lateral_sample_count: must be >= 0")
    if config.decision.lateral_sample_count and config.decision.lateral_sample_count % 2 == 0:
        problems.append("decision.lateral_sample_count: must be odd")
    if config.sim.clock not in ("wall", "logical"):
        problems.append("sim.clock: must be 'wall' or 'logical'")
    if config.guardian.ttc_slow < config.guardian.ttc_emerg:
        problems.append("guardian.ttc_slow: must be >= guardian.ttc_emerg")
    return problems
