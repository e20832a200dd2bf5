import pytest

from corridor_planner.config import (
    PlannerConfig,
    SolverConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    validate_config,
)
from corridor_planner.errors import ParseError


def test_defaults_are_valid():
    assert validate_config(PlannerConfig()) == []


def test_partial_section_keeps_other_defaults():
    cfg = config_from_dict({"path": {"horizon": 40}})
    assert cfg.path.horizon == 40.0
    assert cfg.path.grid_count == 30
    assert cfg.speed == PlannerConfig().speed


def test_grid_spacing_follows_horizon_and_count():
    cfg = config_from_dict({"path": {"horizon": 30, "grid_count": 15}})
    assert cfg.path_delta == pytest.approx(2.0)
    assert PlannerConfig().speed_delta == pytest.approx(0.2)


@pytest.mark.parametrize(
    "data, fragment",
    [
        ({"planer": {}}, "unknown config section"),
        ({"path": {"horizn": 1}}, "unknown key"),
        ({"path": {"grid_count": 10.5}}, "not an integer"),
        ({"sim": {"stop_at_goal": "maybe"}}, "not a boolean"),
        ({"path": 3}, "expected an object"),
    ],
)
def test_bad_config_is_a_parse_error(data, fragment):
    with pytest.raises(ParseError, match=fragment):
        config_from_dict(data)


def test_overrides_coerce_values():
    cfg = apply_overrides(
        PlannerConfig(), ["planner.v_target=2.5", "sim.stop_at_goal=false", "path.grid_count=20"]
    )
    assert cfg.planner.v_target == 2.5
    assert cfg.sim.stop_at_goal is False
    assert cfg.path.grid_count == 20


@pytest.mark.parametrize("item", ["planner.v_target", "nowhere.x=1", "planner.nope=1"])
def test_malformed_override(item):
    with pytest.raises(ParseError):
        apply_overrides(PlannerConfig(), [item])


def test_validation_lists_every_problem():
    cfg = config_from_dict(
        {
            "path": {"grid_count": 3, "w_ddl": -1},
            "solver": {"alpha": 2.5},
            "sim": {"clock": "sundial"},
        }
    )
    problems = validate_config(cfg)
    assert any("grid count below minimum 4" in p for p in problems)
    assert any(p.startswith("path.w_ddl") for p in problems)
    assert any(p.startswith("solver.alpha") for p in problems)
    assert any(p.startswith("sim.clock") for p in problems)


def test_deadline_defaults_to_replan_period():
    assert PlannerConfig().deadline == pytest.approx(0.1)
    assert config_from_dict({"guardian": {"deadline": 0.05}}).deadline == pytest.approx(0.05)


def test_environment_sets_solver_iterations(monkeypatch):
    monkeypatch.setenv("CORRIDOR_PLANNER_QP_MAX_ITER", "50")
    assert SolverConfig().max_iter == 50


def test_clock_defaults_to_logical(monkeypatch):
    monkeypatch.delenv("CORRIDOR_PLANNER_CLOCK", raising=False)
    assert PlannerConfig().sim.clock == "logical"


def test_dict_form_reloads():
    cfg = apply_overrides(PlannerConfig(), ["decision.w_obs=4"])
    assert config_from_dict(config_to_dict(cfg)) == cfg
