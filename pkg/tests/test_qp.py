import numpy as np
import pytest
import shapely

from corridor_planner.config import SolverConfig
from corridor_planner.decision import StConstraintSet, Tunnel
from corridor_planner.errors import InfeasibleBounds, ShapeMismatch
from corridor_planner.geometry import FrenetPose, Pose, vehicle_polygon
from corridor_planner.qp import (
    ConstraintRows,
    QPProblem,
    ReferenceProfileSet,
    braking_envelope,
    build_objective,
    build_path_constraints,
    build_speed_constraints,
    derivative_operator,
    history,
    is_psd,
    reference_profile,
    solve_qp,
)


def direct_objective(refs, y, delta, initial):
    """J summed term by term over an explicitly extended sample array."""
    ext = np.concatenate([history(initial, delta), y])
    total = 0.0
    for j in range(4):
        deriv = np.diff(ext, n=j)[-len(y):] / delta**j
        for p in refs.profiles:
            total += float(np.sum(p.weight[:, j] * (deriv - p.ref[:, j]) ** 2))
    return total


def random_profiles(rng, n):
    return ReferenceProfileSet(
        tuple(
            reference_profile(
                n,
                targets={j: rng.normal(size=n) for j in range(4)},
                weights={j: rng.uniform(0.0, 2.0, n) for j in range(4)},
                name=f"p{k}",
            )
            for k in range(2)
        )
    )


def test_history_continues_the_initial_state():
    p, v, a, delta = 2.0, 1.5, -0.5, 0.2
    ym2, ym1, y0 = history((p, v, a), delta)
    assert (p - y0) / delta == pytest.approx(v)
    assert (p - 2 * y0 + ym1) / delta**2 == pytest.approx(a)
    assert p - 3 * y0 + 3 * ym1 - ym2 == pytest.approx(0.0, abs=1e-12)


def test_derivative_operator_on_a_parabola():
    delta = 0.5
    t = np.arange(1, 9) * delta
    y = t * t
    D1, c1 = derivative_operator(1, 8, delta, (0.0, 0.0, 2.0))
    D2, c2 = derivative_operator(2, 8, delta, (0.0, 0.0, 2.0))
    np.testing.assert_allclose((D2 @ y + c2)[1:], 2.0)
    np.testing.assert_allclose((D1 @ y + c1)[1:], 2 * t[1:] - delta)


@pytest.mark.parametrize("seed", range(5))
def test_objective_is_exact(seed):
    rng = np.random.default_rng(seed)
    n, delta = 8, 0.3
    initial = tuple(rng.normal(size=3))
    refs = random_profiles(rng, n)
    H, g, const = build_objective(refs, n, delta, initial)
    assert is_psd(H)
    for _ in range(100):
        y = rng.normal(size=n)
        expected = direct_objective(refs, y, delta, initial)
        got = 0.5 * y @ H @ y + g @ y + const
        assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(50 + seed)
    n, delta = 10, 0.25
    initial = tuple(rng.normal(size=3))
    refs = random_profiles(rng, n)
    H, g, _ = build_objective(refs, n, delta, initial)
    y = rng.normal(size=n)
    h = 1e-5
    numeric = np.array(
        [
            (
                direct_objective(refs, y + h * e, delta, initial)
                - direct_objective(refs, y - h * e, delta, initial)
            )
            / (2 * h)
            for e in np.eye(n)
        ]
    )
    np.testing.assert_allclose(H @ y + g, numeric, rtol=1e-6, atol=1e-6 * np.abs(numeric).max())


def test_psd_check_rejects_indefinite_and_asymmetric():
    assert not is_psd(np.diag([1.0, -1.0]))
    assert not is_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert is_psd(np.zeros((3, 3)))


@pytest.mark.parametrize(
    "refs, n",
    [
        (ReferenceProfileSet((reference_profile(5, weights={0: 1.0}),)), 6),
        (ReferenceProfileSet(()), 5),
        (ReferenceProfileSet((reference_profile(5, weights={2: 1.0}),)), 5),
        (ReferenceProfileSet((reference_profile(3, weights={0: 1.0}),)), 3),
        (ReferenceProfileSet((reference_profile(5, weights={0: -1.0}),)), 5),
    ],
)
def test_shape_mismatch(refs, n):
    with pytest.raises(ShapeMismatch):
        build_objective(refs, n, 0.1)


def test_unconstrained_minimum():
    problem = QPProblem(H=np.diag([2.0, 2.0]), g=np.array([-2.0, -4.0]))
    sol = solve_qp(problem)
    assert sol.optimal
    np.testing.assert_allclose(sol.y, [1.0, 2.0], atol=1e-6)


def test_box_constrained_minimum():
    rows = ConstraintRows(np.eye(2), np.zeros(2), np.full(2, 1.5), ("box", "box"))
    problem = QPProblem(H=np.diag([2.0, 2.0]), g=np.array([-2.0, -4.0]), constraints=rows)
    sol = solve_qp(problem)
    assert sol.optimal
    np.testing.assert_allclose(sol.y, [1.0, 1.5], atol=1e-6)
    assert sol.objective_value == pytest.approx(1.0 + 2.25 - 2.0 - 6.0, abs=1e-6)


def projected_gradient(H, g, lo, hi, steps=20000):
    """Accelerated projected gradient for box constraints."""
    step = 1.0 / np.linalg.eigvalsh(H).max()
    x = y = np.clip(np.zeros(len(g)), lo, hi)
    momentum = 1.0
    for _ in range(steps):
        x_next = np.clip(y - step * (H @ y + g), lo, hi)
        m_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum * momentum))
        y = x_next + (momentum - 1.0) / m_next * (x_next - x)
        x, momentum = x_next, m_next
    return x


@pytest.mark.parametrize("seed", range(50))
def test_agrees_with_projected_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    n = 2 + seed % 7
    M = rng.normal(size=(n, n))
    H = M.T @ M + np.eye(n)
    g = rng.normal(scale=3.0, size=n)
    lo, hi = np.full(n, -0.5), np.full(n, 0.5)
    rows = ConstraintRows(np.eye(n), lo, hi, ("box",) * n)
    sol = solve_qp(QPProblem(H, g, 0.0, rows))
    assert sol.optimal
    oracle = projected_gradient(H, g, lo, hi)
    np.testing.assert_allclose(sol.y, oracle, atol=1e-3)
    expected = 0.5 * oracle @ H @ oracle + g @ oracle
    assert sol.objective_value == pytest.approx(expected, rel=1e-5, abs=1e-8)
    assert np.all(sol.y >= lo - 1e-4) and np.all(sol.y <= hi + 1e-4)


def test_crossed_bounds_are_infeasible():
    rows = ConstraintRows(np.eye(1), np.array([2.0]), np.array([1.0]), ("box",))
    sol = solve_qp(QPProblem(np.eye(1), np.zeros(1), 0.0, rows))
    assert sol.status == "infeasible"


def test_contradictory_rows_are_never_optimal():
    A = np.array([[1.0, 0.0], [1.0, 0.0]])
    rows = ConstraintRows(A, np.array([2.0, -np.inf]), np.array([np.inf, 1.0]), ("a", "b"))
    sol = solve_qp(QPProblem(np.eye(2), np.zeros(2), 0.0, rows), max_iter=500)
    assert not sol.optimal


def test_warm_start_needs_fewer_iterations():
    rng = np.random.default_rng(3)
    n = 10
    M = rng.normal(size=(n, n))
    H = M.T @ M + np.eye(n)
    g = rng.normal(size=n)
    rows = ConstraintRows(np.eye(n), np.full(n, -0.2), np.full(n, 0.2), ("box",) * n)
    problem = QPProblem(H, g, 0.0, rows)
    cold = solve_qp(problem, config=SolverConfig(polish=False))
    warm = solve_qp(problem, config=SolverConfig(polish=False), warm_start=cold)
    assert warm.optimal
    assert warm.iterations <= cold.iterations


def straight_tunnel(half: float, n: int = 10, spacing: float = 2.0) -> Tunnel:
    stations = np.arange(n) * spacing
    return Tunnel(stations, np.full(n, -half), np.full(n, half), spacing)


def test_path_rows(vehicle):
    rows = build_path_constraints(straight_tunnel(2.0), vehicle, FrenetPose(0.0, 0.3), 2.0)
    assert len(rows.rows("pin")) == 1
    assert len(rows.rows("disc")) == 2 * 2 * 9
    assert len(rows.rows("heading")) == 9
    assert len(rows.rows("curvature")) == 9
    pin = rows.rows("pin")
    assert (pin.lb[0], pin.ub[0]) == (0.3, 0.3)


def test_path_rows_reject_a_tunnel_narrower_than_a_disc(vehicle):
    with pytest.raises(InfeasibleBounds):
        build_path_constraints(straight_tunnel(0.5), vehicle, FrenetPose(0.0, 0.0), 2.0)


def test_braking_envelope():
    t = np.array([0.0, 0.5, 1.0, 2.0])
    np.testing.assert_allclose(braking_envelope(0.0, 4.0, 4.0, t), [0.0, 1.5, 2.0, 2.0])


def speed_bounds(n, upper, lower=0.0):
    t = np.arange(n) * 0.2
    return StConstraintSet(t, np.full(n, lower), np.full(n, upper))


def test_speed_rows_reject_a_stop_that_is_too_close(vehicle):
    with pytest.raises(InfeasibleBounds, match="braking"):
        build_speed_constraints(
            speed_bounds(40, 1.0), vehicle, (0.0, 5.0, 0.0), (np.zeros(2), np.zeros(2)), 0.2
        )


def test_speed_rows_reject_an_unreachable_lower_bound(vehicle):
    with pytest.raises(InfeasibleBounds, match="reach"):
        build_speed_constraints(
            speed_bounds(40, 100.0, lower=0.5), vehicle, (0.0, 0.0, 0.0),
            (np.zeros(2), np.zeros(2)), 0.2,
        )


def test_speed_solution_respects_every_row(vehicle):
    n, delta = 40, 0.2
    st = speed_bounds(n, 6.0)
    initial = (0.0, 3.0, 0.0)
    rows = build_speed_constraints(
        st, vehicle, initial, (np.array([0.0, 100.0]), np.zeros(2)), delta
    )
    cruise = reference_profile(
        n, targets={0: 3.0 * st.t, 1: 3.0}, weights={0: 1.0, 1: 1.0}, name="cruise"
    )
    comfort = reference_profile(n, weights={2: 1e-3, 3: 1e-4}, name="comfort")
    H, g, const = build_objective(ReferenceProfileSet((cruise, comfort)), n, delta, initial)
    sol = solve_qp(QPProblem(H, g, const, rows))
    assert sol.optimal
    value = rows.A @ sol.y
    assert np.all(value >= rows.lb - 1e-4)
    assert np.all(value <= rows.ub + 1e-4)
    assert sol.y.max() <= 6.0 + 1e-4
    assert sol.y[0] == pytest.approx(0.0, abs=1e-4)


def test_speed_rows_reject_a_stop_inside_the_jerk_limited_distance(vehicle):
    # a constant 4 m/s² stop from 3 m/s takes 1.125 m, but the accel first has to ramp down
    with pytest.raises(InfeasibleBounds, match="jerk-limited braking"):
        build_speed_constraints(
            speed_bounds(40, 2.5), vehicle, (0.0, 3.0, 1.5), (np.zeros(2), np.zeros(2)), 0.2
        )


def test_scaling_does_not_move_the_optimum():
    rng = np.random.default_rng(11)
    n = 6
    M = rng.normal(size=(n, n)) * np.array([1.0, 3.0, 10.0, 1.0, 0.3, 1.0])
    H = M.T @ M + np.eye(n)
    g = rng.normal(scale=5.0, size=n)
    A = np.vstack([np.eye(n), 10.0 * np.diff(np.eye(n), axis=0)])
    rows = ConstraintRows(A, np.full(len(A), -1.0), np.full(len(A), 1.0), ("box",) * len(A))
    problem = QPProblem(H, g, 0.0, rows)
    scaled = solve_qp(problem, max_iter=20000)
    plain = solve_qp(problem, max_iter=20000, config=SolverConfig(scaling_iter=0))
    assert scaled.optimal and plain.optimal
    np.testing.assert_allclose(scaled.y, plain.y, atol=1e-3)
    assert scaled.primal_residual <= 1e-4 and scaled.dual_residual <= 1e-4


def test_relative_tolerance_loosens_convergence():
    rng = np.random.default_rng(12)
    n = 8
    M = rng.normal(size=(n, n))
    H = M.T @ M + np.eye(n)
    g = rng.normal(scale=100.0, size=n)
    rows = ConstraintRows(np.eye(n), np.full(n, -0.5), np.full(n, 0.5), ("box",) * n)
    problem = QPProblem(H, g, 0.0, rows)
    strict = solve_qp(problem, config=SolverConfig(polish=False))
    loose = solve_qp(problem, config=SolverConfig(polish=False, tol_rel=1e-3))
    assert strict.optimal and loose.optimal
    assert loose.iterations <= strict.iterations


def tunnel_walls(tunnel: Tunnel, depth: float = 5.0):
    cells = []
    for s, lo, hi in zip(tunnel.stations, tunnel.lower, tunnel.upper):
        a, b = s - tunnel.cell / 2.0, s + tunnel.cell / 2.0
        cells += [shapely.box(a, hi, b, hi + depth), shapely.box(a, lo - depth, b, lo)]
    return shapely.union_all(cells)


@pytest.mark.parametrize("seed", range(20))
def test_path_clears_the_tunnel_walls_between_stations(vehicle, seed):
    rng = np.random.default_rng(300 + seed)
    n, delta = 20, 2.0
    stations = np.arange(n) * delta
    centre = np.repeat(rng.uniform(-0.4, 0.4, n // 4), 4)
    half = np.repeat(rng.uniform(1.6, 2.2, n // 4), 4)
    tunnel = Tunnel(stations, centre - half, centre + half, delta)
    start = FrenetPose(0.0, 0.0)
    rows = build_path_constraints(tunnel, vehicle, start, delta)
    follow = reference_profile(
        n, targets={0: rng.uniform(tunnel.lower, tunnel.upper)}, weights={0: 1.0}, name="follow"
    )
    smooth = reference_profile(n, weights={2: 1.0, 3: 0.1}, name="smooth")
    H, g, const = build_objective(
        ReferenceProfileSet((follow, smooth)), n, delta, (start.l, start.dl_ds, 0.0)
    )
    sol = solve_qp(QPProblem(H, g, const, rows))
    assert sol.optimal, sol.info

    walls = tunnel_walls(tunnel)
    l = sol.y
    worst = 0.0
    for i in range(1, n):
        heading = float(np.arctan2(l[i] - l[i - 1], delta))
        for u in np.linspace(0.0, 1.0, 11):
            pose = Pose(stations[i - 1] + u * delta, l[i - 1] + u * (l[i] - l[i - 1]), heading)
            body = vehicle_polygon(vehicle.length, vehicle.width, pose)
            worst = max(worst, body.intersection(walls).area)
    assert worst <= 1e-6
