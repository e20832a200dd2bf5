"""Quadratic programs over grid values y_1..y_N.

Objective: J = sum_k sum_i sum_j w[k,i,j] * (y_i^(j) - ref[k,i,j])^2 for
derivative orders j = 0..3. Derivatives are backward differences; indices
before the grid start read a virtual history built from the pinned initial
state (value, first and second derivative, zero third derivative), so J is
an exact quadratic 1/2 y'Hy + g'y + const.

Constraints are two-sided rows lb <= A y <= ub. The solver is an alternating
direction method on the Ruiz-equilibrated problem with relaxation, adaptive
rho, infeasibility certificates and an active-set polish.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .config import MIN_GRID_COUNT, SolverConfig
from .decision import StConstraintSet, Tunnel, max_reach
from .errors import InfeasibleBounds, ShapeMismatch
from .geometry import CircleCover, FrenetPose, two_circle_cover
from .scenario import VehicleParams
from .trajectory import ramp_profile

logger = logging.getLogger(__name__)

ORDERS = 4  # derivative orders 0..3
HISTORY = 3  # virtual samples before y_1
PSD_TOL = 1e-10
RHO_MIN = 1e-6
RHO_MAX = 1e6
RHO_EQ_SCALE = 1e3
POLISH_DELTA = 1e-10
POLISH_REFINE_STEPS = 3
MIN_CURVATURE = 1e-6  # 1/m, floor for the curvature speed cap
SCALING_REG = 1e-8
SCALE_MIN = 1e-4
SCALE_MAX = 1e4


# ── reference profiles and objective ──────────────────────────


@dataclass(frozen=True, eq=False)
class ReferenceProfile:
    ref: np.ndarray  # (N, 4), target of the j-th derivative at grid i
    weight: np.ndarray  # (N, 4)
    name: str = ""


def reference_profile(
    n: int,
    targets: dict[int, float | np.ndarray] | None = None,
    weights: dict[int, float | np.ndarray] | None = None,
    name: str = "",
) -> ReferenceProfile:
    """Profile from per-order targets and weights; absent orders get weight 0."""
    ref = np.zeros((n, ORDERS))
    weight = np.zeros((n, ORDERS))
    for j, value in (targets or {}).items():
        ref[:, j] = value
    for j, value in (weights or {}).items():
        weight[:, j] = value
    return ReferenceProfile(ref=ref, weight=weight, name=name)


@dataclass(frozen=True, eq=False)
class ReferenceProfileSet:
    profiles: tuple[ReferenceProfile, ...]

    def check(self, n: int) -> None:
        """Raises ShapeMismatch when a profile does not fit an n-point grid."""
        if not self.profiles:
            raise ShapeMismatch("no reference profiles")
        for p in self.profiles:
            if p.ref.shape != (n, ORDERS) or p.weight.shape != (n, ORDERS):
                raise ShapeMismatch(
                    f"profile {p.name or '?'}: expected ({n}, {ORDERS}), "
                    f"got ref {p.ref.shape} weight {p.weight.shape}"
                )
            if np.any(p.weight < 0) or not np.all(np.isfinite(p.weight)):
                raise ShapeMismatch(f"profile {p.name or '?'}: weights must be finite and >= 0")
            if not np.all(np.isfinite(p.ref)):
                raise ShapeMismatch(f"profile {p.name or '?'}: targets must be finite")
        if not any(np.any(p.weight[:, 0] > 0) for p in self.profiles):
            raise ShapeMismatch("no positive value weight anchors the solution")


def history(initial: Sequence[float], delta: float) -> np.ndarray:
    """Virtual samples [y_-2, y_-1, y_0] continuing the pinned initial state."""
    p, d1, d2 = (float(v) for v in initial)
    y0 = p - delta * d1
    ym1 = d2 * delta * delta - p + 2.0 * y0
    ym2 = p - 3.0 * y0 + 3.0 * ym1
    return np.array([ym2, ym1, y0])


def derivative_operator(
    order: int, n: int, delta: float, initial: Sequence[float] = (0.0, 0.0, 0.0)
) -> tuple[np.ndarray, np.ndarray]:
    """(D, c) with y^(order) = D @ y + c under backward differences."""
    full = np.diff(np.eye(n + HISTORY), n=order, axis=0)[-n:] / delta**order
    return full[:, HISTORY:], full[:, :HISTORY] @ history(initial, delta)


def build_objective(
    refs: ReferenceProfileSet,
    n: int,
    delta: float,
    initial: Sequence[float] = (0.0, 0.0, 0.0),
) -> tuple[np.ndarray, np.ndarray, float]:
    """Assemble (H, g, const) so that 1/2 y'Hy + g'y + const equals J exactly.

    Raises:
        ShapeMismatch: a profile does not match the grid.
    """
    if n < MIN_GRID_COUNT:
        raise ShapeMismatch(f"grid count {n} below minimum {MIN_GRID_COUNT}")
    if delta <= 0:
        raise ShapeMismatch(f"grid spacing must be > 0, got {delta}")
    refs.check(n)

    H = np.zeros((n, n))
    g = np.zeros(n)
    const = 0.0
    for j in range(ORDERS):
        w = sum(p.weight[:, j] for p in refs.profiles)
        if not np.any(w):
            continue
        D, c = derivative_operator(j, n, delta, initial)
        H += 2.0 * D.T @ (w[:, None] * D)
        for p in refs.profiles:
            offset = c - p.ref[:, j]
            g += 2.0 * D.T @ (p.weight[:, j] * offset)
            const += float(np.sum(p.weight[:, j] * offset * offset))
    return 0.5 * (H + H.T), g, const


def is_psd(H: np.ndarray, tol: float = PSD_TOL) -> bool:
    """Symmetric LDL' factorization check: every pivot block >= -tol."""
    if not np.allclose(H, H.T, atol=1e-12, rtol=0.0):
        return False
    _, d, _ = linalg.ldl(H)
    return bool(np.all(np.linalg.eigvalsh(d) >= -tol))


# ── constraints ───────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class ConstraintRows:
    A: np.ndarray  # (m, N)
    lb: np.ndarray  # (m,)
    ub: np.ndarray  # (m,)
    kinds: tuple[str, ...] = ()

    @classmethod
    def empty(cls, n: int) -> ConstraintRows:
        return cls(np.zeros((0, n)), np.zeros(0), np.zeros(0))

    def __len__(self) -> int:
        return len(self.lb)

    def __add__(self, other: ConstraintRows) -> ConstraintRows:
        return ConstraintRows(
            np.vstack([self.A, other.A]),
            np.concatenate([self.lb, other.lb]),
            np.concatenate([self.ub, other.ub]),
            self.kinds + other.kinds,
        )

    def rows(self, kind: str) -> ConstraintRows:
        mask = np.array([k == kind for k in self.kinds], dtype=bool)
        kinds = tuple(k for k in self.kinds if k == kind)
        return ConstraintRows(self.A[mask], self.lb[mask], self.ub[mask], kinds)


class _RowBuilder:
    def __init__(self, n: int):
        self.n = n
        self.A: list[np.ndarray] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.kinds: list[str] = []

    def add(self, row: np.ndarray, const: float, lo: float, hi: float, kind: str) -> None:
        """Add lo <= row @ y + const <= hi."""
        self.A.append(row)
        self.lb.append(lo - const)
        self.ub.append(hi - const)
        self.kinds.append(kind)

    def pin(self, index: int, value: float) -> None:
        row = np.zeros(self.n)
        row[index] = 1.0
        self.add(row, 0.0, value, value, "pin")

    def build(self) -> ConstraintRows:
        if not self.A:
            return ConstraintRows.empty(self.n)
        return ConstraintRows(
            np.array(self.A), np.array(self.lb), np.array(self.ub), tuple(self.kinds)
        )


def build_path_constraints(
    tunnel: Tunnel,
    vehicle: VehicleParams,
    start: FrenetPose,
    delta_s: float,
    max_heading: float = 0.3,
    cover: CircleCover | None = None,
) -> ConstraintRows:
    """Disc, heading and curvature rows for l(s) on the tunnel's stations.

    Every segment between consecutive stations gets disc rows at both ends with
    the segment slope, so the linearized disc centers stay inside the tunnel
    along the whole segment. Station 1 is pinned to the start pose.

    Raises:
        InfeasibleBounds: some disc window is narrower than the disc.
    """
    cover = cover or two_circle_cover(vehicle.length, vehicle.width, max_heading)
    n = len(tunnel.stations)
    initial = (start.l, start.dl_ds, start.ddl_ds2 or 0.0)
    D1, c1 = derivative_operator(1, n, delta_s, initial)
    D2, c2 = derivative_operator(2, n, delta_s, initial)
    inset = cover.radius + cover.lateral_slack
    spread = cover.radius + cover.longitudinal_slack
    heading_bound = math.tan(max_heading)

    rows = _RowBuilder(n)
    rows.pin(0, start.l)
    for i in range(1, n):
        s_a, s_b = tunnel.stations[i - 1], tunnel.stations[i]
        for c in cover.offsets:
            lo, hi = tunnel.window_bounds(s_a + c - spread, s_b + c + spread)
            if lo + inset > hi - inset:
                raise InfeasibleBounds(
                    f"disc window at s={s_b:.2f} is [{lo:.3f}, {hi:.3f}], "
                    f"too narrow for radius {cover.radius:.3f}"
                )
            for end in (i - 1, i):
                row = c * D1[i]
                row[end] += 1.0
                rows.add(row, c * c1[i], lo + inset, hi - inset, "disc")
        rows.add(D1[i], c1[i], -heading_bound, heading_bound, "heading")
        rows.add(D2[i], c2[i], -vehicle.max_curvature, vehicle.max_curvature, "curvature")
    return rows.build()


def speed_caps(
    vehicle: VehicleParams,
    path_curvature: tuple[np.ndarray, np.ndarray],
    nominal_s: np.ndarray,
    max_lateral_accel: float,
) -> np.ndarray:
    """Per-grid speed cap from the vehicle limit and the path curvature."""
    stations, kappa = path_curvature
    k = np.maximum(np.abs(np.interp(nominal_s, stations, kappa)), MIN_CURVATURE)
    return np.minimum(vehicle.max_speed, np.sqrt(max_lateral_accel / k))


def braking_envelope(s0: float, v0: float, decel: float, t: np.ndarray) -> np.ndarray:
    """Station after braking at ``decel`` from (s0, v0), held once at rest."""
    t_stop = v0 / decel
    return s0 + np.where(t < t_stop, v0 * t - 0.5 * decel * t * t, v0 * t_stop / 2.0)


def build_speed_constraints(
    st: StConstraintSet,
    vehicle: VehicleParams,
    start: tuple[float, float, float],
    path_curvature: tuple[np.ndarray, np.ndarray],
    delta_t: float,
    max_lateral_accel: float = 1.0,
    nominal_s: np.ndarray | None = None,
) -> ConstraintRows:
    """Station, speed, accel and jerk rows for s(t); s_1, s'_1, s''_1 pinned.

    The speed cap never asks for harder braking than max_decel from the start speed.

    Raises:
        InfeasibleBounds: the s-t bounds cannot be met under the braking or
            acceleration limits.
    """
    s0, v0, a0 = (float(v) for v in start)
    n = len(st.t)
    t = st.t

    stop = braking_envelope(s0, max(v0, 0.0), vehicle.max_decel, t)
    late = np.flatnonzero(stop > st.s_upper + 1e-9)
    if len(late):
        j = int(late[0])
        raise InfeasibleBounds(
            f"cannot stay below s={st.s_upper[j]:.3f} at t={t[j]:.2f}: "
            f"braking at {vehicle.max_decel:.2f} m/s² reaches {stop[j]:.3f}"
        )
    # the jerk limit delays full braking; one sample of slack covers the discretization
    brake_s, _, _ = ramp_profile(
        max(v0, 0.0), a0, 0.0, vehicle.max_accel, vehicle.max_decel, vehicle.max_jerk, t
    )
    ramped = s0 + brake_s
    late = np.flatnonzero(ramped > st.s_upper + max(v0, 0.0) * delta_t + 1e-9)
    if len(late):
        j = int(late[0])
        raise InfeasibleBounds(
            f"cannot stay below s={st.s_upper[j]:.3f} at t={t[j]:.2f}: "
            f"jerk-limited braking from a={a0:.2f} m/s² reaches {ramped[j]:.3f}"
        )
    reach = max_reach(s0, v0, vehicle.max_accel, vehicle.max_speed, t)
    short = np.flatnonzero(st.s_lower > reach + 1e-9)
    if len(short):
        j = int(short[0])
        raise InfeasibleBounds(
            f"cannot reach s={st.s_lower[j]:.3f} by t={t[j]:.2f} (max {reach[j]:.3f})"
        )

    if nominal_s is None:
        nominal_s = np.minimum(s0 + v0 * t, st.s_upper)
    caps = speed_caps(vehicle, path_curvature, nominal_s, max_lateral_accel)
    caps = np.maximum(caps, v0 - vehicle.max_decel * t)

    initial = (s0, v0, a0)
    D1, c1 = derivative_operator(1, n, delta_t, initial)
    D2, c2 = derivative_operator(2, n, delta_t, initial)
    D3, c3 = derivative_operator(3, n, delta_t, initial)

    rows = _RowBuilder(n)
    rows.pin(0, s0)
    eye = np.eye(n)
    for j in range(1, n):
        rows.add(eye[j], 0.0, st.s_lower[j], st.s_upper[j], "station")
        rows.add(D1[j], c1[j], 0.0, caps[j], "speed")
        rows.add(D2[j], c2[j], -vehicle.max_decel, vehicle.max_accel, "accel")
        rows.add(D3[j], c3[j], -vehicle.max_jerk, vehicle.max_jerk, "jerk")
    return rows.build()


# ── problem and solver ────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class QPProblem:
    H: np.ndarray
    g: np.ndarray
    const: float = 0.0
    constraints: ConstraintRows | None = None

    @property
    def n(self) -> int:
        return len(self.g)

    @property
    def rows(self) -> ConstraintRows:
        return self.constraints if self.constraints is not None else ConstraintRows.empty(self.n)

    def objective(self, y: np.ndarray) -> float:
        return float(0.5 * y @ self.H @ y + self.g @ y + self.const)


@dataclass(frozen=True, eq=False)
class QPSolution:
    y: np.ndarray
    status: str  # optimal | max_iter | infeasible
    primal_residual: float
    dual_residual: float
    objective_value: float
    iterations: int
    solve_time: float  # s
    dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    info: str = ""
    polished: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _rho_vector(rho: float, lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    vec = np.full(len(lb), rho)
    vec[np.isinf(lb) & np.isinf(ub)] = RHO_MIN
    vec[ub - lb < 1e-9] = rho * RHO_EQ_SCALE
    return vec


def _factor(P: np.ndarray, A: np.ndarray, rho: np.ndarray, sigma: float):
    K = P + sigma * np.eye(P.shape[0]) + A.T @ (rho[:, None] * A)
    return linalg.cho_factor(K)


def _residuals(P, q, A, x, z, y) -> tuple[float, float]:
    return _norm(A @ x - z), _norm(P @ x + q + A.T @ y)


def _primal_infeasible(A, lb, ub, dy: np.ndarray, eps: float) -> bool:
    scale = _norm(dy)
    if scale <= eps:
        return False
    v = dy / scale
    pos, neg = np.maximum(v, 0.0), np.minimum(v, 0.0)
    if np.any((pos > eps) & np.isinf(ub)) or np.any((neg < -eps) & np.isinf(lb)):
        return False
    finite_ub = np.where(np.isinf(ub), 0.0, ub)
    finite_lb = np.where(np.isinf(lb), 0.0, lb)
    support = float(finite_ub @ pos + finite_lb @ neg)
    return support < -eps and _norm(A.T @ v) < eps


def _dual_infeasible(P, q, A, lb, ub, dx: np.ndarray, eps: float) -> bool:
    scale = _norm(dx)
    if scale <= eps:
        return False
    v = dx / scale
    if q @ v >= -eps or _norm(P @ v) >= eps:
        return False
    av = A @ v
    return not np.any((np.isfinite(ub) & (av > eps)) | (np.isfinite(lb) & (av < -eps)))


def _polish(P, q, A, lb, ub, z, y, tol: float):
    """Solve the equality QP on the guessed active set; None when the guess is unusable."""
    n = P.shape[0]
    lower = z - lb < -y
    upper = ub - z < y
    active = lower | upper
    A_act = A[active]
    b = np.where(lower, lb, ub)[active]
    k = int(active.sum())

    kkt = np.block([[P, A_act.T], [A_act, np.zeros((k, k))]])
    reg = kkt + np.diag(np.concatenate([np.full(n, POLISH_DELTA), np.full(k, -POLISH_DELTA)]))
    rhs = np.concatenate([-q, b])
    try:
        lu = linalg.lu_factor(reg)
    except (linalg.LinAlgError, ValueError):
        return None
    sol = linalg.lu_solve(lu, rhs)
    for _ in range(POLISH_REFINE_STEPS):
        sol = sol + linalg.lu_solve(lu, rhs - kkt @ sol)
    if not np.all(np.isfinite(sol)):
        return None

    x = sol[:n]
    y_new = np.zeros(len(lb))
    y_new[active] = sol[n:]
    only_lower = lower & ~upper
    only_upper = upper & ~lower
    if np.any(y_new[only_lower] > tol) or np.any(y_new[only_upper] < -tol):
        return None
    return x, np.clip(A @ x, lb, ub), y_new


def _equilibrate(
    P: np.ndarray, q: np.ndarray, A: np.ndarray, iterations: int
) -> tuple[np.ndarray, np.ndarray, float]:
    """Ruiz equilibration of the KKT columns, then a cost scale; returns (D, E, c).

    The scaled problem is (c D P D, c D q, E A D, E lb, E ub).
    """
    n, m = P.shape[0], A.shape[0]
    D, E = np.ones(n), np.ones(m)
    Ps, As = P.copy(), A.copy()
    for _ in range(iterations):
        col = np.maximum(np.abs(Ps).max(axis=0, initial=0.0), np.abs(As).max(axis=0, initial=0.0))
        row = np.abs(As).max(axis=1, initial=0.0)
        d = np.where(col > SCALING_REG, 1.0 / np.sqrt(np.maximum(col, SCALING_REG)), 1.0)
        e = np.where(row > SCALING_REG, 1.0 / np.sqrt(np.maximum(row, SCALING_REG)), 1.0)
        d, e = np.clip(d, SCALE_MIN, SCALE_MAX), np.clip(e, SCALE_MIN, SCALE_MAX)
        Ps = d[:, None] * Ps * d[None, :]
        As = e[:, None] * As * d[None, :]
        D, E = D * d, E * e
    cost = max(float(np.mean(np.abs(Ps).max(axis=0, initial=0.0))), _norm(D * q))
    c = float(np.clip(1.0 / cost, SCALE_MIN, SCALE_MAX)) if cost > SCALING_REG else 1.0
    return D, E, c


def solve_qp(
    problem: QPProblem,
    tol_prim: float | None = None,
    tol_dual: float | None = None,
    max_iter: int | None = None,
    config: SolverConfig | None = None,
    warm_start: QPSolution | None = None,
) -> QPSolution:
    """Minimize 1/2 y'Hy + g'y subject to the problem's rows.

    Iterates on the equilibrated problem; convergence, certificates and the
    polish are judged on the original data.
    Never raises on numerical trouble; the status and ``info`` say what happened.
    """
    cfg = config or SolverConfig()
    tol_prim = cfg.tol_prim if tol_prim is None else tol_prim
    tol_dual = cfg.tol_dual if tol_dual is None else tol_dual
    max_iter = cfg.max_iter if max_iter is None else max_iter
    started = time.perf_counter()

    P, q = problem.H, problem.g
    rows = problem.rows
    A, lb, ub = rows.A, rows.lb, rows.ub
    n, m = len(q), len(lb)

    def finish(x, z, y, status, iterations, info, polished=False) -> QPSolution:
        pri, dua = _residuals(P, q, A, x, z, y)
        return QPSolution(
            y=x,
            status=status,
            primal_residual=pri,
            dual_residual=dua,
            objective_value=problem.objective(x),
            iterations=iterations,
            solve_time=time.perf_counter() - started,
            dual=y,
            info=info,
            polished=polished,
        )

    if np.any(lb > ub):
        i = int(np.flatnonzero(lb > ub)[0])
        zeros = np.zeros(m)
        return finish(np.zeros(n), zeros, zeros, "infeasible", 0, f"row {i} bounds cross")

    D, E, c = _equilibrate(P, q, A, cfg.scaling_iter)
    Ps = c * D[:, None] * P * D[None, :]
    qs = c * D * q
    As = E[:, None] * A * D[None, :]
    lbs, ubs = E * lb, E * ub

    x = np.zeros(n)
    y = np.zeros(m)
    if (
        cfg.warm_start
        and warm_start is not None
        and warm_start.y.shape == (n,)
        and warm_start.dual.shape == (m,)
        and np.all(np.isfinite(warm_start.y))
    ):
        x = warm_start.y.copy()
        y = warm_start.dual.copy()
    xs, ys = x / D, c * y / E
    zs = np.clip(As @ xs, lbs, ubs)
    z = zs / E

    rho = cfg.rho
    rho_vec = _rho_vector(rho, lbs, ubs)
    factor = _factor(Ps, As, rho_vec, cfg.sigma)
    alpha = cfg.alpha

    status, info, it = "max_iter", f"no convergence in {max_iter} iterations", 0
    for it in range(1, max_iter + 1):
        x_tilde = linalg.cho_solve(factor, cfg.sigma * xs - qs + As.T @ (rho_vec * zs - ys))
        z_tilde = As @ x_tilde
        xs_new = alpha * x_tilde + (1.0 - alpha) * xs
        z_relaxed = alpha * z_tilde + (1.0 - alpha) * zs
        zs_new = np.clip(z_relaxed + ys / rho_vec, lbs, ubs)
        ys_new = ys + rho_vec * (z_relaxed - zs_new)
        dx, dy = D * (xs_new - xs), E * (ys_new - ys) / c
        xs, zs, ys = xs_new, zs_new, ys_new
        x, z, y = D * xs, zs / E, E * ys / c

        pri, dua = _residuals(P, q, A, x, z, y)
        eps_pri, eps_dua = tol_prim, tol_dual
        if cfg.tol_rel:
            eps_pri += cfg.tol_rel * max(_norm(A @ x), _norm(z))
            eps_dua += cfg.tol_rel * max(_norm(P @ x), _norm(A.T @ y), _norm(q))
        if pri <= eps_pri and dua <= eps_dua:
            status, info = "optimal", "converged"
            break
        if m and _primal_infeasible(A, lb, ub, dy, cfg.eps_infeasible):
            status, info = "infeasible", "primal infeasibility certificate"
            break
        if _dual_infeasible(P, q, A, lb, ub, dx, cfg.eps_infeasible):
            status, info = "infeasible", "dual infeasibility certificate"
            break

        if m and cfg.adaptive_rho_interval and it % cfg.adaptive_rho_interval == 0:
            pri_s, dua_s = _residuals(Ps, qs, As, xs, zs, ys)
            pri_scale = pri_s / max(_norm(As @ xs), _norm(zs), 1e-10)
            dua_scale = dua_s / max(_norm(Ps @ xs), _norm(As.T @ ys), _norm(qs), 1e-10)
            ratio = math.sqrt(pri_scale / max(dua_scale, 1e-10))
            proposed = float(np.clip(rho * ratio, RHO_MIN, RHO_MAX))
            if proposed > 5.0 * rho or proposed < rho / 5.0:
                rho = proposed
                rho_vec = _rho_vector(rho, lbs, ubs)
                factor = _factor(Ps, As, rho_vec, cfg.sigma)

    if status != "optimal" or not cfg.polish:
        if status != "optimal":
            logger.debug("qp stopped after %d iterations: %s", it, info)
        return finish(x, z, y, status, it, info)

    pri, dua = _residuals(P, q, A, x, z, y)
    polished = _polish(P, q, A, lb, ub, z, y, tol_dual)
    if polished is not None:
        xp, zp, yp = polished
        pri_p, dua_p = _residuals(P, q, A, xp, zp, yp)
        if pri_p <= max(pri, 1e-12) and dua_p <= max(dua, 1e-12):
            return finish(xp, zp, yp, status, it, "converged, polished", polished=True)
    return finish(x, z, y, status, it, info)
