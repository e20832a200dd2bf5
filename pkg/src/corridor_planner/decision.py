"""Sample-and-search decision layer.

A lattice of lateral samples over equidistant stations is searched by dynamic
programming. The winning node sequence is the coarse trajectory; it fixes a
label per obstacle, the lateral tunnel for the path QP and (once a path is
known) the s-t bounds for the speed QP.

The DP state is the pair of nodes at the last two stations, so the second
difference of l is exact on every edge.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import shapely

from .errors import AllBlocked, NoRoom, StInfeasible, TunnelCollapse
from .geometry import (
    CircleCover,
    FrenetPose,
    ReferenceLine,
    from_frenet_many,
    to_frenet,
    to_frenet_many,
    two_circle_cover,
)
from .prediction import PredictedTrajectory
from .scenario import Scenario

logger = logging.getLogger(__name__)

LABELS = ("yield", "overtake", "bypass_left", "bypass_right", "ignore")

CLEARANCE_SLACK = 0.01  # m, coarse nodes keep at least this inside the tunnel
SWEEP_STEP = 0.25  # m, station step of the occupancy sweep
STOP_TOLERANCE = 0.05  # m, a stopped ego may sit this far past its stop bound
MIN_NOMINAL_SPEED = 1.0  # m/s


def ego_frenet(scenario: Scenario) -> FrenetPose:
    ego = scenario.ego
    return to_frenet((ego.x, ego.y), scenario.line, ego.heading)


def nominal_speed(scenario: Scenario) -> float:
    """Speed used to time edges before any speed profile exists."""
    return float(np.clip(scenario.ego.speed, MIN_NOMINAL_SPEED, scenario.vehicle.max_speed))


def vehicle_cover(scenario: Scenario) -> CircleCover:
    v = scenario.vehicle
    return two_circle_cover(v.length, v.width, scenario.config.path.max_heading)


# ── frenet paths ──────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class FrenetPath:
    """l(s) sampled at increasing stations; linear in between."""

    s: np.ndarray
    l: np.ndarray
    dl: np.ndarray | None = None
    ddl: np.ndarray | None = None

    def l_at(self, s: float | np.ndarray) -> np.ndarray:
        return np.interp(s, self.s, self.l)

    def dl_at(self, s: float | np.ndarray) -> np.ndarray:
        if self.dl is not None:
            return np.interp(s, self.s, self.dl)
        if len(self.s) < 2:
            return np.zeros_like(np.asarray(s, dtype=float))
        slope = np.diff(self.l) / np.diff(self.s)
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(slope) - 1)
        return slope[idx]

    def ddl_at(self, s: float | np.ndarray) -> np.ndarray:
        if self.ddl is not None:
            return np.interp(s, self.s, self.ddl)
        return np.zeros_like(np.asarray(s, dtype=float))


# ── lattice ───────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Lattice:
    stations: np.ndarray  # (M,) m
    lateral: np.ndarray  # (K,) m, shared by stations 1..M-1, ascending
    start: FrenetPose
    bound: float  # m, |l| limit of the lateral samples

    @property
    def M(self) -> int:
        return len(self.stations)

    @property
    def K(self) -> int:
        return len(self.lateral)

    @property
    def spacing(self) -> float:
        return float(self.stations[1] - self.stations[0])

    def samples(self, i: int) -> np.ndarray:
        if i == 0:
            return np.array([self.start.l])
        return self.lateral


def build_lattice(scenario: Scenario, start: FrenetPose | None = None) -> Lattice:
    """Stations from the ego to the decision horizon with K lateral samples each.

    Raises:
        NoRoom: the road leaves no room for even the centerline sample.
    """
    cfg = scenario.config.decision
    start = start or ego_frenet(scenario)
    bound = scenario.road_half_width - scenario.vehicle.width / 2.0
    if bound < 0.0:
        raise NoRoom(
            f"road half width {scenario.road_half_width:.2f} m leaves no lateral sample "
            f"for a {scenario.vehicle.width:.2f} m wide vehicle"
        )
    k_max = int(math.floor(bound / cfg.lateral_sample_spacing + 1e-9))
    if cfg.lateral_sample_count:
        k_max = min(k_max, (cfg.lateral_sample_count - 1) // 2)
    lateral = np.arange(-k_max, k_max + 1) * cfg.lateral_sample_spacing

    end = min(scenario.goal_s, start.s + scenario.config.path.horizon)
    length = max(end - start.s, cfg.station_spacing)
    count = max(2, int(math.ceil(length / cfg.station_spacing - 1e-9)) + 1)
    stations = start.s + np.linspace(0.0, length, count)
    return Lattice(stations=stations, lateral=lateral, start=start, bound=bound)


# ── obstacle fields ───────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class _Field:
    """Frenet bounding boxes of one predicted obstacle, one per prediction sample."""

    id: str
    static: bool
    t: np.ndarray
    sigma: np.ndarray
    boxes: np.ndarray  # (k, 4): s_lo, s_hi, l_lo, l_hi
    dt: float

    def index_at(self, t: float | np.ndarray) -> np.ndarray:
        if len(self.t) == 1 or self.dt <= 0:
            return np.zeros_like(np.asarray(t, dtype=int))
        return np.clip(np.round(np.asarray(t) / self.dt).astype(int), 0, len(self.t) - 1)


def _fields(predictions: list[PredictedTrajectory], line: ReferenceLine) -> list[_Field]:
    fields = []
    for pred in predictions:
        body = np.asarray(pred.footprint, dtype=float)
        cos, sin = np.cos(pred.heading)[:, None], np.sin(pred.heading)[:, None]
        wx = pred.xy[:, 0:1] + cos * body[:, 0] - sin * body[:, 1]
        wy = pred.xy[:, 1:2] + sin * body[:, 0] + cos * body[:, 1]
        sl = to_frenet_many(np.column_stack([wx.ravel(), wy.ravel()]), line)
        s = sl[:, 0].reshape(wx.shape)
        l = sl[:, 1].reshape(wx.shape)
        boxes = np.column_stack([s.min(axis=1), s.max(axis=1), l.min(axis=1), l.max(axis=1)])
        fields.append(
            _Field(pred.obstacle_id, pred.static, pred.t, pred.sigma, boxes, pred.dt)
        )
    return fields


def _box_distance(s, l, box) -> np.ndarray:
    """Signed distance from (s, l) points to an axis-aligned box; negative inside."""
    s_lo, s_hi, l_lo, l_hi = box
    ds = np.maximum(np.maximum(s_lo - s, s - s_hi), 0.0)
    dl = np.maximum(np.maximum(l_lo - l, l - l_hi), 0.0)
    outside = np.hypot(ds, dl)
    depth = np.minimum(np.minimum(s - s_lo, s_hi - s), np.minimum(l - l_lo, l_hi - l))
    return np.where((ds > 0.0) | (dl > 0.0), outside, -depth)


@dataclass(frozen=True)
class _Inflation:
    s: float  # m
    l: float  # m


def _inflation(scenario: Scenario) -> _Inflation:
    """How far a box is grown so a clear lattice point keeps the QP discs clear too."""
    cover = vehicle_cover(scenario)
    cfg = scenario.config
    return _Inflation(
        s=cover.reach + cfg.path_delta,
        l=cfg.decision.lateral_margin + cover.radius + cover.lateral_slack + CLEARANCE_SLACK,
    )


def _blocking(fld: _Field, lattice: Lattice, grow: _Inflation) -> bool:
    """True when a static box covers every lateral sample inside the horizon."""
    s_lo, s_hi, l_lo, l_hi = fld.boxes[0]
    if s_hi + grow.s < lattice.stations[1] or s_lo - grow.s > lattice.stations[-1]:
        return False
    return l_lo - grow.l < lattice.lateral[0] and l_hi + grow.l > lattice.lateral[-1]


# ── dynamic programming ───────────────────────────────────────


def edge_cost_table(
    lattice: Lattice, predictions: list[PredictedTrajectory], scenario: Scenario
) -> list[np.ndarray]:
    """Per-station edge costs indexed [p, a, b].

    Entry i-1 holds the cost of stepping from node a at station i-1 to node b
    at station i after node p at station i-2. Station -1 is a single virtual
    node continuing the ego heading.
    """
    cfg = scenario.config.decision
    grow = _inflation(scenario)
    s0 = lattice.start.s
    v_nom = nominal_speed(scenario)
    fields = [
        f
        for f in _fields(predictions, scenario.line)
        if not (f.static and _blocking(f, lattice, grow))
    ]
    ds = np.diff(lattice.stations)
    l_virtual = np.array([lattice.start.l - ds[0] * lattice.start.dl_ds])

    tables = []
    for i in range(1, lattice.M):
        lp = l_virtual if i == 1 else lattice.samples(i - 2)
        la = lattice.samples(i - 1)
        lb = lattice.samples(i)
        step = ds[i - 1]

        c_obs = np.zeros((len(la), len(lb)))
        for fld in fields:
            worst = np.zeros((len(la), len(lb)))
            for u in (0.5, 1.0):
                s = lattice.stations[i - 1] + u * step
                l = la[:, None] + u * (lb[None, :] - la[:, None])
                k = int(fld.index_at((s - s0) / v_nom))
                s_lo, s_hi, l_lo, l_hi = fld.boxes[k]
                box = (s_lo - grow.s, s_hi + grow.s, l_lo - grow.l, l_hi + grow.l)
                clr = _box_distance(s, l, box)
                sigma = cfg.sigma_geom + fld.sigma[k]
                cost = np.exp(-(clr * clr) / (2.0 * sigma * sigma))
                cost = np.where(clr < 0.0, np.inf if fld.static else 1.0, cost)
                worst = np.maximum(worst, cost)
            c_obs = c_obs + worst

        p = lp[:, None, None]
        a = la[None, :, None]
        b = lb[None, None, :]
        smooth = ((b - a) / step) ** 2
        kappa = ((b - 2.0 * a + p) / (step * step)) ** 2
        tables.append(
            cfg.w_obs * c_obs[None, :, :]
            + cfg.w_ref * b * b
            + cfg.w_smooth * smooth
            + cfg.w_kappa * kappa
        )
    return tables


def path_cost(tables: list[np.ndarray], indices: tuple[int, ...] | list[int]) -> float:
    """Cost of a node-index sequence (station 0 first), summed in DP order."""
    total = 0.0
    for i in range(1, len(indices)):
        p = indices[i - 2] if i >= 2 else 0
        total = total + tables[i - 1][p, indices[i - 1], indices[i]]
    return float(total)


def _priority(l: np.ndarray) -> np.ndarray:
    """Sample order for tie-breaks: smaller |l| first, then smaller l."""
    return np.lexsort((l, np.abs(l)))


def _search(lattice: Lattice, tables: list[np.ndarray]) -> tuple[list[int], float]:
    value = np.zeros((1, 1))
    back: list[np.ndarray] = []
    for i in range(1, lattice.M):
        total = value[:, :, None] + tables[i - 1]
        if i >= 3:
            order = _priority(lattice.samples(i - 2))
            arg = order[np.argmin(total[order], axis=0)]
        else:
            arg = np.argmin(total, axis=0)
        value = np.take_along_axis(total, arg[None], axis=0)[0]
        back.append(arg)

    la = lattice.samples(lattice.M - 2)[:, None] * np.ones_like(value)
    lb = lattice.samples(lattice.M - 1)[None, :] * np.ones_like(value)
    flat = np.lexsort(
        (la.ravel(), np.abs(la).ravel(), lb.ravel(), np.abs(lb).ravel(), value.ravel())
    )[0]
    a, b = np.unravel_index(flat, value.shape)
    cost = float(value[a, b])

    indices = [0] * lattice.M
    indices[-1], indices[-2] = int(b), int(a)
    for i in range(lattice.M - 1, 1, -1):
        indices[i - 2] = int(back[i - 1][indices[i - 1], indices[i]])
    return indices, cost


def brute_force(lattice: Lattice, tables: list[np.ndarray]) -> tuple[list[list[int]], float]:
    """Every minimum-cost index sequence by exhaustive enumeration (small lattices only)."""
    best: list[list[int]] = []
    best_cost = math.inf
    for tail in itertools.product(range(lattice.K), repeat=lattice.M - 1):
        seq = [0, *tail]
        cost = path_cost(tables, seq)
        if cost < best_cost:
            best, best_cost = [seq], cost
        elif cost == best_cost and math.isfinite(cost):
            best.append(seq)
    return best, best_cost


# ── coarse trajectory and labels ──────────────────────────────


@dataclass(frozen=True, eq=False)
class CoarseTrajectory:
    nodes: np.ndarray  # (M, 2): s, l
    decisions: dict[str, str]
    total_cost: float
    indices: tuple[int, ...] = ()
    nominal_speed: float = MIN_NOMINAL_SPEED
    blocking: tuple[str, ...] = field(default=())

    @property
    def path(self) -> FrenetPath:
        return FrenetPath(self.nodes[:, 0], self.nodes[:, 1])

    @property
    def s0(self) -> float:
        return float(self.nodes[0, 0])


@dataclass(frozen=True, eq=False)
class Occupancy:
    """Blocked ego-station interval per time sample; NaN where free."""

    t: np.ndarray
    s_lo: np.ndarray
    s_hi: np.ndarray

    @property
    def occupied(self) -> np.ndarray:
        return ~np.isnan(self.s_lo)

    @property
    def empty(self) -> bool:
        return not bool(self.occupied.any())


def sweep_occupancy(
    path: FrenetPath,
    prediction: PredictedTrajectory,
    scenario: Scenario,
    times: np.ndarray | None = None,
) -> Occupancy:
    """Sweep the vehicle discs along ``path`` against the predicted footprint.

    A path sample is blocked at time t when either disc comes within radius plus
    the lateral margin of the obstacle polygon. Stations are sampled on a fixed
    grid so repeated calls along the same path agree.
    """
    line = scenario.line
    cover = vehicle_cover(scenario)
    threshold = cover.radius + scenario.config.decision.lateral_margin
    times = prediction.t if times is None else np.asarray(times, dtype=float)

    start, end = float(path.s[0]), float(min(path.s[-1], line.length))
    if end <= start:
        s = np.array([start])
    else:
        inner = np.arange(math.floor(start / SWEEP_STEP) + 1, math.ceil(end / SWEEP_STEP))
        s = np.concatenate([[start], inner * SWEEP_STEP, [end]])
    s = np.clip(s, 0.0, line.length)
    xy, heading = from_frenet_many(s, path.l_at(s), line, path.dl_at(s))
    axis = np.column_stack([np.cos(heading), np.sin(heading)])
    centers = np.concatenate([xy + c * axis for c in cover.offsets])
    owner = np.tile(np.arange(len(s)), len(cover.offsets))
    points = shapely.points(centers)

    s_lo = np.full(len(times), np.nan)
    s_hi = np.full(len(times), np.nan)
    cache: dict[int, tuple[float, float]] = {}
    for j, tj in enumerate(times):
        k = 0 if prediction.static else prediction.index_at(float(tj))
        if k not in cache:
            poly = prediction.polygon(k)
            minx, miny, maxx, maxy = poly.bounds
            near = (
                (centers[:, 0] > minx - threshold)
                & (centers[:, 0] < maxx + threshold)
                & (centers[:, 1] > miny - threshold)
                & (centers[:, 1] < maxy + threshold)
            )
            hit_s = np.empty(0)
            if near.any():
                dist = shapely.distance(points[near], poly)
                hit_s = s[owner[near][dist < threshold]]
            cache[k] = (hit_s.min(), hit_s.max()) if len(hit_s) else (np.nan, np.nan)
        s_lo[j], s_hi[j] = cache[k]
    return Occupancy(t=times, s_lo=s_lo, s_hi=s_hi)


def _static_label(box: np.ndarray, path: FrenetPath, ignore: float) -> str:
    s_lo, s_hi, l_lo, l_hi = box
    start, end = float(path.s[0]), float(path.s[-1])
    if s_hi < start or s_lo > end:
        return "ignore"
    inside = path.s[(path.s > s_lo) & (path.s < s_hi)]
    s = np.concatenate([[max(s_lo, start)], inside, [min(s_hi, end)]])
    l = path.l_at(s)
    gap = np.maximum(np.maximum(l_lo - l, l - l_hi), 0.0)
    if gap.min() > ignore:
        return "ignore"
    if np.all(l >= l_hi):
        return "bypass_left"
    if np.all(l <= l_lo):
        return "bypass_right"
    return "yield"


def _dynamic_label(
    fld: _Field, occupancy: Occupancy, path: FrenetPath, s0: float, v_nom: float, ignore: float
) -> str:
    occupied = occupancy.occupied
    if occupied.any():
        k = int(np.argmax(occupied))
        arrival = (occupancy.s_lo[k] - s0) / v_nom
        return "yield" if arrival > occupancy.t[k] else "overtake"

    start, end = float(path.s[0]), float(path.s[-1])
    best_gap, side = math.inf, "ignore"
    for s_lo, s_hi, l_lo, l_hi in fld.boxes:
        if s_hi < start or s_lo > end:
            continue
        s = np.linspace(max(s_lo, start), min(s_hi, end), 5)
        l = path.l_at(s)
        gap = float(np.maximum(np.maximum(l_lo - l, l - l_hi), 0.0).min())
        if gap < best_gap:
            best_gap = gap
            centre = 0.5 * (l_lo + l_hi)
            side = "bypass_left" if float(np.mean(l)) >= centre else "bypass_right"
    if best_gap > ignore:
        return "ignore"
    return side


def dp_search(
    lattice: Lattice, predictions: list[PredictedTrajectory], scenario: Scenario
) -> CoarseTrajectory:
    """Minimum-cost node sequence over the lattice, with one label per obstacle.

    Raises:
        AllBlocked: every path to the last station has infinite cost.
    """
    cfg = scenario.config.decision
    tables = edge_cost_table(lattice, predictions, scenario)
    indices, cost = _search(lattice, tables)
    if not math.isfinite(cost):
        raise AllBlocked(f"no finite-cost path over {lattice.M} stations")

    l = np.array([lattice.samples(i)[k] for i, k in enumerate(indices)])
    nodes = np.column_stack([lattice.stations, l])
    path = FrenetPath(nodes[:, 0], nodes[:, 1])
    v_nom = nominal_speed(scenario)
    grow = _inflation(scenario)

    decisions: dict[str, str] = {}
    blocking = []
    for pred, fld in zip(predictions, _fields(predictions, scenario.line)):
        if fld.static:
            if _blocking(fld, lattice, grow):
                blocking.append(fld.id)
                decisions[fld.id] = "yield"
            else:
                decisions[fld.id] = _static_label(fld.boxes[0], path, cfg.ignore_distance)
        else:
            occ = sweep_occupancy(path, pred, scenario)
            decisions[fld.id] = _dynamic_label(
                fld, occ, path, lattice.start.s, v_nom, cfg.ignore_distance
            )
    logger.debug("coarse cost %.4f, decisions %s", cost, decisions)
    return CoarseTrajectory(
        nodes=nodes,
        decisions=decisions,
        total_cost=cost,
        indices=tuple(indices),
        nominal_speed=v_nom,
        blocking=tuple(blocking),
    )


# ── tunnel ────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Tunnel:
    stations: np.ndarray  # (N,) m
    lower: np.ndarray  # (N,) m
    upper: np.ndarray  # (N,) m
    cell: float  # m, each station owns [s - cell/2, s + cell/2]

    def window_bounds(self, s_lo: float, s_hi: float) -> tuple[float, float]:
        """Tightest bounds over every cell the station window [s_lo, s_hi] touches."""
        half = self.cell / 2.0
        mask = (self.stations + half >= s_lo) & (self.stations - half <= s_hi)
        if not mask.any():
            mask = np.zeros(len(self.stations), dtype=bool)
            mask[int(np.argmin(np.abs(self.stations - 0.5 * (s_lo + s_hi))))] = True
        return float(self.lower[mask].max()), float(self.upper[mask].min())


def path_stations(scenario: Scenario, s0: float) -> np.ndarray:
    cfg = scenario.config
    return s0 + np.arange(cfg.path.grid_count) * cfg.path_delta


def extract_tunnel(
    coarse: CoarseTrajectory,
    scenario: Scenario,
    predictions: list[PredictedTrajectory],
    stations: np.ndarray | None = None,
) -> Tunnel:
    """Per-station lateral bounds: road bounds tightened by the bypass decisions.

    Raises:
        TunnelCollapse: bounds narrower than the vehicle, or a coarse node
            outside the tunnel.
    """
    cfg = scenario.config.decision
    stations = path_stations(scenario, coarse.s0) if stations is None else stations
    cell = float(stations[1] - stations[0]) if len(stations) > 1 else scenario.config.path_delta
    hw = scenario.road_half_width
    lower = np.full(len(stations), -hw)
    upper = np.full(len(stations), hw)
    cell_lo, cell_hi = stations - cell / 2.0, stations + cell / 2.0

    for fld in _fields(predictions, scenario.line):
        label = coarse.decisions.get(fld.id, "ignore")
        if label not in ("bypass_left", "bypass_right"):
            continue
        if fld.static:
            boxes = np.repeat(fld.boxes[:1], len(stations), axis=0)
        else:
            k = fld.index_at((stations - coarse.s0) / coarse.nominal_speed)
            boxes = fld.boxes[k]
        hit = (boxes[:, 0] <= cell_hi) & (boxes[:, 1] >= cell_lo)
        if label == "bypass_left":
            lower = np.where(hit, np.maximum(lower, boxes[:, 3] + cfg.lateral_margin), lower)
        else:
            upper = np.where(hit, np.minimum(upper, boxes[:, 2] - cfg.lateral_margin), upper)

    narrow = np.flatnonzero(upper - lower < scenario.vehicle.width)
    if len(narrow):
        i = int(narrow[0])
        raise TunnelCollapse(
            f"tunnel [{lower[i]:.3f}, {upper[i]:.3f}] at s={stations[i]:.2f} "
            f"narrower than the vehicle"
        )

    tunnel = Tunnel(stations=stations, lower=lower, upper=upper, cell=cell)
    for s, l in coarse.nodes:
        if s > stations[-1] + cell / 2.0:
            break
        i = int(np.argmin(np.abs(stations - s)))
        if not lower[i] + CLEARANCE_SLACK <= l <= upper[i] - CLEARANCE_SLACK:
            raise TunnelCollapse(
                f"coarse node l={l:.3f} at s={s:.2f} outside [{lower[i]:.3f}, {upper[i]:.3f}]"
            )
    return tunnel


# ── s-t constraints ───────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class StConstraintSet:
    t: np.ndarray  # (N,) s
    s_lower: np.ndarray  # (N,) m
    s_upper: np.ndarray  # (N,) m
    regions: dict[str, Occupancy] = field(default_factory=dict)


def max_reach(
    s0: float, v0: float, max_accel: float, max_speed: float, t: np.ndarray
) -> np.ndarray:
    """Farthest station reachable by full acceleration up to the speed cap."""
    t = np.asarray(t, dtype=float)
    cap = max(max_speed, v0)
    if max_accel <= 0.0:
        return s0 + v0 * t
    t_cap = (cap - v0) / max_accel
    ramp = v0 * t + 0.5 * max_accel * t * t
    cruise = v0 * t_cap + 0.5 * max_accel * t_cap * t_cap + cap * (t - t_cap)
    return s0 + np.where(t <= t_cap, ramp, cruise)


def extract_st_constraints(
    coarse: CoarseTrajectory,
    path: FrenetPath,
    predictions: list[PredictedTrajectory],
    scenario: Scenario,
    times: np.ndarray | None = None,
    start_speed: float | None = None,
) -> StConstraintSet:
    """Station bounds per speed-grid time from the yield/overtake decisions.

    Raises:
        StInfeasible: the bounds cross, or the lower bound is out of reach.
    """
    cfg = scenario.config
    if times is None:
        times = np.arange(cfg.speed.grid_count) * cfg.speed_delta
    s0 = float(path.s[0])
    goal = scenario.goal_s if cfg.sim.stop_at_goal else scenario.line.length
    s_lower = np.full(len(times), s0)
    s_upper = np.full(len(times), max(goal, s0))
    margin = cfg.decision.longitudinal_margin

    regions: dict[str, Occupancy] = {}
    for pred in predictions:
        label = coarse.decisions.get(pred.obstacle_id, "ignore")
        if label == "ignore" or (pred.static and label.startswith("bypass")):
            continue
        occ = sweep_occupancy(path, pred, scenario, times)
        if occ.empty:
            continue
        regions[pred.obstacle_id] = occ
        hit = occ.occupied
        if label == "overtake":
            s_lower[hit] = np.maximum(s_lower[hit], occ.s_hi[hit] + margin)
        else:
            s_upper[hit] = np.minimum(s_upper[hit], occ.s_lo[hit] - margin)

    s_upper = np.minimum.accumulate(s_upper[::-1])[::-1]
    s_lower = np.maximum.accumulate(s_lower)
    s_upper = np.where((s_upper < s0) & (s_upper >= s0 - STOP_TOLERANCE), s0, s_upper)

    crossed = np.flatnonzero(s_lower > s_upper)
    if len(crossed):
        j = int(crossed[0])
        raise StInfeasible(
            f"s-t corridor empty at t={times[j]:.2f}: "
            f"lower {s_lower[j]:.3f} > upper {s_upper[j]:.3f}"
        )
    v0 = scenario.ego.speed if start_speed is None else start_speed
    vehicle = scenario.vehicle
    reach = max_reach(s0, v0, vehicle.max_accel, vehicle.max_speed, times)
    late = np.flatnonzero(s_lower > reach + 1e-9)
    if len(late):
        j = int(late[0])
        raise StInfeasible(
            f"station {s_lower[j]:.3f} out of reach by t={times[j]:.2f} (max {reach[j]:.3f})"
        )
    return StConstraintSet(t=times, s_lower=s_lower, s_upper=s_upper, regions=regions)
