"""Reference lines and Cartesian <-> frenet conversion.

The reference line is a polyline with a normal attached to every vertex.
Inside a segment the normal blends linearly between its two vertex normals,
so every point near the line has one (s, l) and conversion in both
directions is closed-form per segment:

- to_frenet solves a per-segment quadratic for the blend parameter t and keeps
  the global minimum over segments
- from_frenet walks the same blend forward
- points before the start or past the end clamp to the endpoint station and
  measure l along the endpoint normal

This is not the Euclidean closest-point projection. On straight runs the two
agree exactly; near a bent vertex the blended normal gives a slightly
different (s, l), in exchange for a map that from_frenet inverts exactly and
that stays continuous where closest-point projection would jump between
segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from shapely import affinity
from shapely.geometry import Polygon

from .errors import AmbiguousProjection, DegeneratePolyline, StationOutOfRange

MIN_SPACING = 1e-9  # m, consecutive points closer than this are merged
STATION_TOL = 1e-9  # m, slack on station range checks
TIE_TOL = 1e-9  # m, projection distances this close count as a tie
TIE_SEPARATION = 1.0  # m, tied stations farther apart than this are ambiguous


def wrap_angle(angle: float) -> float:
    """Wrap an angle to [-pi, pi); angles already in range come back unchanged."""
    if -math.pi <= angle < math.pi:
        return angle
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class FrenetPose:
    s: float
    l: float
    dl_ds: float = 0.0
    ddl_ds2: float | None = None


@dataclass(frozen=True, eq=False)
class ReferenceLine:
    """Arc-length parametrized centerline. Build with :func:`arc_length_parametrize`."""

    points: np.ndarray  # (n, 2) m
    s: np.ndarray  # (n,) m
    heading: np.ndarray  # (n,) rad, unwrapped
    curvature: np.ndarray  # (n,) 1/m
    normals: np.ndarray = field(repr=False)  # (n, 2) unit left normals at vertices

    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def max_abs_curvature(self) -> float:
        return float(np.max(np.abs(self.curvature)))

    def heading_at(self, s: float | np.ndarray) -> np.ndarray:
        return np.interp(s, self.s, self.heading)

    def curvature_at(self, s: float | np.ndarray) -> np.ndarray:
        return np.interp(s, self.s, self.curvature)

    def curvature_rate_at(self, s: float | np.ndarray) -> np.ndarray:
        if len(self.s) < 3:
            return np.zeros_like(np.asarray(s, dtype=float))
        return np.interp(s, self.s, np.gradient(self.curvature, self.s))


# ── construction ──────────────────────────────────────────────


def _dedupe(points: np.ndarray) -> np.ndarray:
    keep = [0]
    for i in range(1, len(points)):
        if np.linalg.norm(points[i] - points[keep[-1]]) > MIN_SPACING:
            keep.append(i)
    return points[keep]


def _menger_curvature(points: np.ndarray) -> np.ndarray:
    """Signed three-point curvature; endpoints copy their neighbor."""
    n = len(points)
    kappa = np.zeros(n)
    if n < 3:
        return kappa
    a = points[1:-1] - points[:-2]
    b = points[2:] - points[1:-1]
    c = points[2:] - points[:-2]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) * np.linalg.norm(c, axis=1)
    kappa[1:-1] = np.where(denom > 0.0, 2.0 * cross / np.maximum(denom, 1e-300), 0.0)
    kappa[0] = kappa[1]
    kappa[-1] = kappa[-2]
    return kappa


def arc_length_parametrize(polyline: Sequence[Sequence[float]] | np.ndarray) -> ReferenceLine:
    """Build a ReferenceLine from ordered 2-D points.

    Raises:
        DegeneratePolyline: fewer than two distinct points.
    """
    raw = np.asarray(polyline, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != 2 or len(raw) == 0:
        raise DegeneratePolyline("polyline needs at least 2 distinct [x, y] points")
    points = _dedupe(raw)
    if len(points) < 2:
        raise DegeneratePolyline("polyline needs at least 2 distinct [x, y] points")

    seg = np.diff(points, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg_len)])

    unit = seg / seg_len[:, None]
    tangents = np.empty_like(points)
    tangents[0] = unit[0]
    tangents[-1] = unit[-1]
    if len(points) > 2:
        blend = unit[:-1] + unit[1:]
        norms = np.linalg.norm(blend, axis=1)
        # a full reversal has no bisector; fall back to the incoming segment
        blend = np.where(norms[:, None] > 1e-12, blend, unit[:-1])
        tangents[1:-1] = blend / np.linalg.norm(blend, axis=1)[:, None]
    heading = np.unwrap(np.arctan2(tangents[:, 1], tangents[:, 0]))
    normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])

    return ReferenceLine(
        points=points,
        s=s,
        heading=heading,
        curvature=_menger_curvature(points),
        normals=normals,
    )


# ── projection ────────────────────────────────────────────────


def _cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _project(line: ReferenceLine, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Candidate stations, offsets and distances, shape (P, 2 * segments + 2).

    Per segment the blend parameter t solves cross(n(t), p - c(t)) = 0, a
    quadratic in t; both roots are candidates. The last two columns are the
    endpoint clamps. Absent candidates carry an infinite distance.
    """
    p = points[:, None, :]
    a = line.points[:-1]
    d = line.points[1:] - a
    na = line.normals[:-1]
    dn = line.normals[1:] - na
    seg_len = np.diff(line.s)
    w = p - a

    c2 = np.broadcast_to(-_cross(dn, d), w.shape[:2])
    c1 = _cross(dn, w) - _cross(na, d)
    c0 = _cross(na, w)

    with np.errstate(divide="ignore", invalid="ignore"):
        linear = np.abs(c2) < 1e-12 * np.maximum(np.abs(c1), 1.0)
        disc = c1 * c1 - 4.0 * c2 * c0
        root = np.sqrt(np.where(disc >= 0.0, disc, 0.0))
        q = -0.5 * (c1 + np.where(c1 >= 0.0, root, -root))
        t1 = np.where(linear, -c0 / c1, q / c2)
        t2 = np.where(linear | (disc < 0.0), np.nan, c0 / q)
        t1 = np.where(~linear & (disc < 0.0), np.nan, t1)

    ss, ll, dist = [], [], []
    for t in (t1, t2):
        ok = np.isfinite(t) & (t >= -1e-12) & (t <= 1.0 + 1e-12)
        tt = np.where(ok, np.clip(t, 0.0, 1.0), 0.0)
        c = a + tt[..., None] * d
        n = na + tt[..., None] * dn
        n = n / np.linalg.norm(n, axis=-1, keepdims=True)
        r = p - c
        ss.append(line.s[:-1] + tt * seg_len)
        ll.append(np.einsum("psk,psk->ps", r, n))
        dist.append(np.where(ok, np.linalg.norm(r, axis=-1), np.inf))

    for idx in (0, -1):
        r = points - line.points[idx]
        ss.append(np.full((len(points), 1), line.s[idx]))
        ll.append((r @ line.normals[idx])[:, None])
        dist.append(np.linalg.norm(r, axis=1)[:, None])

    return np.concatenate(ss, axis=1), np.concatenate(ll, axis=1), np.concatenate(dist, axis=1)


def to_frenet_many(
    points: np.ndarray | Sequence[Sequence[float]], line: ReferenceLine, strict: bool = False
) -> np.ndarray:
    """Project many points at once; returns an (n, 2) array of (s, l).

    Raises:
        AmbiguousProjection: only when ``strict`` and some point ties between
            two stations more than 1 m apart.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    s_cand, l_cand, dist = _project(line, pts)
    best = np.argmin(dist, axis=1)
    rows = np.arange(len(pts))
    if strict:
        tied = dist <= dist[rows, best][:, None] + TIE_TOL
        spread = np.where(tied, s_cand, -np.inf).max(axis=1) - np.where(
            tied, s_cand, np.inf
        ).min(axis=1)
        bad = np.flatnonzero(spread > TIE_SEPARATION)
        if len(bad):
            p = pts[bad[0]]
            raise AmbiguousProjection(
                f"point ({p[0]:.3f}, {p[1]:.3f}) ties between stations "
                f"{spread[bad[0]]:.3f} m apart"
            )
    return np.column_stack([s_cand[rows, best], l_cand[rows, best]])


def to_frenet(
    position: Sequence[float] | np.ndarray,
    line: ReferenceLine,
    heading: float | None = None,
) -> FrenetPose:
    """Project a point onto the line.

    When ``heading`` is given, dl_ds is filled from the heading difference.

    Raises:
        AmbiguousProjection: two stations more than 1 m apart tie for closest.
    """
    (s, l), = to_frenet_many(np.asarray(position, dtype=float)[None, :], line, strict=True)
    s, l = float(s), float(l)
    dl_ds = 0.0
    if heading is not None:
        delta = wrap_angle(heading - float(line.heading_at(s)))
        dl_ds = (1.0 - float(line.curvature_at(s)) * l) * math.tan(delta)
    return FrenetPose(s=s, l=l, dl_ds=dl_ds)


def _frame(line: ReferenceLine, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centerline points and unit normals at stations already inside [0, length]."""
    idx = np.clip(np.searchsorted(line.s, s, side="right") - 1, 0, len(line.s) - 2)
    seg_len = line.s[idx + 1] - line.s[idx]
    t = (s - line.s[idx]) / seg_len
    c = line.points[idx] + t[:, None] * (line.points[idx + 1] - line.points[idx])
    n = line.normals[idx] + t[:, None] * (line.normals[idx + 1] - line.normals[idx])
    n /= np.linalg.norm(n, axis=1)[:, None]
    return c, n


def from_frenet_many(
    s: np.ndarray, l: np.ndarray, line: ReferenceLine, dl_ds: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`from_frenet`; returns (positions (n, 2), headings (n,)).

    Raises:
        StationOutOfRange: any station outside [0, length].
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    l = np.broadcast_to(np.asarray(l, dtype=float), s.shape)
    if np.any(s < -STATION_TOL) or np.any(s > line.length + STATION_TOL):
        bad = s[(s < -STATION_TOL) | (s > line.length + STATION_TOL)][0]
        raise StationOutOfRange(f"station {bad:.6f} outside [0, {line.length:.6f}]")
    s = np.clip(s, 0.0, line.length)
    c, n = _frame(line, s)
    positions = c + l[:, None] * n
    headings = np.arctan2(-n[:, 0], n[:, 1])
    if dl_ds is not None:
        headings = headings + np.arctan(np.asarray(dl_ds, dtype=float))
    return positions, headings


def from_frenet(pose: FrenetPose, line: ReferenceLine) -> Pose:
    """Map a frenet pose back to a Cartesian position and heading.

    Raises:
        StationOutOfRange: pose.s outside [0, length].
    """
    positions, headings = from_frenet_many(
        np.array([pose.s]), np.array([pose.l]), line, np.array([pose.dl_ds])
    )
    return Pose(float(positions[0, 0]), float(positions[0, 1]), float(headings[0]))


def compose_curvature(
    line: ReferenceLine, s: np.ndarray, l: np.ndarray, dl: np.ndarray, ddl: np.ndarray
) -> np.ndarray:
    """Cartesian curvature of a frenet path l(s) (standard frenet-to-Cartesian composition)."""
    kr = line.curvature_at(s)
    dkr = line.curvature_rate_at(s)
    one_minus = 1.0 - kr * l
    tan_dt = dl / one_minus
    cos_dt = 1.0 / np.sqrt(1.0 + tan_dt * tan_dt)
    inner = ddl + (dkr * l + kr * dl) * tan_dt
    return (inner * cos_dt * cos_dt / one_minus + kr) * cos_dt / one_minus


# ── footprints ────────────────────────────────────────────────


def rectangle(length: float, width: float) -> np.ndarray:
    """Body-frame rectangle centered on the reference point, counter-clockwise."""
    hl, hw = length / 2.0, width / 2.0
    return np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])


def place_footprint(footprint: np.ndarray | Sequence[Sequence[float]], pose: Pose) -> Polygon:
    """Body-frame polygon moved to a world pose."""
    body = Polygon(np.asarray(footprint, dtype=float))
    rotated = affinity.rotate(body, pose.heading, origin=(0.0, 0.0), use_radians=True)
    return affinity.translate(rotated, pose.x, pose.y)


def vehicle_polygon(length: float, width: float, pose: Pose) -> Polygon:
    return place_footprint(rectangle(length, width), pose)


@dataclass(frozen=True)
class CircleCover:
    """Discs covering the vehicle body; centers sit on the body axis at ``offsets``."""

    offsets: tuple[float, ...]  # m, signed longitudinal offsets from the reference point
    radius: float  # m
    max_heading: float = 0.0  # rad, heading bound the linearization is valid for

    @property
    def lateral_slack(self) -> float:
        """Worst error of l + c·l' against the true lateral offset l + c·sin(theta)."""
        c = max(abs(o) for o in self.offsets)
        return c * (math.tan(self.max_heading) - math.sin(self.max_heading))

    @property
    def longitudinal_slack(self) -> float:
        c = max(abs(o) for o in self.offsets)
        return c * (1.0 - math.cos(self.max_heading))

    @property
    def reach(self) -> float:
        """Farthest station distance a disc can touch from the reference point."""
        return max(abs(o) for o in self.offsets) + self.radius + self.longitudinal_slack


def two_circle_cover(length: float, width: float, max_heading: float = 0.0) -> CircleCover:
    """Two discs at 25% and 75% of the body length that exactly cover the rectangle."""
    c = length / 4.0
    return CircleCover(offsets=(-c, c), radius=math.hypot(c, width / 2.0), max_heading=max_heading)
