"""Intersection world model and the geometric predicates used by the channel model.

Coordinates are 2-D Cartesian meters with the origin at the intersection center.
Points are handled as ``numpy`` arrays of shape ``(2,)`` (or ``(M, 2)`` for the
vectorized helpers); any array-like of two floats is accepted on input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError, DataError

# relative tolerance on the segment parameter when deciding boundary contact
_T_TOL = 1e-9
_UNIT_TOL = 1e-6


def as_point(p: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"expected a 2-D point, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point has non-finite coordinates: {arr}")
    return arr


def _cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _polygon_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _check_simple(vertices: np.ndarray, what: str) -> None:
    n = len(vertices)
    if n < 3:
        raise ConfigError(f"{what} needs at least 3 vertices, got {n}")
    if not np.all(np.isfinite(vertices)):
        raise ConfigError(f"{what} has non-finite vertices")
    edges_a = vertices
    edges_b = np.roll(vertices, -1, axis=0)
    if np.any(np.all(np.isclose(edges_a, edges_b), axis=1)):
        raise ConfigError(f"{what} has repeated consecutive vertices")
    for i in range(n):
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(edges_a[i], edges_b[i], edges_a[j], edges_b[j]):
                raise ConfigError(f"{what} is self-intersecting (edges {i} and {j})")
    if abs(_polygon_area(vertices)) <= 0.0:
        raise ConfigError(f"{what} has zero area")


def _segments_cross(p: np.ndarray, p2: np.ndarray, q: np.ndarray, q2: np.ndarray) -> bool:
    r, s = p2 - p, q2 - q
    denom = _cross(r, s)
    qp = q - p
    if abs(denom) < 1e-15 * max(np.dot(r, r), np.dot(s, s), 1.0):
        if abs(_cross(qp, r)) > 1e-12 * max(np.dot(r, r), 1.0):
            return False
        rr = np.dot(r, r)
        t0 = np.dot(qp, r) / rr
        t1 = np.dot(q2 - p, r) / rr
        return min(max(t0, t1), 1.0) >= max(min(t0, t1), 0.0)
    t = _cross(qp, s) / denom
    u = _cross(qp, r) / denom
    return 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0


@dataclass(frozen=True)
class WallSegment:
    """A facade segment with an outward unit normal."""

    p0: NDArray[np.float64]
    p1: NDArray[np.float64]
    normal: NDArray[np.float64]

    def __post_init__(self) -> None:
        p0, p1 = as_point(self.p0), as_point(self.p1)
        n = as_point(self.normal)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "normal", n)
        d = p1 - p0
        length = float(np.hypot(*d))
        if length == 0.0:
            raise ValueError("wall segment has coincident endpoints")
        if abs(np.hypot(*n) - 1.0) > _UNIT_TOL:
            raise ValueError(f"wall normal is not a unit vector: {n}")
        if abs(np.dot(n, d)) > _UNIT_TOL * length:
            raise ValueError("wall normal is not perpendicular to the wall")

    @classmethod
    def from_points(cls, p0: ArrayLike, p1: ArrayLike, side: str = "left") -> "WallSegment":
        """Build a wall whose normal points to the ``left`` or ``right`` of p0 -> p1."""
        a, b = as_point(p0), as_point(p1)
        d = b - a
        length = np.hypot(*d)
        if length == 0.0:
            raise ValueError("wall segment has coincident endpoints")
        left = np.array([-d[1], d[0]]) / length
        if side == "left":
            return cls(a, b, left)
        if side == "right":
            return cls(a, b, -left)
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.p1 - self.p0)))

    def distance_to(self, points: ArrayLike) -> np.ndarray:
        """Euclidean distance from each point to the closed segment."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.p1 - self.p0
        t = np.clip((pts - self.p0) @ d / np.dot(d, d), 0.0, 1.0)
        proj = self.p0 + t[:, None] * d
        return np.hypot(*(pts - proj).T)


@dataclass(frozen=True)
class BuildingPolygon:
    """Footprint of an obstructing building."""

    vertices: NDArray[np.float64]

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ConfigError(f"building vertices must have shape (K, 2), got {v.shape}")
        _check_simple(v, "building polygon")
        object.__setattr__(self, "vertices", v)


@dataclass(frozen=True)
class AreaPolygon:
    """A scattering or foliage area.

    ``classes`` optionally restricts which scatterer kinds may populate a
    scattering area; ``None`` means every non-wall kind.
    """

    vertices: NDArray[np.float64]
    kind: str = "scattering"
    classes: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        if self.kind not in ("scattering", "foliage"):
            raise ConfigError(f"area kind must be 'scattering' or 'foliage', got {self.kind!r}")
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ConfigError(f"area vertices must have shape (K, 2), got {v.shape}")
        _check_simple(v, f"{self.kind} area")
        object.__setattr__(self, "vertices", v)
        if self.classes is not None:
            object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def area(self) -> float:
        return abs(_polygon_area(self.vertices))

    def contains(self, points: ArrayLike) -> np.ndarray:
        return points_in_polygon(points, self.vertices)


@dataclass(frozen=True)
class IntersectionMap:
    walls: tuple[WallSegment, ...] = ()
    buildings: tuple[BuildingPolygon, ...] = ()
    scattering_areas: tuple[AreaPolygon, ...] = ()
    foliage_areas: tuple[AreaPolygon, ...] = ()
    name: str = "map"

    def __post_init__(self) -> None:
        for attr in ("walls", "buildings", "scattering_areas", "foliage_areas"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        for a in self.foliage_areas:
            if a.kind != "foliage":
                raise ConfigError("foliage_areas entries must have kind 'foliage'")
        for a in self.scattering_areas:
            if a.kind != "scattering":
                raise ConfigError("scattering_areas entries must have kind 'scattering'")

    def bounding_box(self) -> Optional[tuple[float, float, float, float]]:
        """(xmin, ymin, xmax, ymax) over all map geometry, or None for an empty map."""
        pts = [w.p0 for w in self.walls] + [w.p1 for w in self.walls]
        for poly in (*self.buildings, *self.scattering_areas, *self.foliage_areas):
            pts.extend(poly.vertices)
        if not pts:
            return None
        arr = np.asarray(pts)
        return (float(arr[:, 0].min()), float(arr[:, 1].min()),
                float(arr[:, 0].max()), float(arr[:, 1].max()))


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    position: NDArray[np.float64]
    heading: float


@dataclass(frozen=True)
class VehicleTrajectory:
    """Time-stamped vehicle positions and headings, linearly interpolated."""

    t: NDArray[np.float64]
    xy: NDArray[np.float64]
    heading: NDArray[np.float64]

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float).ravel()
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        hd = np.asarray(self.heading, dtype=float).ravel()
        if not (len(t) == len(xy) == len(hd)) or len(t) == 0:
            raise DataError("trajectory columns must be non-empty and of equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(xy)) and np.all(np.isfinite(hd))):
            raise DataError("trajectory contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise DataError("trajectory times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "heading", hd)

    @classmethod
    def straight(cls, start: ArrayLike, velocity: ArrayLike, t_start: float, t_stop: float,
                 n: int = 2) -> "VehicleTrajectory":
        """Constant-velocity trajectory; heading follows the velocity vector."""
        v = as_point(velocity)
        t = np.linspace(t_start, t_stop, n)
        xy = as_point(start) + (t - t_start)[:, None] * v
        heading = np.full(n, np.arctan2(v[1], v[0]) if np.any(v) else 0.0)
        return cls(t, xy, heading)

    def sample(self, times: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """Positions ``(T, 2)`` and headings ``(T,)`` at the requested times."""
        tq = np.atleast_1d(np.asarray(times, dtype=float))
        lo, hi = self.t[0], self.t[-1]
        span_tol = 1e-9 * max(1.0, abs(lo), abs(hi))
        if np.any(tq < lo - span_tol) or np.any(tq > hi + span_tol):
            raise DataError(
                f"requested times [{tq.min():g}, {tq.max():g}] s extrapolate the "
                f"trajectory span [{lo:g}, {hi:g}] s")
        tq = np.clip(tq, lo, hi)
        if len(self.t) == 1:
            return np.repeat(self.xy, len(tq), axis=0), np.repeat(self.heading, len(tq))
        x = np.interp(tq, self.t, self.xy[:, 0])
        y = np.interp(tq, self.t, self.xy[:, 1])
        # shortest-arc interpolation: unwrap first so interp never crosses the long way
        heading = np.interp(tq, self.t, np.unwrap(self.heading))
        heading = (heading + np.pi) % (2 * np.pi) - np.pi
        return np.column_stack([x, y]), heading


Pattern = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AntennaElement:
    """One antenna element: a vehicle-frame offset and an azimuth pattern.

    ``pattern`` is either None (isotropic, gain 1+0j) or an azimuth table given
    as ``(azimuths_rad, complex_gains)``; the table is interpolated periodically.
    """

    offset: NDArray[np.float64] = field(default_factory=lambda: np.zeros(2))
    pattern: Optional[tuple[NDArray[np.float64], NDArray[np.complex128]]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "offset", as_point(self.offset))
        if self.pattern is not None:
            az = np.asarray(self.pattern[0], dtype=float)
            g = np.asarray(self.pattern[1], dtype=complex)
            if az.ndim != 1 or az.shape != g.shape or len(az) < 1:
                raise ConfigError("antenna pattern needs matching 1-D azimuth and gain tables")
            order = np.argsort(np.mod(az, 2 * np.pi))
            object.__setattr__(self, "pattern", (np.mod(az, 2 * np.pi)[order], g[order]))

    def gain(self, azimuth: ArrayLike) -> np.ndarray:
        az = np.mod(np.asarray(azimuth, dtype=float), 2 * np.pi)
        if self.pattern is None:
            return np.ones(az.shape, dtype=complex)
        tab_az, tab_g = self.pattern
        re = np.interp(az, tab_az, tab_g.real, period=2 * np.pi)
        im = np.interp(az, tab_az, tab_g.imag, period=2 * np.pi)
        return re + 1j * im


@dataclass(frozen=True)
class AntennaLayout:
    elements: tuple[AntennaElement, ...] = (AntennaElement(),)

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))
        if len(self.elements) < 1:
            raise ConfigError("antenna layout needs at least one element")

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([e.offset for e in self.elements])


def points_in_polygon(points: ArrayLike, vertices: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon test. Boundary points may fall on either side."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    px, py = pts[:, 0][:, None], pts[:, 1][:, None]
    xi, yi = vertices[:, 0][None, :], vertices[:, 1][None, :]
    xj, yj = np.roll(vertices[:, 0], -1)[None, :], np.roll(vertices[:, 1], -1)[None, :]
    straddles = (yi > py) != (yj > py)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x_cross = xi + (py - yi) * (xj - xi) / (yj - yi)
    crossings = straddles & (px < x_cross)
    return (np.count_nonzero(crossings, axis=1) % 2) == 1


def _as_polygons(buildings: Sequence) -> list[np.ndarray]:
    polys = []
    for b in buildings:
        v = b.vertices if hasattr(b, "vertices") else np.asarray(b, dtype=float)
        if len(v) < 3:
            raise ConfigError(f"degenerate polygon with {len(v)} vertices")
        polys.append(np.asarray(v, dtype=float))
    return polys


def _edge_table(polys: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edge starts, edge vectors and per-polygon bounding boxes for a building set."""
    C = np.concatenate(polys)
    s = np.concatenate([np.roll(V, -1, axis=0) - V for V in polys])
    boxes = np.array([[V[:, 0].min(), V[:, 1].min(), V[:, 0].max(), V[:, 1].max()] for V in polys])
    return C, s, boxes


def segments_obstructed(a: ArrayLike, b: ArrayLike, buildings: Sequence) -> np.ndarray:
    """Vectorized :func:`segment_obstructed` over ``M`` segments ``a[i] -> b[i]``."""
    A = np.atleast_2d(np.asarray(a, dtype=float))
    B = np.atleast_2d(np.asarray(b, dtype=float))
    A, B = np.broadcast_arrays(A, B)
    polys = _as_polygons(buildings)
    if not polys or len(A) == 0:
        return np.zeros(len(A), dtype=bool)
    r = B - A
    rr = np.einsum("ij,ij->i", r, r)
    if np.any(rr == 0.0):
        raise ValueError("segment endpoints must differ")
    C, s, boxes = _edge_table(polys)
    blocked = np.zeros(len(A), dtype=bool)
    # only segments whose bounding box meets some building's box can be obstructed
    lo, hi = np.minimum(A, B), np.maximum(A, B)
    cand = np.flatnonzero(np.any((lo[:, None, 0] <= boxes[None, :, 2]) & (hi[:, None, 0] >= boxes[None, :, 0])
                                 & (lo[:, None, 1] <= boxes[None, :, 3]) & (hi[:, None, 1] >= boxes[None, :, 1]),
                                 axis=1))
    if len(cand) == 0:
        return blocked
    A, B, r, rr = A[cand], B[cand], r[cand], rr[cand]
    rlen = np.sqrt(rr)
    # every edge of every building in one pass
    slen = np.hypot(s[:, 0], s[:, 1])
    qx = C[None, :, 0] - A[:, 0, None]                     # (M, K)
    qy = C[None, :, 1] - A[:, 1, None]
    rx, ry = r[:, 0, None], r[:, 1, None]
    sx, sy = s[None, :, 0], s[None, :, 1]
    denom = rx * sy - ry * sx
    q_x_s = qx * sy - qy * sx
    q_x_r = qx * ry - qy * rx
    parallel = np.abs(denom) <= 1e-12 * (rlen[:, None] * slen[None, :])
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = q_x_s / denom
        u = q_x_r / denom
    hit = (~parallel & (t > _T_TOL) & (t < 1 - _T_TOL)
           & (u >= -_T_TOL) & (u <= 1 + _T_TOL))
    # edges lying on the segment's own line: overlap inside (0, 1) counts
    collinear = parallel & (np.abs(q_x_r) <= 1e-9 * rlen[:, None] * np.maximum(slen[None, :], 1.0))
    if np.any(collinear):
        t0 = (qx * rx + qy * ry) / rr[:, None]
        t1 = t0 + (sx * rx + sy * ry) / rr[:, None]
        lo = np.maximum(np.minimum(t0, t1), 0.0)
        hi = np.minimum(np.maximum(t0, t1), 1.0)
        hit |= collinear & (hi - lo > _T_TOL)
    sub = np.any(hit, axis=1)
    # no boundary contact in the open segment: it is wholly inside or outside a building
    rest = np.flatnonzero(~sub)
    if len(rest):
        mid = 0.5 * (A[rest] + B[rest])
        for V, (x0, y0, x1, y1) in zip(polys, boxes):
            near = ((mid[:, 0] >= x0) & (mid[:, 0] <= x1)
                    & (mid[:, 1] >= y0) & (mid[:, 1] <= y1))
            if np.any(near):
                idx = np.flatnonzero(near)
                sub[rest[idx[points_in_polygon(mid[idx], V)]]] = True
    blocked[cand] = sub
    return blocked


def segment_obstructed(a: ArrayLike, b: ArrayLike, buildings: Sequence) -> bool:
    """True iff the open segment (a, b) meets the interior or boundary of a building.

    Endpoints lying on a building boundary do not by themselves obstruct, so a
    scatterer sitting on a facade can still see out.
    """
    pa, pb = as_point(a), as_point(b)
    if np.array_equal(pa, pb):
        raise ValueError("segment endpoints must differ")
    return bool(segments_obstructed(pa[None, :], pb[None, :], buildings)[0])


def path_blockage_gain(points: Sequence[ArrayLike], buildings: Sequence) -> int:
    """1 if every leg of the polyline is unobstructed, else 0."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("a path needs at least two points (Tx and Rx)")
    legs = segments_obstructed(pts[:-1], pts[1:], buildings)
    return int(not np.any(legs))


def incidence_angles(prev: ArrayLike, scat: ArrayLike, next_: ArrayLike,
                     normal: ArrayLike) -> tuple[float, float]:
    """Signed incoming/outgoing angles at a scatterer, measured from its normal.

    ``b`` points from the scatterer back toward the previous interaction and
    ``a`` toward the next one, so a wave arriving and leaving along the normal
    gives (0, 0) and a specular bounce gives theta1 == theta2.
    """
    s = as_point(scat)
    b = as_point(prev) - s
    a = as_point(next_) - s
    n = as_point(normal)
    if not np.any(b) or not np.any(a):
        raise ValueError("incidence angles need distinct points")
    if abs(np.hypot(*n) - 1.0) > _UNIT_TOL:
        raise ValueError("normal must be a unit vector")
    th1, th2 = incidence_angles_vec(b, a, n)
    return float(th1), float(th2)


def incidence_angles_vec(b: np.ndarray, a: np.ndarray, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`incidence_angles` on direction vectors (broadcasting)."""
    b, a, n = np.asarray(b), np.asarray(a), np.asarray(n)
    th1 = np.arctan2(b[..., 1] * n[..., 0] - b[..., 0] * n[..., 1],
                     b[..., 0] * n[..., 0] + b[..., 1] * n[..., 1])
    th2 = np.arctan2(a[..., 0] * n[..., 1] - a[..., 1] * n[..., 0],
                     a[..., 0] * n[..., 0] + a[..., 1] * n[..., 1])
    # arctan2 returns -pi for a (-0) imaginary part; fold onto +pi
    th1 = np.where(th1 == -np.pi, np.pi, th1)
    th2 = np.where(th2 == -np.pi, np.pi, th2)
    return th1, th2


def antenna_world_position(sample: TrajectorySample | tuple, offset: ArrayLike) -> np.ndarray:
    """Vehicle position plus the offset rotated by the vehicle heading."""
    if isinstance(sample, TrajectorySample):
        pos, heading = sample.position, sample.heading
    else:
        _, pos, heading = sample
    c, s = np.cos(heading), np.sin(heading)
    off = as_point(offset)
    return as_point(pos) + np.array([c * off[0] - s * off[1], s * off[0] + c * off[1]])


def antenna_positions(xy: np.ndarray, heading: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """World positions ``(T, E, 2)`` for ``T`` vehicle poses and ``E`` element offsets."""
    c, s = np.cos(heading)[:, None], np.sin(heading)[:, None]
    ox, oy = offsets[None, :, 0], offsets[None, :, 1]
    return np.stack([xy[:, None, 0] + c * ox - s * oy,
                     xy[:, None, 1] + s * ox + c * oy], axis=-1)


@dataclass(frozen=True)
class DiffractionGeometry:
    phi: float
    d1: float
    d2: float
    corner: Optional[NDArray[np.float64]]


def bending_angle(tx: np.ndarray, v: np.ndarray, rx: np.ndarray) -> float:
    """pi minus the angle at ``v`` of the path tx -> v -> rx (0 for a straight path)."""
    u, w = tx - v, rx - v
    cosang = np.dot(u, w) / (np.hypot(*u) * np.hypot(*w))
    return float(np.pi - np.arccos(np.clip(cosang, -1.0, 1.0)))


def los_diffraction_geometry(tx: ArrayLike, rx: ArrayLike,
                             buildings: Sequence) -> Optional[DiffractionGeometry]:
    """Dominant knife edge for a blocked direct path, or None when the path is clear.

    Candidate edges are building corners reachable from both ends by clear
    legs; the one with the smallest bending angle wins. Without any such corner
    the angle saturates at pi/2 and the distances split the direct path.
    """
    a, b = as_point(tx), as_point(rx)
    if np.array_equal(a, b):
        raise ValueError("tx and rx must differ")
    if not segment_obstructed(a, b, buildings):
        return None
    corners = [v for poly in _as_polygons(buildings) for v in poly
               if not (np.array_equal(v, a) or np.array_equal(v, b))]
    best: Optional[DiffractionGeometry] = None
    if corners:
        V = np.asarray(corners)
        clear = (~segments_obstructed(np.broadcast_to(a, V.shape), V, buildings)
                 & ~segments_obstructed(V, np.broadcast_to(b, V.shape), buildings))
        for v in V[clear]:
            phi = bending_angle(a, v, b)
            if best is None or phi < best.phi:
                best = DiffractionGeometry(phi, float(np.hypot(*(a - v))),
                                           float(np.hypot(*(v - b))), v.copy())
    if best is None:
        half = 0.5 * float(np.hypot(*(a - b)))
        best = DiffractionGeometry(np.pi / 2, half, half, None)
    return best


def wall_scattering_area(wall: WallSegment, width: float) -> AreaPolygon:
    """Band of the given width extending from the wall along its normal."""
    if not width > 0:
        raise ValueError(f"scattering band width must be positive, got {width}")
    if np.array_equal(wall.p0, wall.p1):
        raise ValueError("wall segment has coincident endpoints")
    off = wall.normal * width
    verts = np.array([wall.p0, wall.p1, wall.p1 + off, wall.p0 + off])
    return AreaPolygon(verts, kind="scattering")
