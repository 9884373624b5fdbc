"""Planar/3D primitives, polygons, and semantic vote fusion.

Everything here is an immutable value; all operations are pure functions,
so the types are safe to share across threads/processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Contract violation in a geometric primitive."""


class UnobservedPointError(GeometryError):
    """A semantic point with no votes cannot be resolved."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(theta, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def angle_diff(a: float, b: float) -> float:
    """Shortest signed difference a - b, wrapped to (-pi, pi]."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite Vec2 ({self.x}, {self.y})")

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def dist(self, other: "Vec2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> Tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise GeometryError(f"non-finite Vec3 ({self.x}, {self.y}, {self.z})")


def project_to_ground(p: Vec3) -> Vec2:
    """Drop the height component of a 3D point (ground-plane projection)."""
    return Vec2(p.x, p.y)


@dataclass(frozen=True)
class Pose:
    """An ego/camera pose on the ground plane.

    ``localized`` marks whether this frame has a usable pose; dropped frames
    model reconstruction failures and are skipped by position-based logic.
    """

    position: Vec2
    heading: float
    frame_index: int
    localized: bool = True

    def __post_init__(self) -> None:
        if not math.isfinite(self.heading):
            raise GeometryError("non-finite heading")
        object.__setattr__(self, "heading", wrap_angle(self.heading))
        if self.frame_index < 0:
            raise GeometryError("frame_index must be non-negative")


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with counter-clockwise vertices (signed area > 0).

    Boundary points count as inside. Axis-aligned rectangles additionally
    expose ``rect_bounds`` so hot paths can use direct interval tests.
    """

    vertices: Tuple[Vec2, ...]
    rect_bounds: Optional[Tuple[float, float, float, float]] = field(
        init=False, repr=False, compare=False, default=None
    )

    def __post_init__(self) -> None:
        verts = tuple(self.vertices)
        if len(verts) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        object.__setattr__(self, "vertices", verts)
        if self.signed_area() <= 0:
            raise GeometryError("polygon must be counter-clockwise (signed area > 0)")
        if self._self_intersects():
            raise GeometryError("polygon must be simple (non-self-intersecting)")
        object.__setattr__(self, "rect_bounds", self._detect_rect())

    def signed_area(self) -> float:
        v = self.vertices
        area = 0.0
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            area += a.x * b.y - b.x * a.y
        return 0.5 * area

    def bounds(self) -> Tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the vertex set."""
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        return (min(xs), min(ys), max(xs), max(ys))

    def centroid(self) -> Vec2:
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        return Vec2(sum(xs) / len(xs), sum(ys) / len(ys))

    def contains(self, p: Vec2) -> bool:
        return point_in_polygon(p, self)

    def _detect_rect(self) -> Optional[Tuple[float, float, float, float]]:
        if len(self.vertices) != 4:
            return None
        for i in range(4):
            a, b = self.vertices[i], self.vertices[(i + 1) % 4]
            if not (a.x == b.x or a.y == b.y):
                return None
        return self.bounds()

    def _self_intersects(self) -> bool:
        v = self.vertices
        n = len(v)
        edges = [(v[i], v[(i + 1) % n]) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue  # adjacent edges share an endpoint by design
                if _segments_properly_intersect(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                    return True
        return False


def rect_polygon(xmin: float, ymin: float, xmax: float, ymax: float) -> Polygon:
    """Axis-aligned rectangle as a CCW polygon."""
    if not (xmax > xmin and ymax > ymin):
        raise GeometryError(f"degenerate rectangle ({xmin},{ymin})-({xmax},{ymax})")
    return Polygon((Vec2(xmin, ymin), Vec2(xmax, ymin), Vec2(xmax, ymax), Vec2(xmin, ymax)))


def _cross(o: Vec2, a: Vec2, b: Vec2) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def _segments_properly_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool:
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


def _on_segment(p: Vec2, a: Vec2, b: Vec2, eps: float = 1e-9) -> bool:
    ab = math.hypot(b.x - a.x, b.y - a.y)
    if ab == 0.0:
        return p.dist(a) <= eps
    cross = abs(_cross(a, b, p)) / ab
    if cross > eps:
        return False
    dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)
    return -eps * ab <= dot <= ab * ab + eps * ab


def point_in_polygon(p: Vec2, poly: Polygon) -> bool:
    """True iff ``p`` is strictly inside or on the boundary of ``poly``.

    Interior membership uses the winding number built from signed edge
    crossings; the boundary is handled explicitly first so that poses lying
    exactly on a region edge still count as overlapping.
    """
    if poly.rect_bounds is not None:
        xmin, ymin, xmax, ymax = poly.rect_bounds
        return xmin <= p.x <= xmax and ymin <= p.y <= ymax
    verts = poly.vertices
    n = len(verts)
    for i in range(n):
        if _on_segment(p, verts[i], verts[(i + 1) % n]):
            return True
    wn = 0
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        if a.y <= p.y:
            if b.y > p.y and _cross(a, b, p) > 0:
                wn += 1
        elif b.y <= p.y and _cross(a, b, p) < 0:
            wn -= 1
    return wn != 0


class SemanticClass(IntEnum):
    """Ground-surface semantic vocabulary used for voting and the BEV."""

    ROAD = 0
    CROSSWALK = 1
    LANE_MARKING = 2
    SIDEWALK = 3
    OBSTACLE = 4
    UNKNOWN = 5


N_SEMANTIC_CLASSES = len(SemanticClass)


def winner_take_all(votes: Mapping[SemanticClass, int]) -> SemanticClass:
    """Class with the maximum count; ties break to the lowest class id."""
    if not votes:
        raise UnobservedPointError("empty vote map")
    best: Optional[SemanticClass] = None
    best_count = -1
    for cls in sorted(votes, key=int):
        count = votes[cls]
        if count < 0:
            raise GeometryError("negative vote count")
        if count > best_count:
            best = cls
            best_count = count
    if best_count < 1:
        raise UnobservedPointError("vote map has no votes")
    return SemanticClass(best)


@dataclass(frozen=True)
class SemanticPoint:
    """A reconstructed 3D point with per-class vote counts.

    One vote per image the point was visible in; single-vote points are
    accepted (their reliability is visible through the vote total).
    """

    position: Vec3
    votes: Mapping[SemanticClass, int]
    resolved: Optional[SemanticClass] = None

    def __post_init__(self) -> None:
        total = sum(self.votes.values())
        if total < 1:
            raise UnobservedPointError("semantic point needs at least one vote")
        if self.resolved is not None and self.resolved not in self.votes:
            raise GeometryError("resolved class must be one of the voted classes")

    def resolve(self) -> "SemanticPoint":
        return SemanticPoint(self.position, dict(self.votes), winner_take_all(self.votes))


class SemanticPointCloud(Sequence[SemanticPoint]):
    """Array-backed sequence of SemanticPoint (struct-of-arrays for speed).

    positions: (N, 3) float64; votes: (N, n_classes) int32;
    resolved: (N,) int8, -1 when unresolved.
    """

    def __init__(self, positions: np.ndarray, votes: np.ndarray, resolved: Optional[np.ndarray] = None):
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        votes = np.asarray(votes, dtype=np.int32).reshape(len(positions), N_SEMANTIC_CLASSES)
        if np.any(votes.sum(axis=1) < 1):
            raise UnobservedPointError("every point needs at least one vote")
        self.positions = positions
        self.votes = votes
        if resolved is None:
            resolved = np.full(len(positions), -1, dtype=np.int8)
        self.resolved = np.asarray(resolved, dtype=np.int8)

    @classmethod
    def from_points(cls, points: Sequence[SemanticPoint]) -> "SemanticPointCloud":
        pos = np.array([(p.position.x, p.position.y, p.position.z) for p in points], dtype=np.float64)
        votes = np.zeros((len(points), N_SEMANTIC_CLASSES), dtype=np.int32)
        resolved = np.full(len(points), -1, dtype=np.int8)
        for i, p in enumerate(points):
            for c, n in p.votes.items():
                votes[i, int(c)] = n
            if p.resolved is not None:
                resolved[i] = int(p.resolved)
        return cls(pos.reshape(-1, 3), votes, resolved)

    def resolve(self) -> "SemanticPointCloud":
        """Winner-take-all per point; argmax ties break to the lowest id."""
        resolved = np.argmax(self.votes, axis=1).astype(np.int8)
        return SemanticPointCloud(self.positions, self.votes, resolved)

    def is_resolved(self) -> bool:
        return bool(np.all(self.resolved >= 0))

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        votes = {SemanticClass(c): int(n) for c, n in enumerate(self.votes[i]) if n > 0}
        resolved = SemanticClass(int(self.resolved[i])) if self.resolved[i] >= 0 else None
        return SemanticPoint(Vec3(*self.positions[i]), votes, resolved)
