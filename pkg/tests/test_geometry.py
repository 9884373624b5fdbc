import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadregions.geometry import (
    GeometryError,
    Polygon,
    Pose,
    SemanticClass,
    SemanticPoint,
    SemanticPointCloud,
    UnobservedPointError,
    Vec2,
    Vec3,
    angle_diff,
    point_in_polygon,
    project_to_ground,
    rect_polygon,
    winner_take_all,
    wrap_angle,
)

UNIT_SQUARE = rect_polygon(0.0, 0.0, 1.0, 1.0)


def winding_number_oracle(p: Vec2, poly: Polygon) -> bool:
    """Angle-summation winding number: independent of the crossing-number
    implementation under test."""
    total = 0.0
    verts = poly.vertices
    for i in range(len(verts)):
        a = verts[i]
        b = verts[(i + 1) % len(verts)]
        va = (a.x - p.x, a.y - p.y)
        vb = (b.x - p.x, b.y - p.y)
        cross = va[0] * vb[1] - va[1] * vb[0]
        dot = va[0] * vb[0] + va[1] * vb[1]
        total += math.atan2(cross, dot)
    return abs(total) > math.pi


def random_star_polygon(rng: np.random.Generator) -> Polygon:
    """Star-shaped (often concave) simple polygon; bounded angular gaps keep
    the kernel point inside, which guarantees CCW order."""
    n = int(rng.integers(4, 12))
    gaps = rng.uniform(0.6, 1.4, n)
    angles = 2.0 * math.pi * np.cumsum(gaps) / gaps.sum()
    radii = rng.uniform(0.5, 4.0, n)
    cx, cy = rng.uniform(-2, 2, 2)
    verts = [Vec2(cx + r * math.cos(a), cy + r * math.sin(a)) for r, a in zip(radii, angles)]
    return Polygon(tuple(verts))


class TestWrapAngle:
    def test_range(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
        assert wrap_angle(0.0) == 0.0

    @given(st.floats(-50.0, 50.0))
    def test_wrapped_interval(self, theta):
        w = wrap_angle(theta)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-9)

    def test_angle_diff_shortest(self):
        assert angle_diff(0.1, -0.1) == pytest.approx(0.2)
        assert abs(angle_diff(math.pi - 0.05, -math.pi + 0.05)) == pytest.approx(0.1)


class TestPointInPolygon:
    def test_interior(self):
        assert point_in_polygon(Vec2(0.5, 0.5), UNIT_SQUARE)

    def test_boundary_counts_as_inside(self):
        assert point_in_polygon(Vec2(1.0, 0.5), UNIT_SQUARE)
        assert point_in_polygon(Vec2(0.0, 0.0), UNIT_SQUARE)

    def test_outside(self):
        assert not point_in_polygon(Vec2(1.5, 0.5), UNIT_SQUARE)

    def test_concave_polygon_boundary(self):
        poly = Polygon((Vec2(0, 0), Vec2(4, 0), Vec2(4, 4), Vec2(2, 1), Vec2(0, 4)))
        assert point_in_polygon(Vec2(2, 0.5), poly)
        assert not point_in_polygon(Vec2(2, 3.0), poly)  # inside the notch

    def test_agrees_with_winding_oracle(self):
        rng = np.random.default_rng(1234)
        checked = 0
        for _ in range(120):
            poly = random_star_polygon(rng)
            xmin, ymin, xmax, ymax = poly.bounds()
            pts = rng.uniform([xmin - 1, ymin - 1], [xmax + 1, ymax + 1], (90, 2))
            for x, y in pts:
                p = Vec2(float(x), float(y))
                assert point_in_polygon(p, poly) == winding_number_oracle(p, poly)
                checked += 1
        assert checked >= 10_000


class TestPolygonValidation:
    def test_too_few_vertices(self):
        with pytest.raises(GeometryError):
            Polygon((Vec2(0, 0), Vec2(1, 0)))

    def test_clockwise_rejected(self):
        with pytest.raises(GeometryError):
            Polygon((Vec2(0, 0), Vec2(0, 1), Vec2(1, 1), Vec2(1, 0)))

    def test_self_intersection_rejected(self):
        with pytest.raises(GeometryError):
            Polygon((Vec2(0, 0), Vec2(2, 2), Vec2(2, 0), Vec2(0, 2)))

    def test_non_finite_rejected(self):
        with pytest.raises(GeometryError):
            Vec2(float("nan"), 0.0)
        with pytest.raises(GeometryError):
            Vec3(0.0, float("inf"), 0.0)

    def test_rect_bounds_detected(self):
        assert UNIT_SQUARE.rect_bounds == (0.0, 0.0, 1.0, 1.0)
        tri = Polygon((Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)))
        assert tri.rect_bounds is None


def wta_oracle(votes):
    """Exhaustive max-then-lowest-id selection."""
    best = None
    for cls in SemanticClass:
        if cls in votes:
            if best is None or votes[cls] > votes[best]:
                best = cls
    return best


class TestWinnerTakeAll:
    def test_strict_majority(self):
        assert winner_take_all({SemanticClass.ROAD: 5, SemanticClass.CROSSWALK: 2}) is SemanticClass.ROAD

    def test_tie_breaks_to_lowest_id(self):
        assert winner_take_all({SemanticClass.ROAD: 3, SemanticClass.CROSSWALK: 3}) is SemanticClass.ROAD
        assert winner_take_all({SemanticClass.UNKNOWN: 2, SemanticClass.SIDEWALK: 2}) is SemanticClass.SIDEWALK

    def test_single_candidate(self):
        assert winner_take_all({SemanticClass.UNKNOWN: 1}) is SemanticClass.UNKNOWN

    def test_empty_vote_map_errors(self):
        with pytest.raises(UnobservedPointError):
            winner_take_all({})

    def test_exhaustive_small_multisets_match_oracle(self):
        classes = list(SemanticClass)
        cases = 0
        for k in (1, 2, 3):
            for combo in itertools.combinations(classes, k):
                for counts in itertools.product(range(1, 6), repeat=k):
                    votes = dict(zip(combo, counts))
                    assert winner_take_all(votes) is wta_oracle(votes)
                    cases += 1
        assert cases == 6 * 5 + 15 * 25 + 20 * 125

    @given(
        st.dictionaries(
            st.sampled_from(list(SemanticClass)), st.integers(1, 50), min_size=1, max_size=6
        ),
        st.randoms(),
    )
    def test_permutation_invariant(self, votes, rnd):
        items = list(votes.items())
        rnd.shuffle(items)
        assert winner_take_all(dict(items)) is winner_take_all(votes)


class TestSemanticPoints:
    def test_project_to_ground(self):
        assert project_to_ground(Vec3(1.0, 2.0, 0.7)) == Vec2(1.0, 2.0)
        assert project_to_ground(Vec3(0, 0, 0)) == Vec2(0.0, 0.0)

    def test_resolution_invariant(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            k = int(rng.integers(1, 5))
            classes = rng.choice(len(SemanticClass), k, replace=False)
            votes = {SemanticClass(int(c)): int(rng.integers(1, 9)) for c in classes}
            point = SemanticPoint(Vec3(0, 0, 0), votes).resolve()
            assert all(votes[point.resolved] >= v for v in votes.values())

    def test_zero_votes_rejected(self):
        with pytest.raises(UnobservedPointError):
            SemanticPoint(Vec3(0, 0, 0), {SemanticClass.ROAD: 0})

    def test_cloud_round_trip(self):
        pts = [
            SemanticPoint(Vec3(0.1, 0.2, 0.0), {SemanticClass.ROAD: 3, SemanticClass.SIDEWALK: 1}),
            SemanticPoint(Vec3(1.0, -1.0, 0.0), {SemanticClass.CROSSWALK: 2}),
        ]
        cloud = SemanticPointCloud.from_points(pts).resolve()
        assert len(cloud) == 2
        assert cloud[0].resolved is SemanticClass.ROAD
        assert cloud[1].votes[SemanticClass.CROSSWALK] == 2
        assert cloud.is_resolved()


class TestPose:
    def test_heading_wrapped_on_construction(self):
        pose = Pose(Vec2(0, 0), 3 * math.pi, 0)
        assert pose.heading == pytest.approx(math.pi)

    def test_negative_frame_index_rejected(self):
        with pytest.raises(GeometryError):
            Pose(Vec2(0, 0), 0.0, -1)
