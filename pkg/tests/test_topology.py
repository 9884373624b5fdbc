import numpy as np
import pytest

from roadregions.geometry import SemanticClass, Vec2
from roadregions.topology import (
    AffordedAction,
    INTERSECTION_VOCAB,
    NON_INTERSECTION_VOCAB,
    SemanticRegion,
    TopologyKind,
    TopologyParams,
    UnaffordableActionError,
    afforded_actions,
    build_topology,
    classify_surface_points,
    ground_truth_region,
    ground_truth_regions,
    region_vocab_index,
)

A = AffordedAction


@pytest.fixture(scope="module")
def four_way():
    return build_topology(TopologyKind.FOUR_WAY, TopologyParams())


class TestAffordedActions:
    def test_four_way(self, four_way):
        assert afforded_actions(four_way) == [A.LEFT_TURN, A.STRAIGHT, A.RIGHT_TURN]

    def test_three_way_variants(self):
        t = build_topology(TopologyKind.THREE_WAY_LEFT_STRAIGHT, TopologyParams())
        assert afforded_actions(t) == [A.LEFT_TURN, A.STRAIGHT]
        t = build_topology(TopologyKind.THREE_WAY_LEFT_RIGHT, TopologyParams())
        assert afforded_actions(t) == [A.LEFT_TURN, A.RIGHT_TURN]

    def test_single_lane_road_affords_straight_only(self):
        t = build_topology(TopologyKind.STRAIGHT_MULTI_LANE, TopologyParams(lanes_per_direction=1))
        assert afforded_actions(t) == [A.STRAIGHT]

    def test_multi_lane_road_affords_lane_changes(self):
        t = build_topology(TopologyKind.STRAIGHT_MULTI_LANE, TopologyParams(lanes_per_direction=2))
        assert afforded_actions(t) == [A.STRAIGHT, A.LEFT_LANE_CHANGE, A.RIGHT_LANE_CHANGE]

    def test_unaffordable_action_errors(self):
        t = build_topology(TopologyKind.STRAIGHT_MULTI_LANE, TopologyParams(lanes_per_direction=1))
        with pytest.raises(UnaffordableActionError):
            ground_truth_region(t, A.LEFT_LANE_CHANGE, Vec2(0, 0))
        with pytest.raises(UnaffordableActionError):
            ground_truth_region(build_topology(TopologyKind.THREE_WAY_LEFT_RIGHT, TopologyParams()),
                                A.STRAIGHT, Vec2(0, 0))


class TestPartitions:
    def test_four_way_crosswalk_count_and_regions(self, four_way):
        assert len(four_way.crosswalks) == 4
        labels = set()
        for action in afforded_actions(four_way):
            labels.update(r for r, _ in four_way.region_partition[action])
        assert len(labels) == 13
        assert labels == set(INTERSECTION_VOCAB)

    def test_partition_visit_order(self, four_way):
        order = [r.name for r, _ in four_way.region_partition[A.LEFT_TURN]]
        assert order == ["S", "A1", "B1", "C1", "T1"]
        order = [r.name for r, _ in four_way.region_partition[A.RIGHT_TURN]]
        assert order == ["S", "A3", "B3", "C3", "T3"]

    def test_no_crosswalk_partition(self):
        t = build_topology(TopologyKind.FOUR_WAY, TopologyParams(crosswalk_width=0.0))
        assert t.crosswalks == ()
        assert [r.name for r, _ in t.region_partition[A.LEFT_TURN]] == ["S", "B1", "T1"]

    def test_lane_change_partitions(self):
        t = build_topology(TopologyKind.STRAIGHT_MULTI_LANE, TopologyParams())
        assert [r.name for r, _ in t.region_partition[A.LEFT_LANE_CHANGE]] == ["NS", "NCL", "NTL"]
        assert [r.name for r, _ in t.region_partition[A.RIGHT_LANE_CHANGE]] == ["NS", "NCR", "NTR"]

    def test_three_way_crosswalk_count(self):
        for kind in (TopologyKind.THREE_WAY_LEFT_STRAIGHT, TopologyKind.THREE_WAY_LEFT_RIGHT):
            assert len(build_topology(kind, TopologyParams()).crosswalks) == 3

    def test_midblock_crosswalks(self):
        t = build_topology(TopologyKind.STRAIGHT_MULTI_LANE, TopologyParams(midblock_crosswalks=True))
        assert len(t.crosswalks) == 2
        t = build_topology(TopologyKind.STRAIGHT_MULTI_LANE, TopologyParams())
        assert len(t.crosswalks) == 0

    def test_regions_interior_disjoint(self, four_way):
        for action, entries in four_way.region_partition.items():
            rects = [poly.rect_bounds for _, poly in entries]
            for i in range(len(rects)):
                for j in range(i + 1, len(rects)):
                    ax0, ay0, ax1, ay1 = rects[i]
                    bx0, by0, bx1, by1 = rects[j]
                    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
                    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
                    assert ix * iy < 1e-9

    def test_regions_within_drivable_or_crosswalks(self, four_way):
        rng = np.random.default_rng(2)
        surfaces = list(four_way.drivable) + list(four_way.crosswalks)
        for action, entries in four_way.region_partition.items():
            for _, poly in entries:
                xmin, ymin, xmax, ymax = poly.rect_bounds
                pts = rng.uniform([xmin, ymin], [xmax, ymax], (200, 2))
                for x, y in pts:
                    assert any(s.contains(Vec2(float(x), float(y))) for s in surfaces)


class TestGroundTruthRegion:
    def test_first_crosswalk_is_a1_for_left_turn(self, four_way):
        w = four_way.half_width
        cw = four_way.params.crosswalk_width
        center = Vec2(0.0, -w - cw / 2)
        assert ground_truth_region(four_way, A.LEFT_TURN, center) is SemanticRegion.A1
        assert ground_truth_region(four_way, A.STRAIGHT, center) is SemanticRegion.A2

    def test_approach_point_is_s(self, four_way):
        w = four_way.half_width
        p = Vec2(1.0, -w - four_way.params.crosswalk_width - 10.0)
        assert ground_truth_region(four_way, A.LEFT_TURN, p) is SemanticRegion.S

    def test_outside(self, four_way):
        assert ground_truth_region(four_way, A.LEFT_TURN, Vec2(500.0, 500.0)) is SemanticRegion.OUTSIDE

    def test_rejection_sampling_oracle(self, four_way):
        rng = np.random.default_rng(3)
        for action, entries in four_way.region_partition.items():
            for region, poly in entries:
                xmin, ymin, xmax, ymax = poly.rect_bounds
                pts = rng.uniform(
                    [xmin + 1e-6, ymin + 1e-6], [xmax - 1e-6, ymax - 1e-6], (1000, 2)
                )
                got = ground_truth_regions(four_way, action, pts)
                matched = (got == int(region)).mean()
                # interior points of later regions can belong to an earlier
                # overlapping region only on shared boundaries, which have
                # measure zero; interiors must map back exactly
                assert matched == 1.0

    def test_vectorized_matches_scalar(self, four_way):
        rng = np.random.default_rng(4)
        pts = rng.uniform(-40, 40, (500, 2))
        vec = ground_truth_regions(four_way, A.RIGHT_TURN, pts)
        for (x, y), code in zip(pts, vec):
            assert ground_truth_region(four_way, A.RIGHT_TURN, Vec2(float(x), float(y))) is SemanticRegion(int(code))


class TestVocabulary:
    def test_vocab_sizes(self):
        assert len(INTERSECTION_VOCAB) == 13
        assert len(NON_INTERSECTION_VOCAB) == 5
        assert set(INTERSECTION_VOCAB).isdisjoint(NON_INTERSECTION_VOCAB)

    def test_vocab_index_round_trip(self):
        for i, region in enumerate(INTERSECTION_VOCAB):
            assert region_vocab_index(region, True) == i
        for i, region in enumerate(NON_INTERSECTION_VOCAB):
            assert region_vocab_index(region, False) == i
        with pytest.raises(ValueError):
            region_vocab_index(SemanticRegion.NS, True)
        with pytest.raises(ValueError):
            region_vocab_index(SemanticRegion.S, False)


class TestSurfaceClassification:
    def test_priority_order(self, four_way):
        w = four_way.half_width
        cw = four_way.params.crosswalk_width
        pts = np.array(
            [
                [0.0, -w - cw / 2],  # crosswalk paint
                [0.0, -w - cw - 5.0],  # center marking on the approach
                [1.0, -w - cw - 5.0],  # plain asphalt
                [w + 1.0, -w - cw - 5.0],  # sidewalk strip
                [200.0, 200.0],  # off-scene
            ]
        )
        cls = classify_surface_points(four_way, pts)
        assert list(cls) == [
            int(SemanticClass.CROSSWALK),
            int(SemanticClass.LANE_MARKING),
            int(SemanticClass.ROAD),
            int(SemanticClass.SIDEWALK),
            int(SemanticClass.UNKNOWN),
        ]
