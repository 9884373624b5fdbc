"""Parametric road layouts, afforded actions, and region partitions.

World frame: the intersection (or lane-change segment) is centered at the
origin; the ego always approaches northbound from the south, so "left"
exits west and "right" exits east. Right-hand traffic: northbound lanes
occupy x > 0, westbound the y > 0 half of the east-west road, eastbound
the y < 0 half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import GeometryError, Polygon, Vec2, SemanticClass, rect_polygon

SIDEWALK_WIDTH = 2.0
MARKING_HALF_WIDTH = 0.075
CROSSING_STRIP_FRACTION = 0.3  # width of the NCL/NCR strips relative to lane width


class UnaffordableActionError(ValueError):
    """Requested action is not afforded by the topology."""


class TopologyKind(Enum):
    FOUR_WAY = "four_way"
    THREE_WAY_LEFT_STRAIGHT = "three_way_left_straight"
    THREE_WAY_LEFT_RIGHT = "three_way_left_right"
    STRAIGHT_MULTI_LANE = "straight_multi_lane"

    @property
    def is_intersection(self) -> bool:
        return self is not TopologyKind.STRAIGHT_MULTI_LANE


class AffordedAction(Enum):
    LEFT_TURN = "left_turn"
    STRAIGHT = "straight"
    RIGHT_TURN = "right_turn"
    LEFT_LANE_CHANGE = "left_lane_change"
    RIGHT_LANE_CHANGE = "right_lane_change"

    @property
    def action_index(self) -> int:
        """Turn index i: left=1, straight=2, right=3 (turns only)."""
        idx = {AffordedAction.LEFT_TURN: 1, AffordedAction.STRAIGHT: 2, AffordedAction.RIGHT_TURN: 3}
        if self not in idx:
            raise ValueError(f"{self} has no turn index")
        return idx[self]


ACTION_ORDER = (
    AffordedAction.LEFT_TURN,
    AffordedAction.STRAIGHT,
    AffordedAction.RIGHT_TURN,
    AffordedAction.LEFT_LANE_CHANGE,
    AffordedAction.RIGHT_LANE_CHANGE,
)


class SemanticRegion(IntEnum):
    """Named areas visited while executing an action.

    Intersection labels: S (shared approach), then per turn index i the
    first crosswalk A_i, the junction interior B_i, the exit crosswalk C_i
    and the exit area T_i. Non-intersection labels: source lane NS, the
    marking-crossing strips NCL/NCR and the target lanes NTL/NTR.
    OUTSIDE marks points in no region of the active partition.
    """

    S = 0
    A1 = 1
    B1 = 2
    C1 = 3
    T1 = 4
    A2 = 5
    B2 = 6
    C2 = 7
    T2 = 8
    A3 = 9
    B3 = 10
    C3 = 11
    T3 = 12
    NS = 13
    NCL = 14
    NTL = 15
    NCR = 16
    NTR = 17
    OUTSIDE = 18


INTERSECTION_VOCAB: Tuple[SemanticRegion, ...] = tuple(SemanticRegion(i) for i in range(13))
NON_INTERSECTION_VOCAB: Tuple[SemanticRegion, ...] = tuple(SemanticRegion(i) for i in range(13, 18))


def region_vocab_index(region: SemanticRegion, intersection: bool) -> int:
    """Index of a region inside its 13-way or 5-way classifier vocabulary."""
    if intersection:
        if not 0 <= int(region) < 13:
            raise ValueError(f"{region.name} is not an intersection region")
        return int(region)
    if not 13 <= int(region) < 18:
        raise ValueError(f"{region.name} is not a non-intersection region")
    return int(region) - 13


_TURN_REGIONS = {
    1: (SemanticRegion.A1, SemanticRegion.B1, SemanticRegion.C1, SemanticRegion.T1),
    2: (SemanticRegion.A2, SemanticRegion.B2, SemanticRegion.C2, SemanticRegion.T2),
    3: (SemanticRegion.A3, SemanticRegion.B3, SemanticRegion.C3, SemanticRegion.T3),
}


@dataclass(frozen=True)
class TopologyParams:
    lane_width: float = 3.5
    lanes_per_direction: int = 2
    crosswalk_width: float = 3.0
    approach_length: float = 20.0
    seed: int = 0
    midblock_crosswalks: bool = False  # paint crossings on straight segments

    def __post_init__(self) -> None:
        if self.lane_width <= 0:
            raise ValueError("lane_width must be > 0")
        if self.lanes_per_direction < 1:
            raise ValueError("lanes_per_direction must be >= 1")
        if self.crosswalk_width < 0:
            raise ValueError("crosswalk_width must be >= 0")
        if self.approach_length <= 0:
            raise ValueError("approach_length must be > 0")


# Arm names by compass direction; ego enters from "S".
_ARMS_BY_KIND = {
    TopologyKind.FOUR_WAY: ("S", "N", "W", "E"),
    TopologyKind.THREE_WAY_LEFT_STRAIGHT: ("S", "N", "W"),
    TopologyKind.THREE_WAY_LEFT_RIGHT: ("S", "W", "E"),
}

_ACTIONS_BY_KIND = {
    TopologyKind.FOUR_WAY: (AffordedAction.LEFT_TURN, AffordedAction.STRAIGHT, AffordedAction.RIGHT_TURN),
    TopologyKind.THREE_WAY_LEFT_STRAIGHT: (AffordedAction.LEFT_TURN, AffordedAction.STRAIGHT),
    TopologyKind.THREE_WAY_LEFT_RIGHT: (AffordedAction.LEFT_TURN, AffordedAction.RIGHT_TURN),
}

_EXIT_ARM = {AffordedAction.LEFT_TURN: "W", AffordedAction.STRAIGHT: "N", AffordedAction.RIGHT_TURN: "E"}


@dataclass(frozen=True)
class RoadTopology:
    kind: TopologyKind
    params: TopologyParams
    drivable: Tuple[Polygon, ...]
    crosswalks: Tuple[Polygon, ...]
    intersection_core: Optional[Polygon]
    region_partition: Dict[AffordedAction, Tuple[Tuple[SemanticRegion, Polygon], ...]]
    sidewalks: Tuple[Polygon, ...] = ()
    arms: Dict[str, Polygon] = field(default_factory=dict)

    @property
    def half_width(self) -> float:
        return self.params.lanes_per_direction * self.params.lane_width

    @property
    def topology_class(self) -> int:
        """1 for intersections, 0 for non-intersections."""
        return 1 if self.kind.is_intersection else 0

    def bounding_box(self) -> Tuple[float, float, float, float]:
        polys = list(self.drivable) + list(self.sidewalks) + list(self.crosswalks)
        boxes = [p.bounds() for p in polys]
        return (
            min(b[0] for b in boxes),
            min(b[1] for b in boxes),
            max(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )


def afforded_actions(t: RoadTopology) -> List[AffordedAction]:
    """Actions available on this layout, in deterministic order."""
    return [a for a in ACTION_ORDER if a in t.region_partition]


def _crosswalk_rect(arm: str, w_half: float, cw: float) -> Polygon:
    if arm == "S":
        return rect_polygon(-w_half, -w_half - cw, w_half, -w_half)
    if arm == "N":
        return rect_polygon(-w_half, w_half, w_half, w_half + cw)
    if arm == "W":
        return rect_polygon(-w_half - cw, -w_half, -w_half, w_half)
    if arm == "E":
        return rect_polygon(w_half, -w_half, w_half + cw, w_half)
    raise ValueError(arm)


def _arm_rect(arm: str, w_half: float, length: float) -> Polygon:
    if arm == "S":
        return rect_polygon(-w_half, -w_half - length, w_half, -w_half)
    if arm == "N":
        return rect_polygon(-w_half, w_half, w_half, w_half + length)
    if arm == "W":
        return rect_polygon(-w_half - length, -w_half, -w_half, w_half)
    if arm == "E":
        return rect_polygon(w_half, -w_half, w_half + length, w_half)
    raise ValueError(arm)


def _arm_sidewalks(arm: str, w_half: float, length: float) -> List[Polygon]:
    s = SIDEWALK_WIDTH
    if arm in ("S", "N"):
        lo, hi = (-w_half - length, -w_half) if arm == "S" else (w_half, w_half + length)
        return [rect_polygon(-w_half - s, lo, -w_half, hi), rect_polygon(w_half, lo, w_half + s, hi)]
    lo, hi = (-w_half - length, -w_half) if arm == "W" else (w_half, w_half + length)
    return [rect_polygon(lo, -w_half - s, hi, -w_half), rect_polygon(lo, w_half, hi, w_half + s)]


def _missing_arm_sidewalk(arm: str, w_half: float) -> Polygon:
    s = SIDEWALK_WIDTH
    if arm == "N":
        return rect_polygon(-w_half, w_half, w_half, w_half + s)
    if arm == "E":
        return rect_polygon(w_half, -w_half, w_half + s, w_half)
    if arm == "W":
        return rect_polygon(-w_half - s, -w_half, -w_half, w_half)
    return rect_polygon(-w_half, -w_half - s, w_half, -w_half)


def _exit_region_rects(action: AffordedAction, w_half: float, cw: float, length: float) -> Tuple[Polygon, Optional[Polygon]]:
    """(T_i rect, C_i rect or None when crosswalks are absent)."""
    c_rect = None
    if action is AffordedAction.LEFT_TURN:
        if cw > 0:
            c_rect = _crosswalk_rect("W", w_half, cw)
        t_rect = rect_polygon(-w_half - cw - length, 0.0, -w_half - cw, w_half)
    elif action is AffordedAction.STRAIGHT:
        if cw > 0:
            c_rect = _crosswalk_rect("N", w_half, cw)
        t_rect = rect_polygon(0.0, w_half + cw, w_half, w_half + cw + length)
    elif action is AffordedAction.RIGHT_TURN:
        if cw > 0:
            c_rect = _crosswalk_rect("E", w_half, cw)
        t_rect = rect_polygon(w_half + cw, -w_half, w_half + cw + length, 0.0)
    else:
        raise UnaffordableActionError(f"{action} is not an intersection action")
    return t_rect, c_rect


def _build_intersection(kind: TopologyKind, params: TopologyParams) -> RoadTopology:
    w_half = params.lanes_per_direction * params.lane_width
    cw = params.crosswalk_width
    length = cw + params.approach_length
    arm_names = _ARMS_BY_KIND[kind]

    arms = {name: _arm_rect(name, w_half, length) for name in arm_names}
    core = rect_polygon(-w_half, -w_half, w_half, w_half)
    drivable = tuple(arms.values()) + (core,)

    crosswalks: List[Polygon] = []
    if cw > 0:
        for name in ("S", "N", "W", "E"):
            if name in arm_names:
                crosswalks.append(_crosswalk_rect(name, w_half, cw))

    sidewalks: List[Polygon] = []
    for name in arm_names:
        sidewalks.extend(_arm_sidewalks(name, w_half, length))
    for name in ("S", "N", "W", "E"):
        if name not in arm_names:
            sidewalks.append(_missing_arm_sidewalk(name, w_half))

    s_region = rect_polygon(0.0, -w_half - cw - params.approach_length, w_half, -w_half - cw)
    partition: Dict[AffordedAction, Tuple[Tuple[SemanticRegion, Polygon], ...]] = {}
    for action in _ACTIONS_BY_KIND[kind]:
        i = action.action_index
        a_reg, b_reg, c_reg, t_reg = _TURN_REGIONS[i]
        t_rect, c_rect = _exit_region_rects(action, w_half, cw, params.approach_length)
        entries: List[Tuple[SemanticRegion, Polygon]] = [(SemanticRegion.S, s_region)]
        if cw > 0:
            entries.append((a_reg, _crosswalk_rect("S", w_half, cw)))
        entries.append((b_reg, core))
        if c_rect is not None:
            entries.append((c_reg, c_rect))
        entries.append((t_reg, t_rect))
        partition[action] = tuple(entries)

    return RoadTopology(
        kind=kind,
        params=params,
        drivable=drivable,
        crosswalks=tuple(crosswalks),
        intersection_core=core,
        region_partition=partition,
        sidewalks=tuple(sidewalks),
        arms=arms,
    )


def _build_straight(params: TopologyParams) -> RoadTopology:
    w_half = params.lanes_per_direction * params.lane_width
    lw = params.lane_width
    half_len = params.approach_length
    road = rect_polygon(-w_half, -half_len, w_half, half_len)
    sidewalks = (
        rect_polygon(-w_half - SIDEWALK_WIDTH, -half_len, -w_half, half_len),
        rect_polygon(w_half, -half_len, w_half + SIDEWALK_WIDTH, half_len),
    )

    crosswalks: List[Polygon] = []
    if params.midblock_crosswalks and params.crosswalk_width > 0:
        cw = params.crosswalk_width
        yc = 0.55 * half_len
        crosswalks.append(rect_polygon(-w_half, -yc - cw, w_half, -yc))
        crosswalks.append(rect_polygon(-w_half, yc, w_half, yc + cw))

    cs = CROSSING_STRIP_FRACTION * lw / 2.0
    partition: Dict[AffordedAction, Tuple[Tuple[SemanticRegion, Polygon], ...]] = {
        AffordedAction.STRAIGHT: ((SemanticRegion.NS, rect_polygon(0.0, -half_len, w_half, half_len)),),
    }
    if params.lanes_per_direction >= 2:
        partition[AffordedAction.LEFT_LANE_CHANGE] = (
            (SemanticRegion.NS, rect_polygon(lw + cs, -half_len, 2 * lw, half_len)),
            (SemanticRegion.NCL, rect_polygon(lw - cs, -half_len, lw + cs, half_len)),
            (SemanticRegion.NTL, rect_polygon(0.0, -half_len, lw - cs, half_len)),
        )
        partition[AffordedAction.RIGHT_LANE_CHANGE] = (
            (SemanticRegion.NS, rect_polygon(0.0, -half_len, lw - cs, half_len)),
            (SemanticRegion.NCR, rect_polygon(lw - cs, -half_len, lw + cs, half_len)),
            (SemanticRegion.NTR, rect_polygon(lw + cs, -half_len, 2 * lw, half_len)),
        )

    return RoadTopology(
        kind=TopologyKind.STRAIGHT_MULTI_LANE,
        params=params,
        drivable=(road,),
        crosswalks=tuple(crosswalks),
        intersection_core=None,
        region_partition=partition,
        sidewalks=sidewalks,
        arms={"ROAD": road},
    )


def build_topology(kind: TopologyKind, params: TopologyParams) -> RoadTopology:
    """Construct the layout, its crosswalks, and every afforded partition."""
    if kind is TopologyKind.STRAIGHT_MULTI_LANE:
        return _build_straight(params)
    return _build_intersection(kind, params)


def require_afforded(t: RoadTopology, action: AffordedAction) -> None:
    if action not in t.region_partition:
        raise UnaffordableActionError(f"{action.value} is not afforded by {t.kind.value} "
                                      f"(lanes_per_direction={t.params.lanes_per_direction})")


def ground_truth_region(t: RoadTopology, action: AffordedAction, p: Vec2) -> SemanticRegion:
    """Region of the action's partition containing p; earlier regions win ties."""
    require_afforded(t, action)
    for region, poly in t.region_partition[action]:
        if poly.contains(p):
            return region
    return SemanticRegion.OUTSIDE


def ground_truth_regions(t: RoadTopology, action: AffordedAction, xy: np.ndarray) -> np.ndarray:
    """Vectorized ground_truth_region over an (N, 2) array; OUTSIDE when unmatched."""
    require_afforded(t, action)
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    out = np.full(len(xy), int(SemanticRegion.OUTSIDE), dtype=np.int8)
    unassigned = np.ones(len(xy), dtype=bool)
    for region, poly in t.region_partition[action]:
        if poly.rect_bounds is not None:
            xmin, ymin, xmax, ymax = poly.rect_bounds
            mask = (xy[:, 0] >= xmin) & (xy[:, 0] <= xmax) & (xy[:, 1] >= ymin) & (xy[:, 1] <= ymax)
        else:
            mask = np.array([poly.contains(Vec2(*q)) for q in xy])
        take = mask & unassigned
        out[take] = int(region)
        unassigned &= ~mask
    return out


def _marking_lines(n_lanes: int, lane_width: float) -> np.ndarray:
    return np.array([k * lane_width for k in range(-(n_lanes - 1), n_lanes)], dtype=np.float64)


def classify_surface_points(t: RoadTopology, xy: np.ndarray) -> np.ndarray:
    """True surface class for each (x, y): crosswalk > lane marking > road > sidewalk.

    This is the simulated replacement for per-image segmentation: it gives the
    class a perfect segmenter would vote for at that ground location.
    """
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    x, y = xy[:, 0], xy[:, 1]
    cls = np.full(len(xy), int(SemanticClass.UNKNOWN), dtype=np.int8)

    def rect_mask(poly: Polygon) -> np.ndarray:
        xmin, ymin, xmax, ymax = poly.rect_bounds if poly.rect_bounds else poly.bounds()
        return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)

    for poly in t.sidewalks:
        cls[rect_mask(poly)] = int(SemanticClass.SIDEWALK)
    road_mask = np.zeros(len(xy), dtype=bool)
    for poly in t.drivable:
        road_mask |= rect_mask(poly)
    cls[road_mask] = int(SemanticClass.ROAD)

    lines = _marking_lines(t.params.lanes_per_direction, t.params.lane_width)
    if t.kind is TopologyKind.STRAIGHT_MULTI_LANE:
        ns_mask = road_mask
        ew_mask = np.zeros(len(xy), dtype=bool)
    else:
        ns_mask = np.zeros(len(xy), dtype=bool)
        ew_mask = np.zeros(len(xy), dtype=bool)
        for name, poly in t.arms.items():
            if name in ("S", "N"):
                ns_mask |= rect_mask(poly)
            else:
                ew_mask |= rect_mask(poly)
    near_v = np.min(np.abs(x[:, None] - lines[None, :]), axis=1) <= MARKING_HALF_WIDTH
    near_h = np.min(np.abs(y[:, None] - lines[None, :]), axis=1) <= MARKING_HALF_WIDTH
    cls[ns_mask & near_v] = int(SemanticClass.LANE_MARKING)
    cls[ew_mask & near_h] = int(SemanticClass.LANE_MARKING)

    for poly in t.crosswalks:
        cls[rect_mask(poly)] = int(SemanticClass.CROSSWALK)
    return cls
