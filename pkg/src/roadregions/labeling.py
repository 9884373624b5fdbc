"""Automatic semantic-region labeling of camera poses from the BEV.

Intersections are labeled by crosswalk anchoring: the first crosswalk the
trajectory overlaps is A_i, the second is C_i, frames between them are B_i,
frames before/after are S/T_i. When fewer than two crosswalks are crossed
the junction interior provides an S - B_i - T_i fallback. Lane changes on
straight roads use the partition oracle directly (the BEV anchoring route
is unreliable there, mirroring hand annotation).

The intersection labeler sees only poses and the BEV grid, never the
ground-truth partition, so accuracy against the simulator is a genuine
end-to-end measurement.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .bev import BevGrid, CrosswalkComponent, extract_crosswalks
from .geometry import Polygon, Pose, Vec2, angle_diff
from .topology import (
    AffordedAction,
    RoadTopology,
    SemanticRegion,
    TopologyKind,
    UnaffordableActionError,
    _TURN_REGIONS,
    ground_truth_region,
    require_afforded,
)

DEFAULT_MIN_COMPONENT_CELLS = 24
DEFAULT_OVERLAP_INFLATE_M = 0.0


class RejectReason(Enum):
    RECONSTRUCTION_FAILURE = "reconstruction_failure"
    INCOHERENT_TRAJECTORY = "incoherent_trajectory"
    CROSSWALK_COUNT_MISMATCH = "crosswalk_count_mismatch"


@dataclass(frozen=True)
class CoherenceParams:
    max_step_m: float = 2.5
    max_heading_step_rad: float = 0.8  # tight right-turn arcs step ~0.6 rad/frame
    min_localized_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.max_step_m <= 0 or self.max_heading_step_rad <= 0:
            raise ValueError("coherence thresholds must be positive")
        if not 0.0 <= self.min_localized_fraction <= 1.0:
            raise ValueError("min_localized_fraction must be in [0, 1]")


@dataclass
class LabelingResult:
    labels: List[Optional[SemanticRegion]]
    accepted: bool
    reject_reason: Optional[RejectReason] = None
    crossed_components: Tuple[CrosswalkComponent, ...] = ()


def quality_filter(poses: Sequence[Pose], p: CoherenceParams) -> Tuple[bool, Optional[RejectReason]]:
    """Sample-selection gate: enough localized frames, bounded inter-frame motion."""
    if len(poses) < 2:
        raise ValueError("quality_filter needs at least 2 poses")
    localized = [pose for pose in poses if pose.localized]
    if len(localized) / len(poses) < p.min_localized_fraction:
        return False, RejectReason.RECONSTRUCTION_FAILURE
    for a, b in zip(poses[:-1], poses[1:]):
        if not (a.localized and b.localized):
            continue
        if a.position.dist(b.position) > p.max_step_m:
            return False, RejectReason.INCOHERENT_TRAJECTORY
        if abs(angle_diff(b.heading, a.heading)) > p.max_heading_step_rad:
            return False, RejectReason.INCOHERENT_TRAJECTORY
    return True, None


def _inflated_bounds(poly: Polygon, inflate: float) -> Tuple[float, float, float, float]:
    xmin, ymin, xmax, ymax = poly.rect_bounds if poly.rect_bounds else poly.bounds()
    return xmin - inflate, ymin - inflate, xmax + inflate, ymax + inflate


def _overlap_frames(
    poses: Sequence[Pose], poly: Polygon, inflate: float
) -> List[int]:
    xmin, ymin, xmax, ymax = _inflated_bounds(poly, inflate)
    return [
        i
        for i, pose in enumerate(poses)
        if pose.localized and xmin <= pose.position.x <= xmax and ymin <= pose.position.y <= ymax
    ]


def label_intersection(
    poses: Sequence[Pose],
    grid: BevGrid,
    action: AffordedAction,
    core: Optional[Polygon],
    min_component_cells: int = DEFAULT_MIN_COMPONENT_CELLS,
    inflate_m: float = DEFAULT_OVERLAP_INFLATE_M,
) -> LabelingResult:
    """Crosswalk-anchored labels for a turn/straight pass through a junction."""
    if action not in (AffordedAction.LEFT_TURN, AffordedAction.STRAIGHT, AffordedAction.RIGHT_TURN):
        raise UnaffordableActionError(f"{action.value} is not an intersection action")
    a_reg, b_reg, c_reg, t_reg = _TURN_REGIONS[action.action_index]
    n = len(poses)

    components = extract_crosswalks(grid, min_component_cells)
    crossed = []
    for comp in components:
        frames = _overlap_frames(poses, comp.footprint, inflate_m)
        if frames:
            crossed.append((frames[0], frames[-1], comp))
    crossed.sort(key=lambda item: item[0])

    if len(crossed) >= 2:
        (fa, la, comp_a), (fc, lc, comp_c) = crossed[0], crossed[1]
        comp_a.order_index = 1
        comp_c.order_index = 2
        la = min(la, fc - 1)  # guard against inflated footprints interleaving
        labels: List[Optional[SemanticRegion]] = []
        for i in range(n):
            if i < fa:
                labels.append(SemanticRegion.S)
            elif i <= la:
                labels.append(a_reg)
            elif i < fc:
                labels.append(b_reg)
            elif i <= lc:
                labels.append(c_reg)
            else:
                labels.append(t_reg)
        return LabelingResult(labels, True, None, (comp_a, comp_c))

    if core is not None:
        in_core = [
            i for i, pose in enumerate(poses) if pose.localized and core.contains(pose.position)
        ]
        if in_core:
            fb, lb = in_core[0], in_core[-1]
            labels = [
                SemanticRegion.S if i < fb else b_reg if i <= lb else t_reg for i in range(n)
            ]
            return LabelingResult(labels, True, None, ())
    return LabelingResult([None] * n, False, RejectReason.CROSSWALK_COUNT_MISMATCH, ())


def label_lane_change(
    poses: Sequence[Pose], topology: RoadTopology, action: AffordedAction
) -> LabelingResult:
    """Partition-oracle labels for straight-road episodes (manual-annotation stand-in)."""
    if topology.kind is not TopologyKind.STRAIGHT_MULTI_LANE:
        raise UnaffordableActionError("label_lane_change requires a straight multi-lane topology")
    require_afforded(topology, action)
    n = len(poses)
    labels: List[Optional[SemanticRegion]] = [None] * n
    localized_idx = [i for i, p in enumerate(poses) if p.localized]
    for i in localized_idx:
        labels[i] = ground_truth_region(topology, action, poses[i].position)
    for i in range(n):
        if labels[i] is None and localized_idx:
            nearest = min(localized_idx, key=lambda j: (abs(j - i), j))
            labels[i] = labels[nearest]
    return LabelingResult(labels, True, None, ())


def labeling_accuracy(pred: LabelingResult, gt: Sequence[SemanticRegion]) -> float:
    """Fraction of frames whose predicted label matches ground truth,
    over frames with a real ground-truth region."""
    if len(pred.labels) != len(gt):
        raise ValueError("prediction/ground-truth length mismatch")
    scored = 0
    correct = 0
    for p, g in zip(pred.labels, gt):
        if g is None or g is SemanticRegion.OUTSIDE:
            continue
        scored += 1
        if p is g:
            correct += 1
    return correct / scored if scored else 0.0


def label_episode(
    poses: Sequence[Pose],
    grid: BevGrid,
    topology_kind_is_intersection: bool,
    action: AffordedAction,
    core: Optional[Polygon],
    coherence: CoherenceParams,
    topology: Optional[RoadTopology] = None,
    min_component_cells: int = DEFAULT_MIN_COMPONENT_CELLS,
    inflate_m: float = DEFAULT_OVERLAP_INFLATE_M,
) -> LabelingResult:
    """Quality gate plus kind-appropriate labeling for one episode."""
    ok, reason = quality_filter(poses, coherence)
    if not ok:
        return LabelingResult([None] * len(poses), False, reason, ())
    if topology_kind_is_intersection:
        return label_intersection(poses, grid, action, core, min_component_cells, inflate_m)
    if topology is None:
        raise ValueError("lane-change labeling needs the topology partition")
    return label_lane_change(poses, topology, action)
