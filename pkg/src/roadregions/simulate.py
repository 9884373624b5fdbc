"""Ego-trajectory and semantic point cloud synthesis.

Trajectories follow an ideal path (straights joined by a circular arc for
turns, a logistic lateral blend for lane changes) sampled at constant speed,
with Gaussian pose jitter and localization dropout standing in for
reconstruction error. Point clouds are Poisson-sampled over the scene
surfaces with per-vote label flips standing in for segmentation error.

Everything is a pure function of (inputs, seed); episode generation is safe
to parallelize across (topology, action, seed) tuples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .bev import BevGrid, rasterize
from .geometry import (
    N_SEMANTIC_CLASSES,
    Pose,
    SemanticClass,
    SemanticPointCloud,
    Vec2,
    wrap_angle,
)
from .topology import (
    AffordedAction,
    RoadTopology,
    SemanticRegion,
    TopologyKind,
    classify_surface_points,
    ground_truth_regions,
    require_afforded,
)

# Turn geometry. Radii are fractions of lane width, chosen so the arc always
# transits the junction interior (a wide right turn would cut the unlabeled
# corner between the entry and exit crosswalks and skip B_i entirely).
TURN_RADIUS_LEFT_FRAC = 2.5
TURN_RADIUS_RIGHT_FRAC = 0.5
# Drivers drift toward the turn side on approach; this is the cue that makes
# intention observable before the maneuver starts.
PREVIEW_OFFSET_FRAC = 0.2
PREVIEW_RAMP_M = 15.0
PREVIEW_HOLD_M = 5.0
LANE_CHANGE_SCALE_M = 4.0  # logistic length scale of the lateral blend
START_MARGIN = 0.3  # keeps frame positions off the region boundary lattice
EXIT_TAIL_M = 3.5  # episodes end shortly after the maneuver completes
START_INSET_M = 6.0  # episodes start a few meters into the approach region
PATH_STEP = 0.05

FAN_RANGES = (5.0, 12.0, 25.0)
FAN_BEARINGS_DEG = (-90.0, -60.0, -36.0, -12.0, 12.0, 36.0, 60.0, 90.0)
FAN_POINTS = len(FAN_RANGES) * len(FAN_BEARINGS_DEG)
FEATURE_LENGTH = FAN_POINTS * N_SEMANTIC_CLASSES + 2
DEFAULT_BEV_RESOLUTION = 0.5


@dataclass(frozen=True)
class SimConfig:
    speed_mps: float = 10.0
    frame_hz: float = 10.0
    heading_noise_std: float = 0.01
    position_noise_std: float = 0.15
    pose_dropout_rate: float = 0.03
    point_density: float = 24.0  # points per square meter
    label_flip_rate: float = 0.1  # per-vote probability of a wrong-class vote
    votes_per_point: int = 7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.speed_mps <= 0 or self.frame_hz <= 0:
            raise ValueError("speed_mps and frame_hz must be > 0")
        if not 0.0 <= self.pose_dropout_rate <= 1.0:
            raise ValueError("pose_dropout_rate must be in [0, 1]")
        if not 0.0 <= self.label_flip_rate <= 1.0:
            raise ValueError("label_flip_rate must be in [0, 1]")
        if self.point_density < 0:
            raise ValueError("point_density must be >= 0")
        if self.votes_per_point < 1:
            raise ValueError("votes_per_point must be >= 1")
        if self.heading_noise_std < 0 or self.position_noise_std < 0:
            raise ValueError("noise stds must be >= 0")


@dataclass(frozen=True)
class FrameFeature:
    """Egocentric observation: one-hot BEV classes at a fan of sample points
    (ranges x bearings, ego frame) plus ego speed and yaw rate."""

    histogram: np.ndarray  # (FAN_POINTS * n_classes,) 0/1 entries
    ego_speed: float
    ego_yaw_rate: float

    def vector(self) -> np.ndarray:
        return np.concatenate([self.histogram, [self.ego_speed, self.ego_yaw_rate]])


@dataclass
class Episode:
    topology: RoadTopology
    action: AffordedAction
    poses: List[Pose]
    features: List[FrameFeature]
    gt_regions: List[SemanticRegion]
    gt_topology_class: int
    gt_intention: AffordedAction
    points: SemanticPointCloud
    grid: Optional[BevGrid] = None

    def __post_init__(self) -> None:
        n = len(self.poses)
        if not (len(self.features) == len(self.gt_regions) == n):
            raise ValueError("per-frame lists must have equal length")
        if self.gt_topology_class != self.topology.topology_class:
            raise ValueError("gt_topology_class inconsistent with topology kind")

    def feature_matrix(self) -> np.ndarray:
        return np.stack([f.vector() for f in self.features])

    def __len__(self) -> int:
        return len(self.poses)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _polyline(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(points, segment headings, cumulative arc length); drops zero-length segments."""
    deltas = np.diff(points, axis=0)
    seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
    keep = seg_len > 1e-12
    points = np.concatenate([points[:1], points[1:][keep]])
    deltas = np.diff(points, axis=0)
    seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
    headings = np.arctan2(deltas[:, 1], deltas[:, 0])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    return points, headings, cum


def _approach_points(x_lane: float, offset: float, y_start: float, y_end: float) -> np.ndarray:
    ys = np.arange(y_start, y_end, PATH_STEP)
    ramp_end = y_end - PREVIEW_HOLD_M
    ramp_start = ramp_end - PREVIEW_RAMP_M
    xs = x_lane + offset * _smoothstep((ys - ramp_start) / (ramp_end - ramp_start))
    return np.column_stack([xs, ys])


def _arc_points(cx: float, cy: float, radius: float, theta0: float, theta1: float) -> np.ndarray:
    n = max(2, int(abs(theta1 - theta0) * radius / PATH_STEP))
    theta = np.linspace(theta0, theta1, n)
    return np.column_stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)])


def _turn_path(t: RoadTopology, action: AffordedAction, entry_lane: int) -> np.ndarray:
    lw = t.params.lane_width
    w_half = t.half_width
    cw = t.params.crosswalk_width
    reach = w_half + cw + t.params.approach_length
    y_start = min(-reach + START_MARGIN + START_INSET_M, -w_half - cw - 2.0)
    exit_reach = min(reach - START_MARGIN, w_half + cw + EXIT_TAIL_M)
    x_lane = (entry_lane + 0.5) * lw

    if action is AffordedAction.STRAIGHT:
        ys = np.arange(y_start, exit_reach, PATH_STEP)
        return np.column_stack([np.full_like(ys, x_lane), ys])

    if action is AffordedAction.LEFT_TURN:
        radius = TURN_RADIUS_LEFT_FRAC * lw
        offset = -PREVIEW_OFFSET_FRAC * lw
        exit_y = 0.5 * lw  # inner westbound lane
        xa = x_lane + offset
        cx, cy = xa - radius, exit_y - radius
        approach = _approach_points(x_lane, offset, y_start, cy)
        arc = _arc_points(cx, cy, radius, 0.0, 0.5 * math.pi)
        xs = np.arange(cx, -exit_reach, -PATH_STEP)
        exit_line = np.column_stack([xs, np.full_like(xs, exit_y)])
    elif action is AffordedAction.RIGHT_TURN:
        radius = TURN_RADIUS_RIGHT_FRAC * lw
        offset = PREVIEW_OFFSET_FRAC * lw
        exit_y = -(entry_lane + 0.5) * lw  # matching eastbound lane
        xa = x_lane + offset
        cx, cy = xa + radius, exit_y - radius
        approach = _approach_points(x_lane, offset, y_start, cy)
        arc = _arc_points(cx, cy, radius, math.pi, 0.5 * math.pi)
        xs = np.arange(cx, exit_reach, PATH_STEP)
        exit_line = np.column_stack([xs, np.full_like(xs, exit_y)])
    else:
        raise ValueError(f"not a turn action: {action}")
    return np.concatenate([approach, arc, exit_line])


def _lane_change_path(t: RoadTopology, action: AffordedAction, entry_lane: int) -> np.ndarray:
    lw = t.params.lane_width
    half_len = t.params.approach_length
    x_src = (entry_lane + 0.5) * lw
    if action is AffordedAction.STRAIGHT:
        x_tgt = x_src
    elif action is AffordedAction.LEFT_LANE_CHANGE:
        x_tgt = x_src - lw
    else:
        x_tgt = x_src + lw
    ys = np.arange(-half_len + START_MARGIN, half_len - START_MARGIN, PATH_STEP)
    xs = x_src + (x_tgt - x_src) / (1.0 + np.exp(-ys / LANE_CHANGE_SCALE_M))
    return np.column_stack([xs, ys])


def _entry_lane(t: RoadTopology, action: AffordedAction, rng: np.random.Generator) -> int:
    n = t.params.lanes_per_direction
    if action is AffordedAction.LEFT_TURN:
        return 0
    if action is AffordedAction.RIGHT_TURN:
        return n - 1
    if action is AffordedAction.STRAIGHT:
        return int(rng.integers(0, n))
    # lane changes: left changes start in lane 1, right changes in lane 0
    return 1 if action is AffordedAction.LEFT_LANE_CHANGE else 0


def ideal_states(
    t: RoadTopology, action: AffordedAction, cfg: SimConfig
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Noise-free per-frame (positions, headings, speeds, yaw rates)."""
    require_afforded(t, action)
    rng = np.random.default_rng([cfg.seed, 1])
    lane = _entry_lane(t, action, rng)
    if t.kind is TopologyKind.STRAIGHT_MULTI_LANE:
        raw = _lane_change_path(t, action, lane)
    else:
        raw = _turn_path(t, action, lane)
    points, seg_headings, cum = _polyline(raw)

    step = cfg.speed_mps / cfg.frame_hz
    n_frames = int(math.floor(cum[-1] / step)) + 1
    dist = np.arange(n_frames) * step
    seg = np.clip(np.searchsorted(cum, dist, side="right") - 1, 0, len(seg_headings) - 1)
    frac = (dist - cum[seg]) / np.maximum(cum[seg + 1] - cum[seg], 1e-12)
    positions = points[seg] + frac[:, None] * (points[seg + 1] - points[seg])
    headings = seg_headings[seg]

    speeds = np.full(n_frames, cfg.speed_mps)
    yaw = np.array([wrap_angle(b - a) for a, b in zip(headings[:-1], headings[1:])])
    yaw_rates = np.concatenate([yaw, yaw[-1:] if len(yaw) else [0.0]]) * cfg.frame_hz
    return positions, headings, speeds, yaw_rates


def synthesize_trajectory(t: RoadTopology, action: AffordedAction, cfg: SimConfig) -> List[Pose]:
    """Noisy posed trajectory for an afforded action (deterministic per seed)."""
    positions, headings, _, _ = ideal_states(t, action, cfg)
    rng = np.random.default_rng([cfg.seed, 1, 2])
    n = len(positions)
    jitter = rng.normal(0.0, cfg.position_noise_std, (n, 2)) if cfg.position_noise_std > 0 else np.zeros((n, 2))
    h_jitter = rng.normal(0.0, cfg.heading_noise_std, n) if cfg.heading_noise_std > 0 else np.zeros(n)
    dropped = rng.random(n) < cfg.pose_dropout_rate
    return [
        Pose(
            position=Vec2(positions[k, 0] + jitter[k, 0], positions[k, 1] + jitter[k, 1]),
            heading=wrap_angle(headings[k] + h_jitter[k]),
            frame_index=k,
            localized=not bool(dropped[k]),
        )
        for k in range(n)
    ]


def sample_point_cloud(t: RoadTopology, cfg: SimConfig) -> SemanticPointCloud:
    """Poisson-sampled, vote-resolved ground points over the scene surfaces."""
    rng = np.random.default_rng([cfg.seed, 2])
    chunks = []
    for poly in list(t.drivable) + list(t.sidewalks):
        xmin, ymin, xmax, ymax = poly.rect_bounds if poly.rect_bounds else poly.bounds()
        area = (xmax - xmin) * (ymax - ymin)
        n = int(rng.poisson(area * cfg.point_density))
        if n == 0:
            continue
        xs = rng.uniform(xmin, xmax, n)
        ys = rng.uniform(ymin, ymax, n)
        chunks.append(np.column_stack([xs, ys]))
    if not chunks:
        return SemanticPointCloud(
            np.zeros((0, 3)), np.zeros((0, N_SEMANTIC_CLASSES), dtype=np.int32), np.zeros(0, dtype=np.int8)
        )
    xy = np.concatenate(chunks)
    true_cls = classify_surface_points(t, xy).astype(np.int64)

    n_points = len(xy)
    v = cfg.votes_per_point
    vote_cls = np.broadcast_to(true_cls[:, None], (n_points, v)).copy()
    if cfg.label_flip_rate > 0:
        flips = rng.random((n_points, v)) < cfg.label_flip_rate
        wrong = rng.integers(0, N_SEMANTIC_CLASSES - 1, (n_points, v))
        wrong = wrong + (wrong >= true_cls[:, None])  # skip the true class
        vote_cls[flips] = wrong[flips]
    votes = np.zeros((n_points, N_SEMANTIC_CLASSES), dtype=np.int32)
    np.add.at(votes.reshape(-1), np.arange(n_points).repeat(v) * N_SEMANTIC_CLASSES + vote_cls.ravel(), 1)

    positions = np.column_stack([xy, np.zeros(n_points)])
    return SemanticPointCloud(positions, votes).resolve()


def compute_frame_features(
    grid: BevGrid,
    positions: np.ndarray,
    headings: np.ndarray,
    speeds: np.ndarray,
    yaw_rates: np.ndarray,
) -> np.ndarray:
    """(n_frames, FEATURE_LENGTH) fan-of-samples features from the BEV."""
    bearings = np.deg2rad(FAN_BEARINGS_DEG)
    angles = headings[:, None] + bearings[None, :]  # (F, B)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)  # (F, B, 2)
    sample_pts = np.concatenate(
        [positions[:, None, :] + r * dirs for r in FAN_RANGES], axis=1
    )  # (F, R*B, 2), range-major
    flat = sample_pts.reshape(-1, 2)
    classes = grid.classes_at(flat).reshape(len(positions), FAN_POINTS)
    onehot = np.zeros((len(positions), FAN_POINTS, N_SEMANTIC_CLASSES))
    rows = np.arange(len(positions))[:, None]
    cols = np.arange(FAN_POINTS)[None, :]
    onehot[rows, cols, classes] = 1.0
    hist = onehot.reshape(len(positions), FAN_POINTS * N_SEMANTIC_CLASSES)
    return np.concatenate([hist, speeds[:, None], yaw_rates[:, None]], axis=1)


def make_episode(
    t: RoadTopology,
    action: AffordedAction,
    cfg: SimConfig,
    bev_resolution: float = DEFAULT_BEV_RESOLUTION,
) -> Episode:
    """Full labeled episode: trajectory, cloud, BEV features, ground truth."""
    require_afforded(t, action)
    positions, headings, speeds, yaw_rates = ideal_states(t, action, cfg)
    poses = synthesize_trajectory(t, action, cfg)
    cloud = sample_point_cloud(t, cfg)
    grid = rasterize(cloud, bev_resolution)
    feat = compute_frame_features(grid, positions, headings, speeds, yaw_rates)
    regions = [SemanticRegion(int(r)) for r in ground_truth_regions(t, action, positions)]
    features = [
        FrameFeature(histogram=feat[k, :-2], ego_speed=float(feat[k, -2]), ego_yaw_rate=float(feat[k, -1]))
        for k in range(len(poses))
    ]
    return Episode(
        topology=t,
        action=action,
        poses=poses,
        features=features,
        gt_regions=regions,
        gt_topology_class=t.topology_class,
        gt_intention=action,
        points=cloud,
        grid=grid,
    )
