"""Synthetic interactive scenes with a programmatic risk ground truth.

Each scene freezes one decision moment of an intersection episode: the ego
is approaching with a known intent path, surrounded by objects moving on
straight lines. The ground-truth risk object is the one whose path meets
the ego's path earliest in time (within a conflict radius); scenes whose
objects all miss carry a "go" behavior label instead of "stop".

Object messages encode relative position and velocity in the ego frame
(plus range and closing speed, which are derived encodings of the same
quantities) and a crossing flag marking objects headed into the junction
interior. The flag is intent-oblivious on purpose: resolving whether a
crossing object actually matters requires the ego's intent, which only the
backbone hidden state carries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .heads import DEFAULT_FUSED_DIM, RiskScene
from .simulate import Episode, SimConfig, make_episode
from .topology import (
    AffordedAction,
    SemanticRegion,
    TopologyKind,
    TopologyParams,
    afforded_actions,
    build_topology,
)

CONFLICT_RADIUS_M = 2.5
YIELD_HORIZON_S = 6.0
GF_DIM = 8
OBJ_DIM = 8

_BOX_FX = 700.0
_BOX_CX = 640.0
_BOX_CY = 360.0
_CAM_HEIGHT = 1.5
_OBJ_WIDTH = 1.8
_OBJ_HEIGHT = 1.5

_BASE_KINDS = (
    TopologyKind.FOUR_WAY,
    TopologyKind.THREE_WAY_LEFT_STRAIGHT,
    TopologyKind.THREE_WAY_LEFT_RIGHT,
)


def frame_projection(feature_dim: int, seed: int = 97) -> np.ndarray:
    """Fixed random linear map embedding the frame feature into g_f."""
    rng = np.random.default_rng([seed, 3])
    return rng.normal(0.0, 1.0 / np.sqrt(feature_dim), (GF_DIM, feature_dim))


def fusion_map(seed: int = 97, fused_dim: int = DEFAULT_FUSED_DIM) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed fusion layer (W_ego, b_ego) shared by every scene."""
    rng = np.random.default_rng([seed, 4])
    w = rng.normal(0.0, 1.0 / np.sqrt(GF_DIM + OBJ_DIM), (fused_dim, GF_DIM + OBJ_DIM))
    return w, np.zeros(fused_dim)


def synth_box(fwd: float, left: float) -> np.ndarray:
    """Synthetic image-plane box from ego-frame position (degenerate behind)."""
    if fwd < 0.5:
        return np.zeros(4)
    u = _BOX_CX - _BOX_FX * left / fwd
    w = _BOX_FX * _OBJ_WIDTH / fwd
    h = _BOX_FX * _OBJ_HEIGHT / fwd
    v_bottom = _BOX_CY + _BOX_FX * _CAM_HEIGHT / fwd
    return np.array([u - 0.5 * w, v_bottom - h, w, h])


def _to_ego_frame(delta: np.ndarray, heading: float) -> np.ndarray:
    c, s = np.cos(heading), np.sin(heading)
    return np.array([c * delta[0] + s * delta[1], -s * delta[0] + c * delta[1]])


def _wrap(theta: float) -> float:
    return (theta + np.pi) % (2.0 * np.pi) - np.pi


def object_message(
    ego_pos: np.ndarray,
    ego_heading: float,
    ego_vel: np.ndarray,
    obj_pos: np.ndarray,
    obj_vel: np.ndarray,
    crossing_flag: float,
) -> np.ndarray:
    """Relative position/velocity in the ego frame plus derived kinematic
    encodings of the same quantities (range, closing speed, and a
    closest-approach urgency in [0, 1]) and the core-crossing flag."""
    rel_p = _to_ego_frame(obj_pos - ego_pos, ego_heading)
    rel_v = _to_ego_frame(obj_vel - ego_vel, ego_heading)
    rng_m = float(np.hypot(*rel_p))
    closing = -float(np.dot(rel_p, rel_v)) / max(rng_m, 1e-6)
    speed_sq = float(np.dot(rel_v, rel_v))
    t_cc = float(np.clip(-np.dot(rel_p, rel_v) / speed_sq, 0.0, 10.0)) if speed_sq > 1e-9 else 0.0
    d_cc = float(np.hypot(*(rel_p + t_cc * rel_v)))
    urgency = max(0.0, 1.0 - d_cc / 5.0) * max(0.0, 1.0 - t_cc / YIELD_HORIZON_S)
    return np.array([rel_p[0] / 25.0, rel_p[1] / 25.0, rel_v[0] / 10.0, rel_v[1] / 10.0,
                     rng_m / 25.0, closing / 10.0, urgency, crossing_flag])


@dataclass
class RiskSuite:
    scenes: List[RiskScene]
    windows: np.ndarray  # (S, t_e, feature_dim) ego windows at the decision frame
    stop_labels: np.ndarray  # (S,) 1 = ego must yield
    has_conflict: np.ndarray  # (S,) bool
    episode_keys: List[str]


def _base_episodes(sim_cfg: SimConfig, params: TopologyParams, n_episodes: int, seed: int) -> List[Episode]:
    episodes = []
    combos = []
    for kind in _BASE_KINDS:
        topo = build_topology(kind, params)
        for action in afforded_actions(topo):
            combos.append((topo, action))
    i = 0
    while len(episodes) < n_episodes:
        topo, action = combos[i % len(combos)]
        cfg = SimConfig(
            speed_mps=sim_cfg.speed_mps, frame_hz=sim_cfg.frame_hz,
            heading_noise_std=sim_cfg.heading_noise_std, position_noise_std=sim_cfg.position_noise_std,
            pose_dropout_rate=sim_cfg.pose_dropout_rate, point_density=sim_cfg.point_density,
            label_flip_rate=sim_cfg.label_flip_rate, votes_per_point=sim_cfg.votes_per_point,
            seed=seed * 10_000 + 517 + i,
        )
        episodes.append(make_episode(topo, action, cfg))
        i += 1
    return episodes


def _ego_track(ep: Episode) -> Tuple[np.ndarray, np.ndarray]:
    pos = np.array([[p.position.x, p.position.y] for p in ep.poses])
    headings = np.array([p.heading for p in ep.poses])
    return pos, headings


def _anchor_frame(ep: Episode, rng: np.random.Generator, window_span: int) -> int:
    event = next(
        (i for i, r in enumerate(ep.gt_regions) if r not in (SemanticRegion.S, SemanticRegion.NS)),
        len(ep) // 2,
    )
    lead = int(rng.integers(8, 15))
    return int(np.clip(event - lead, window_span, len(ep) - 2))


def generate_risk_suite(
    n_scenes: int,
    sim_cfg: SimConfig,
    t_e: int,
    seed: int,
    miss_fraction: float = 0.0,
    intent_fraction: float = 0.0,
    n_base_episodes: int = 18,
    topology_params: TopologyParams = TopologyParams(),
    frame_step: int = 5,
) -> RiskSuite:
    """Deterministic scene suite. miss_fraction controls how many crossers
    are timed to miss the ego (behavior label "go"); intent_fraction adds
    scenes whose label is resolvable only through the ego's intent."""
    episodes = _base_episodes(sim_cfg, topology_params, n_base_episodes, seed)
    proj = frame_projection(len(episodes[0].features[0].vector()))
    w_ego, b_ego = fusion_map()
    hz = sim_cfg.frame_hz

    scenes: List[RiskScene] = []
    windows = []
    stops = []
    conflicts = []
    keys = []
    for s in range(n_scenes):
        rng = np.random.default_rng([seed, 100 + s])
        ep = episodes[int(rng.integers(0, len(episodes)))]
        pos, headings = _ego_track(ep)
        span = (t_e - 1) * frame_step
        anchor = _anchor_frame(ep, rng, span)
        ego_p = pos[anchor]
        ego_h = headings[anchor]
        ego_v = sim_cfg.speed_mps * np.array([np.cos(ego_h), np.sin(ego_h)])

        future = pos[anchor:]
        rel_t = np.arange(len(future)) / hz

        objs: List[Tuple[np.ndarray, np.ndarray]] = []  # (pos, vel)
        # one designed crosser aimed at (or timed to miss) an upcoming path
        # point; conflicts are placed before the path bends away from the
        # anchor heading so straight-line kinematics describe them faithfully
        future_headings = headings[anchor:]
        diverged = np.nonzero(np.abs(np.array([_wrap(h - ego_h) for h in future_headings])) > 0.3)[0]
        divergence_t = rel_t[diverged[0]] if len(diverged) else rel_t[-1]
        t_star_max = max(1.4, min(3.5, divergence_t - 0.1, rel_t[-1] - 0.2))
        t_star = float(rng.uniform(1.2, t_star_max))
        target_idx = min(int(round(t_star * hz)), len(future) - 1)
        t_star = rel_t[target_idx]
        target = future[target_idx]
        side = 1.0 if rng.random() < 0.5 else -1.0
        heading_at_target = headings[anchor + target_idx]
        cross_dir = np.array([np.cos(heading_at_target + side * np.pi / 2),
                              np.sin(heading_at_target + side * np.pi / 2)])
        v_mag = float(rng.uniform(4.0, 9.0))
        aim = target
        lateness = 0.0
        t_flight = t_star
        draw = rng.random()
        if draw < miss_fraction:
            # two miss styles so no single scene statistic separates the
            # labels: arrive late on the same line, or aim at a path point
            # the ego passes at a different time
            gap = float(rng.uniform(2.5, 4.0))
            if rng.random() < 0.5:
                lateness = gap
            else:
                aim_idx = target_idx + int(round(gap * hz))
                if aim_idx >= len(future):
                    aim_idx = max(0, target_idx - int(round(gap * hz)))
                aim = future[aim_idx]
        elif draw < miss_fraction + intent_fraction:
            # aim at the straight continuation of the approach: a conflict
            # iff the ego actually keeps going straight. Message statistics
            # are identical either way; only the ego's intent resolves it.
            fwd = np.array([np.cos(ego_h), np.sin(ego_h)])
            if len(diverged):
                t_flight = float(rng.uniform(divergence_t + 0.4, divergence_t + 1.8))
            else:
                t_flight = float(rng.uniform(1.5, max(1.6, min(3.2, rel_t[-1] - 0.3))))
            aim = ego_p + fwd * sim_cfg.speed_mps * t_flight
            cross_dir = np.array([np.cos(ego_h + side * np.pi / 2),
                                  np.sin(ego_h + side * np.pi / 2)])
        start = aim - cross_dir * v_mag * (t_flight + lateness)
        objs.append((start, cross_dir * v_mag))

        # distractors: parked, leading, receding (none on a conflict course)
        n_distract = int(rng.integers(2, 5))
        lane_half = ep.topology.half_width
        fwd_dir = np.array([np.cos(ego_h), np.sin(ego_h)])
        left_dir = np.array([-np.sin(ego_h), np.cos(ego_h)])
        for _ in range(n_distract):
            kind = int(rng.integers(0, 3))
            if kind == 0:  # parked at the roadside
                along = float(rng.uniform(-5.0, 30.0))
                lat = float(rng.choice([-1.0, 1.0])) * (lane_half + 1.0)
                objs.append((ego_p + fwd_dir * along + left_dir * lat, np.zeros(2)))
            elif kind == 1:  # leading vehicle on the ego path
                idx2 = min(anchor + int(rng.integers(10, 22)), len(pos) - 1)
                objs.append((pos[idx2], ego_v.copy()))
            else:  # receding vehicle pulling away ahead
                along = float(rng.uniform(8.0, 18.0))
                factor = float(rng.uniform(1.2, 1.5))
                objs.append((ego_p + fwd_dir * along, ego_v * factor))

        # shuffle so the designed crosser is not identifiable by position
        order = rng.permutation(len(objs))
        objs = [objs[int(k)] for k in order]

        # programmatic ground truth: earliest path conflict
        conflict_times = []
        closest = []
        for start_p, vel in objs:
            traj = start_p[None, :] + rel_t[:, None] * vel[None, :]
            dist = np.hypot(*(future - traj).T)
            hits = np.nonzero(dist < CONFLICT_RADIUS_M)[0]
            conflict_times.append(rel_t[hits[0]] if len(hits) else np.inf)
            closest.append(float(dist.min()))
        conflict_times = np.array(conflict_times)
        any_conflict = bool(np.isfinite(conflict_times).any())
        if any_conflict:
            gt_idx = int(np.argmin(conflict_times))
            stop = bool(conflict_times[gt_idx] <= YIELD_HORIZON_S)
        else:
            gt_idx = int(np.argmin(closest))
            stop = False

        core = ep.topology.intersection_core
        cxmin, cymin, cxmax, cymax = core.rect_bounds
        messages = []
        boxes = []
        for start_p, vel in objs:
            horizon_t = np.arange(0.0, YIELD_HORIZON_S + 1e-9, 1.0 / hz)
            traj = start_p[None, :] + horizon_t[:, None] * vel[None, :]
            in_core = (
                (traj[:, 0] >= cxmin) & (traj[:, 0] <= cxmax)
                & (traj[:, 1] >= cymin) & (traj[:, 1] <= cymax)
            )
            flag = 1.0 if bool(in_core.any()) else 0.0
            messages.append(object_message(ego_p, ego_h, ego_v, start_p, vel, flag))
            rel = _to_ego_frame(start_p - ego_p, ego_h)
            boxes.append(synth_box(rel[0], rel[1]))

        feat = ep.features[anchor].vector()
        scene = RiskScene(
            g_f=proj @ feat,
            objects=np.stack(messages),
            boxes=np.stack(boxes),
            gt_risk_index=gt_idx,
            w_ego=w_ego,
            b_ego=b_ego,
        )
        scenes.append(scene)
        window_idx = [anchor - (t_e - 1 - k) * frame_step for k in range(t_e)]
        windows.append(np.stack([ep.features[j].vector() for j in window_idx]))
        stops.append(1 if stop else 0)
        conflicts.append(any_conflict)
        keys.append(f"{ep.topology.kind.value}:{ep.action.value}:{s}")

    return RiskSuite(
        scenes=scenes,
        windows=np.stack(windows),
        stop_labels=np.array(stops, dtype=np.int64),
        has_conflict=np.array(conflicts, dtype=bool),
        episode_keys=keys,
    )
