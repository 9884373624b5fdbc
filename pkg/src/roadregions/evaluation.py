"""Evaluation pipelines shared by the CLI and the test suite."""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .heads import (
    HeadTrainConfig,
    IntentHead,
    IntentSample,
    ego_concat,
    ego_fuse,
    intent_index,
    risk_box_metrics,
    risk_identify,
    train_linear_softmax,
)
from .metrics import MetricsReport, PredictionRecord, compute_metrics
from .model import SrpConfig, SrpParams, SrpSample, hidden_states, infer_batch, softmax
from .riskscene import RiskSuite, generate_risk_suite
from .simulate import SimConfig
from .topology import TopologyParams


def _region_records(
    scores: np.ndarray, gts: np.ndarray, sample_ids: np.ndarray, frame_ids: np.ndarray
) -> List[PredictionRecord]:
    return [
        PredictionRecord(scores[i], int(np.argmax(scores[i])), int(gts[i]), int(sample_ids[i]), int(frame_ids[i]))
        for i in range(len(gts))
    ]


def majority_baseline_map(gts: np.ndarray, n_classes: int) -> float:
    """mAP of a constant predictor that always emits the most frequent class."""
    majority = int(np.argmax(np.bincount(gts, minlength=n_classes)))
    scores = np.zeros((len(gts), n_classes))
    scores[:, majority] = 1.0
    records = _region_records(scores, gts, np.arange(len(gts)), np.zeros(len(gts)))
    return compute_metrics(records, n_classes).map


def evaluate_srp(params: SrpParams, cfg: SrpConfig, samples: Sequence[SrpSample]) -> dict:
    """Topology accuracy plus current/future region metrics per topology group.

    Region metrics are conditioned on the ground-truth topology (the matching
    classifier's scores), isolating region quality from gate mistakes, which
    the topology accuracy reports separately.
    """
    if not samples:
        raise ValueError("evaluate_srp needs samples")
    windows = np.stack([s.window for s in samples])
    o = np.array([s.target.topology for s in samples])
    regions = np.stack([s.target.regions for s in samples])
    future = np.stack([s.target.future_regions for s in samples])
    mask = np.stack([s.target.future_mask for s in samples])

    out = infer_batch(params, cfg, windows)
    topo_pred = np.argmax(out["z"][:, -1, :], axis=1)
    report: dict = {"topology_accuracy": float((topo_pred == o).mean()), "groups": {}}

    for group, name, enc_key, dec_key, n_classes in (
        (1, "intersection", "ye1", "yd1", cfg.n_regions_intersection),
        (0, "non_intersection", "ye0", "yd0", cfg.n_regions_non),
    ):
        idx = np.nonzero(o == group)[0]
        if len(idx) == 0:
            continue
        cur_scores = softmax(out[enc_key][idx, -1, :])
        cur_gt = regions[idx, -1]
        cur_records = _region_records(cur_scores, cur_gt, idx, np.zeros(len(idx)))
        cur_metrics = compute_metrics(cur_records, n_classes)

        fut_records: List[PredictionRecord] = []
        fut_gts: List[int] = []
        for m in range(cfg.t_d):
            valid = idx[mask[idx, m]]
            if len(valid) == 0:
                continue
            sc = softmax(out[dec_key][valid, m, :])
            gts = future[valid, m]
            fut_records.extend(_region_records(sc, gts, valid, np.full(len(valid), m)))
            fut_gts.extend(gts.tolist())
        fut_metrics = compute_metrics(fut_records, n_classes) if fut_records else None
        entry = {
            "n_windows": int(len(idx)),
            "current": cur_metrics.to_json_dict(),
            "current_majority_map": majority_baseline_map(cur_gt, n_classes),
        }
        if fut_metrics is not None:
            entry["future"] = fut_metrics.to_json_dict()
            entry["future_majority_map"] = majority_baseline_map(np.array(fut_gts), n_classes)
        report["groups"][name] = entry
    return report


def intent_features(
    samples: Sequence[IntentSample], params: SrpParams, cfg: SrpConfig
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(hidden-state features, raw mean-feature ablation features, labels)."""
    windows = np.stack([s.window for s in samples])
    hidden = hidden_states(params, cfg, windows)
    raw = windows.mean(axis=1)
    labels = np.array([intent_index(s.gt_intention) for s in samples])
    return hidden, raw, labels


def evaluate_intent_head(w: np.ndarray, b: np.ndarray, features: np.ndarray, labels: np.ndarray) -> dict:
    probs = softmax(features @ w + b)
    records = _region_records(probs, labels, np.arange(len(labels)), np.zeros(len(labels)))
    return compute_metrics(records, probs.shape[1]).to_json_dict()


def evaluate_intent(
    head: IntentHead,
    samples: Sequence[IntentSample],
    params: SrpParams,
    cfg: SrpConfig,
    raw_head: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> dict:
    hidden, raw, labels = intent_features(samples, params, cfg)
    report = {"all": evaluate_intent_head(head.w_int, head.b_int, hidden, labels), "n_samples": len(samples)}
    interactive = np.array([s.interactive for s in samples], dtype=bool)
    if interactive.any():
        report["interactive"] = evaluate_intent_head(head.w_int, head.b_int, hidden[interactive], labels[interactive])
        report["n_interactive"] = int(interactive.sum())
    if raw_head is not None:
        report["raw_feature_baseline"] = evaluate_intent_head(raw_head[0], raw_head[1], raw, labels)
    return report


def _fused_features(suite: RiskSuite, hidden: np.ndarray) -> np.ndarray:
    return np.stack([ego_fuse(scene, hidden[i]) for i, scene in enumerate(suite.scenes)])


def _concat_features(suite: RiskSuite) -> np.ndarray:
    return np.stack([ego_concat(scene) for scene in suite.scenes])


def run_risk_evaluation(
    params: SrpParams,
    cfg: SrpConfig,
    sim_cfg: SimConfig,
    seed: int,
    n_train_scenes: int = 1200,
    n_eval_scenes: int = 100,
    miss_fraction: float = 0.45,
    intent_fraction: float = 0.0,
    hyper: HeadTrainConfig = HeadTrainConfig(lr=1e-2, weight_decay=3e-3, epochs=300),
    topology_params: TopologyParams = TopologyParams(),
    frame_step: int = 5,
) -> dict:
    """Train the stop/go behavior models (backbone-fused and plain) on a
    seeded scene suite, then score object interventions on a conflict-only
    evaluation suite."""
    train_suite = generate_risk_suite(
        n_train_scenes, sim_cfg, cfg.t_e, seed, miss_fraction, intent_fraction,
        topology_params=topology_params, frame_step=frame_step,
    )
    eval_suite = generate_risk_suite(
        n_eval_scenes, sim_cfg, cfg.t_e, seed + 1, 0.0,
        topology_params=topology_params, frame_step=frame_step,
    )
    h_train = hidden_states(params, cfg, train_suite.windows)
    h_eval = hidden_states(params, cfg, eval_suite.windows)

    w_f, b_f, _ = train_linear_softmax(_fused_features(train_suite, h_train), train_suite.stop_labels, 2, hyper)
    w_u, b_u, _ = train_linear_softmax(_concat_features(train_suite), train_suite.stop_labels, 2, hyper)

    def behavior_fused(vec: np.ndarray) -> np.ndarray:
        return softmax(vec @ w_f + b_f)

    def behavior_plain(vec: np.ndarray) -> np.ndarray:
        return softmax(vec @ w_u + b_u)

    def concat_fuse(scene, h, masked: Optional[Set[int]] = None):
        return ego_concat(scene, masked)

    results = {"fused": {"hits": 0, "scores": []}, "plain": {"hits": 0, "scores": []}}
    pred_boxes_fused, pred_boxes_plain, gt_boxes = [], [], []
    per_scene = []
    for i, scene in enumerate(eval_suite.scenes):
        idx_f, scores_f = risk_identify(scene, h_eval[i], behavior_fused, fuse=ego_fuse)
        idx_p, scores_p = risk_identify(scene, h_eval[i], behavior_plain, fuse=concat_fuse)
        results["fused"]["hits"] += int(idx_f == scene.gt_risk_index)
        results["plain"]["hits"] += int(idx_p == scene.gt_risk_index)
        pred_boxes_fused.append(scene.boxes[idx_f])
        pred_boxes_plain.append(scene.boxes[idx_p])
        gt_boxes.append(scene.boxes[scene.gt_risk_index])
        per_scene.append(
            {
                "scene": eval_suite.episode_keys[i],
                "gt_index": scene.gt_risk_index,
                "fused_index": idx_f,
                "plain_index": idx_p,
                "fused_scores": [float(s) for s in scores_f],
                "plain_scores": [float(s) for s in scores_p],
            }
        )

    n = len(eval_suite.scenes)
    return {
        "n_eval_scenes": n,
        "identification_rate_fused": results["fused"]["hits"] / n,
        "identification_rate_plain": results["plain"]["hits"] / n,
        "box_metrics_fused": risk_box_metrics(np.stack(pred_boxes_fused), np.stack(gt_boxes)),
        "box_metrics_plain": risk_box_metrics(np.stack(pred_boxes_plain), np.stack(gt_boxes)),
        "train_stop_fraction": float(train_suite.stop_labels.mean()),
        "per_scene": per_scene,
    }
