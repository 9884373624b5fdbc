"""Line-delimited JSON dataset: one header line, one record per frame.

The header pins the format version, fan geometry, vocabularies, feature
length, and the generating config hash; readers reject unknown versions.
Sliding-window extraction happens at load time so one dataset file serves
any (t_e, t_d, stride) combination.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import SemanticClass
from .labeling import LabelingResult
from .model import SrpConfig, SrpSample, TrainingTarget
from .heads import IntentSample
from .simulate import Episode, FAN_BEARINGS_DEG, FAN_RANGES, FEATURE_LENGTH
from .topology import AffordedAction, SemanticRegion, region_vocab_index

FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    pass


def make_header(config_hash: str, frame_hz: float, speed_mps: float) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "roadregions-dataset",
        "fan": {"ranges_m": list(FAN_RANGES), "bearings_deg": list(FAN_BEARINGS_DEG)},
        "class_vocab": [c.name for c in SemanticClass],
        "region_vocab": [r.name for r in SemanticRegion],
        "feature_length": FEATURE_LENGTH,
        "frame_hz": frame_hz,
        "speed_mps": speed_mps,
        "config_hash": config_hash,
    }


def episode_records(
    episode: Episode,
    episode_id: str,
    split: str,
    labeling: LabelingResult,
    seed: int,
) -> List[dict]:
    """Frame records in fixed key order (stable bytes on re-serialization)."""
    records = []
    reason = labeling.reject_reason.value if labeling.reject_reason else None
    for i, pose in enumerate(episode.poses):
        label = labeling.labels[i] if i < len(labeling.labels) else None
        records.append(
            {
                "episode_id": episode_id,
                "frame_index": pose.frame_index,
                "pose": {
                    "x": pose.position.x,
                    "y": pose.position.y,
                    "heading": pose.heading,
                    "localized": pose.localized,
                },
                "feature": [float(v) for v in episode.features[i].vector()],
                "gt_region": episode.gt_regions[i].name,
                "labeler_region": label.name if label is not None else None,
                "topology_class": episode.gt_topology_class,
                "action": episode.action.value,
                "split": split,
                "accepted": labeling.accepted,
                "reject_reason": reason,
                "topology_kind": episode.topology.kind.value,
                "seed": seed,
            }
        )
    return records


def write_dataset(path: str, header: dict, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


@dataclass
class LoadedDataset:
    header: dict
    records: List[dict]

    def episodes(self) -> Dict[str, List[dict]]:
        by_episode: Dict[str, List[dict]] = {}
        for rec in self.records:
            by_episode.setdefault(rec["episode_id"], []).append(rec)
        for frames in by_episode.values():
            frames.sort(key=lambda r: r["frame_index"])
        return by_episode

    def config_hash(self) -> str:
        return self.header.get("config_hash", "")


def load_dataset(path: str) -> LoadedDataset:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise DatasetFormatError("empty dataset file")
        header = json.loads(first)
        if header.get("format_version") != FORMAT_VERSION:
            raise DatasetFormatError(f"unsupported dataset format version {header.get('format_version')}")
        feature_length = header["feature_length"]
        records = []
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if len(rec["feature"]) != feature_length:
                raise DatasetFormatError(f"line {line_no}: feature length mismatch")
            records.append(rec)
    return LoadedDataset(header, records)


def assign_splits(episode_ids: Sequence[str], ratios: Tuple[float, float, float], seed: int) -> Dict[str, str]:
    """Deterministic per-episode split assignment."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    rng = np.random.default_rng([seed, 999])
    ids = list(episode_ids)
    order = rng.permutation(len(ids))
    n = len(ids)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    assignment = {}
    for rank, idx in enumerate(order):
        if rank < n_train:
            split = "train"
        elif rank < n_train + n_val:
            split = "val"
        else:
            split = "test"
        assignment[ids[idx]] = split
    return assignment


def _region_index(name: str, topology_class: int) -> Optional[int]:
    region = SemanticRegion[name]
    if region is SemanticRegion.OUTSIDE:
        return None
    try:
        return region_vocab_index(region, topology_class == 1)
    except ValueError:
        return None


DEFAULT_FRAME_STEP = 5


def window_frame_indices(end: int, t_e: int, frame_step: int) -> List[int]:
    """Frame indices of a window ending at `end`, spaced frame_step apart."""
    return [end - (t_e - 1 - k) * frame_step for k in range(t_e)]


def build_srp_samples(
    dataset: LoadedDataset,
    cfg: SrpConfig,
    splits: Sequence[str] = ("train",),
    stride: int = 1,
    label_source: str = "gt",
    frame_step: int = DEFAULT_FRAME_STEP,
) -> List[SrpSample]:
    """Sliding windows (length t_e, future horizon t_d, given stride).

    frame_step spaces both the encoder frames and the decoder targets, so the
    t_d-step horizon spans t_d * frame_step raw frames. label_source "gt"
    uses the simulator partition labels; "labeler" uses the automatic labels
    and skips rejected episodes and unlabeled frames.
    """
    if label_source not in ("gt", "labeler"):
        raise ValueError("label_source must be 'gt' or 'labeler'")
    if frame_step < 1 or stride < 1:
        raise ValueError("frame_step and stride must be >= 1")
    key = "gt_region" if label_source == "gt" else "labeler_region"
    samples: List[SrpSample] = []
    span = (cfg.t_e - 1) * frame_step
    for _, frames in sorted(dataset.episodes().items()):
        if frames[0]["split"] not in splits:
            continue
        if label_source == "labeler" and not frames[0]["accepted"]:
            continue
        topo = int(frames[0]["topology_class"])
        feats = np.array([f["feature"] for f in frames])
        idx = []
        ok = True
        for f in frames:
            name = f[key]
            if name is None:
                ok = False
                break
            ri = _region_index(name, topo)
            if ri is None:
                ok = False
                break
            idx.append(ri)
        if not ok:
            continue
        idx = np.array(idx)
        n = len(frames)
        if n <= span:
            continue
        for start in range(0, n - span, stride):
            window_idx = window_frame_indices(start + span, cfg.t_e, frame_step)
            last = window_idx[-1]
            future = np.zeros(cfg.t_d, dtype=np.int64)
            mask = np.zeros(cfg.t_d, dtype=bool)
            for m in range(cfg.t_d):
                j = last + m * frame_step
                if j < n:
                    future[m] = idx[j]
                    mask[m] = True
            samples.append(
                SrpSample(
                    window=feats[window_idx],
                    target=TrainingTarget(
                        topology=topo,
                        regions=idx[window_idx],
                        future_regions=future,
                        future_mask=mask,
                    ),
                )
            )
    return samples


def build_intent_samples(
    dataset: LoadedDataset,
    cfg: SrpConfig,
    splits: Sequence[str] = ("train",),
    per_episode: int = 3,
    seed: int = 0,
    frame_step: int = DEFAULT_FRAME_STEP,
    interactive_ids: Optional[set] = None,
) -> List[IntentSample]:
    """Windows anchored before the maneuver: the window ends `horizon` frames
    before the first non-source region (mid-episode for plain straights)."""
    samples: List[IntentSample] = []
    span = (cfg.t_e - 1) * frame_step
    for ep_id, frames in sorted(dataset.episodes().items()):
        if frames[0]["split"] not in splits:
            continue
        rng = np.random.default_rng([seed, 31, abs(hash(ep_id)) % (2**31)])
        feats = np.array([f["feature"] for f in frames])
        action = AffordedAction(frames[0]["action"])
        source = {SemanticRegion.S.name, SemanticRegion.NS.name}
        event = next((i for i, f in enumerate(frames) if f["gt_region"] not in source), len(frames) // 2)
        n = len(frames)
        for _ in range(per_episode):
            horizon = int(rng.integers(10, 26))
            end = event - horizon
            if end < span:
                end = span
                horizon = max(1, event - end)
            if end >= n:
                end = n - 1
            samples.append(
                IntentSample(
                    window=feats[window_frame_indices(end, cfg.t_e, frame_step)],
                    horizon=horizon,
                    gt_intention=action,
                    interactive=bool(interactive_ids and ep_id in interactive_ids),
                )
            )
    return samples
