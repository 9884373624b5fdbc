"""Run configuration: flat key/value files with dotted section keys.

Unknown keys are hard errors; silent hyperparameter typos are the main
reproducibility hazard. Every run artifact carries the sha256 hash of the
canonical config dict.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Tuple

from .topology import AffordedAction, TopologyKind


class ConfigError(ValueError):
    pass


@dataclass
class MixEntry:
    kind: TopologyKind
    action: AffordedAction
    count: int


@dataclass
class RunConfig:
    seed: int = 7
    out_dir: str = "runs/out"

    # topology parameters (shared by every generated scene)
    lane_width: float = 3.5
    lanes_per_direction: int = 2
    crosswalk_width: float = 3.0
    approach_length: float = 20.0
    midblock_crosswalks: bool = False

    # simulator noise model
    speed_mps: float = 10.0
    frame_hz: float = 10.0
    heading_noise_std: float = 0.01
    position_noise_std: float = 0.15
    pose_dropout_rate: float = 0.03
    point_density: float = 24.0
    label_flip_rate: float = 0.1
    votes_per_point: int = 7

    # BEV / labeler
    bev_resolution: float = 0.5
    min_component_cells: int = 24
    overlap_inflate_m: float = 0.0
    max_step_m: float = 2.5
    max_heading_step_rad: float = 0.8
    min_localized_fraction: float = 0.5

    # model
    t_e: int = 3
    t_d: int = 5
    hidden_dim: int = 64
    logit_embed_dim: int = 16
    window_stride: int = 1
    frame_step: int = 5  # raw frames between window/horizon steps
    label_source: str = "gt"  # or "labeler"

    # optimizer (paper-faithful defaults)
    lr: float = 1e-4
    weight_decay: float = 5e-4
    epochs: int = 60
    batch_size: int = 32

    # intent head
    intent_per_episode: int = 6
    intent_epochs: int = 60

    # risk suite
    risk_train_scenes: int = 1200
    risk_eval_scenes: int = 100
    risk_miss_fraction: float = 0.45
    risk_intent_fraction: float = 0.0
    risk_lr: float = 1e-2
    risk_weight_decay: float = 3e-3
    risk_epochs: int = 300

    # dataset split
    split_train: float = 0.7
    split_val: float = 0.15
    split_test: float = 0.15

    mix: List[MixEntry] = field(default_factory=list)

    def validate(self) -> None:
        if abs(self.split_train + self.split_val + self.split_test - 1.0) > 1e-9:
            raise ConfigError("split ratios must sum to 1")
        for entry in self.mix:
            if entry.count < 0:
                raise ConfigError("mix counts must be >= 0")

    def canonical_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("mix", "out_dir")}
        d["mix"] = sorted(f"{e.kind.value}.{e.action.value}={e.count}" for e in self.mix)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_KEY_MAP: Dict[str, Tuple[str, type]] = {
    "seed": ("seed", int),
    "out.dir": ("out_dir", str),
    "topology.lane_width": ("lane_width", float),
    "topology.lanes_per_direction": ("lanes_per_direction", int),
    "topology.crosswalk_width": ("crosswalk_width", float),
    "topology.approach_length": ("approach_length", float),
    "topology.midblock_crosswalks": ("midblock_crosswalks", bool),
    "sim.speed_mps": ("speed_mps", float),
    "sim.frame_hz": ("frame_hz", float),
    "sim.heading_noise_std": ("heading_noise_std", float),
    "sim.position_noise_std": ("position_noise_std", float),
    "sim.pose_dropout_rate": ("pose_dropout_rate", float),
    "sim.point_density": ("point_density", float),
    "sim.label_flip_rate": ("label_flip_rate", float),
    "sim.votes_per_point": ("votes_per_point", int),
    "bev.resolution": ("bev_resolution", float),
    "labeler.min_component_cells": ("min_component_cells", int),
    "labeler.overlap_inflate_m": ("overlap_inflate_m", float),
    "labeler.max_step_m": ("max_step_m", float),
    "labeler.max_heading_step_rad": ("max_heading_step_rad", float),
    "labeler.min_localized_fraction": ("min_localized_fraction", float),
    "srp.t_e": ("t_e", int),
    "srp.t_d": ("t_d", int),
    "srp.hidden_dim": ("hidden_dim", int),
    "srp.logit_embed_dim": ("logit_embed_dim", int),
    "srp.window_stride": ("window_stride", int),
    "srp.frame_step": ("frame_step", int),
    "srp.label_source": ("label_source", str),
    "train.lr": ("lr", float),
    "train.weight_decay": ("weight_decay", float),
    "train.epochs": ("epochs", int),
    "train.batch_size": ("batch_size", int),
    "intent.per_episode": ("intent_per_episode", int),
    "intent.epochs": ("intent_epochs", int),
    "risk.train_scenes": ("risk_train_scenes", int),
    "risk.eval_scenes": ("risk_eval_scenes", int),
    "risk.miss_fraction": ("risk_miss_fraction", float),
    "risk.intent_fraction": ("risk_intent_fraction", float),
    "risk.lr": ("risk_lr", float),
    "risk.weight_decay": ("risk_weight_decay", float),
    "risk.epochs": ("risk_epochs", int),
    "split.train": ("split_train", float),
    "split.val": ("split_val", float),
    "split.test": ("split_test", float),
}

_KINDS = {k.value: k for k in TopologyKind}
_ACTIONS = {a.value: a for a in AffordedAction}


def _parse_value(raw: str, typ: type, key: str):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    mix: List[MixEntry] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected KEY = VALUE")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key.startswith("mix."):
            parts = key.split(".")
            if len(parts) != 3 or parts[1] not in _KINDS or parts[2] not in _ACTIONS:
                raise ConfigError(f"line {line_no}: unknown mix key {key!r}")
            count = _parse_value(raw, int, key)
            mix.append(MixEntry(_KINDS[parts[1]], _ACTIONS[parts[2]], count))
            continue
        if key not in _KEY_MAP:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
        attr, typ = _KEY_MAP[key]
        setattr(cfg, attr, _parse_value(raw, typ, key))
    cfg.mix = mix
    cfg.validate()
    return cfg


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
