"""Downstream heads: driver-intention prediction and risk-object scoring.

The intention head is a linear softmax on the accumulator hidden state,
trained with the backbone frozen. Risk-object scoring follows the
intervention recipe: fuse frame, object, and (optionally) backbone
representations, score each object by how much masking it from the object
pool changes the behavior model's output, and pick the argmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .model import SrpConfig, SrpParams, hidden_states, softmax
from .topology import ACTION_ORDER, AffordedAction

N_INTENTIONS = 5
INTENT_CLASSES: Tuple[AffordedAction, ...] = ACTION_ORDER
DEFAULT_FUSED_DIM = 100
MEAN_ACC_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2))


def intent_index(action: AffordedAction) -> int:
    return INTENT_CLASSES.index(action)


@dataclass
class IntentHead:
    w_int: np.ndarray  # (hidden_dim, 5)
    b_int: np.ndarray  # (5,)

    @classmethod
    def zeros(cls, input_dim: int) -> "IntentHead":
        return cls(np.zeros((input_dim, N_INTENTIONS)), np.zeros(N_INTENTIONS))


@dataclass(frozen=True)
class IntentSample:
    window: np.ndarray  # (t_e, feature_dim) observed up to time t
    horizon: int  # frames between the window end and the maneuver (> 0)
    gt_intention: AffordedAction
    interactive: bool = False  # other participants force the ego to react

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ValueError("horizon must be positive (intention lies in the future)")


def intent_predict(head: IntentHead, h: np.ndarray) -> np.ndarray:
    """softmax(W^T h + b) over the five intentions."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (head.w_int.shape[0],):
        raise ValueError(f"hidden state dim {h.shape} != head input dim {head.w_int.shape[0]}")
    return softmax(h @ head.w_int + head.b_int)


@dataclass(frozen=True)
class HeadTrainConfig:
    lr: float = 1e-4
    weight_decay: float = 5e-4
    epochs: int = 60
    batch_size: int = 32
    seed: int = 0


def train_linear_softmax(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    hyper: HeadTrainConfig,
    init_w: Optional[np.ndarray] = None,
    init_b: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """Adam + decoupled weight decay on a single softmax layer."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, d = features.shape
    w = init_w.copy() if init_w is not None else np.zeros((d, n_classes))
    b = init_b.copy() if init_b is not None else np.zeros(n_classes)
    m_w = np.zeros_like(w); v_w = np.zeros_like(w)
    m_b = np.zeros_like(b); v_b = np.zeros_like(b)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    rng = np.random.default_rng([hyper.seed, 29])
    step = 0
    losses: List[float] = []
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            x, y = features[idx], labels[idx]
            logits = x @ w + b
            shifted = logits - logits.max(axis=1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            epoch_loss += float(-logp[np.arange(len(y)), y].sum())
            dlogits = np.exp(logp)
            dlogits[np.arange(len(y)), y] -= 1.0
            dlogits /= len(y)
            gw = x.T @ dlogits
            gb = dlogits.sum(axis=0)
            step += 1
            bc1 = 1.0 - beta1**step
            bc2 = 1.0 - beta2**step
            m_w = beta1 * m_w + (1 - beta1) * gw; v_w = beta2 * v_w + (1 - beta2) * gw * gw
            m_b = beta1 * m_b + (1 - beta1) * gb; v_b = beta2 * v_b + (1 - beta2) * gb * gb
            w -= hyper.lr * (m_w / bc1) / (np.sqrt(v_w / bc2) + eps) + hyper.lr * hyper.weight_decay * w
            b -= hyper.lr * (m_b / bc1) / (np.sqrt(v_b / bc2) + eps) + hyper.lr * hyper.weight_decay * b
        losses.append(epoch_loss / n)
    return w, b, losses


def train_intent(
    head: IntentHead,
    samples: Sequence[IntentSample],
    srp_params: SrpParams,
    srp_cfg: SrpConfig,
    hyper: HeadTrainConfig = HeadTrainConfig(),
) -> IntentHead:
    """Train only (W_int, b_int) on frozen-backbone hidden states.

    The backbone parameters are asserted byte-unchanged afterwards.
    """
    if not samples:
        raise ValueError("train_intent needs samples")
    before = srp_params.checksum()
    windows = np.stack([s.window for s in samples])
    feats = hidden_states(srp_params, srp_cfg, windows)
    labels = np.array([intent_index(s.gt_intention) for s in samples])
    w, b, _ = train_linear_softmax(feats, labels, N_INTENTIONS, hyper, head.w_int, head.b_int)
    if srp_params.checksum() != before:
        raise RuntimeError("frozen-backbone contract violated: SRP parameters changed")
    return IntentHead(w, b)


@dataclass
class RiskScene:
    """One synthetic interactive frame: frame-level feature, object messages
    (relative position, relative velocity, crossing flag), synthetic
    image-plane boxes, the programmatic risk ground truth, and the fixed
    fusion map applied before concatenating the backbone state."""

    g_f: np.ndarray  # (gf_dim,)
    objects: np.ndarray  # (N, obj_dim)
    boxes: np.ndarray  # (N, 4) as (x, y, w, h)
    gt_risk_index: int
    w_ego: np.ndarray  # (fused_dim, gf_dim + obj_dim)
    b_ego: np.ndarray  # (fused_dim,)

    def __post_init__(self) -> None:
        n = len(self.objects)
        if n < 1:
            raise ValueError("a risk scene needs at least one object")
        if not 0 <= self.gt_risk_index < n:
            raise ValueError("gt_risk_index out of range")
        if self.boxes.shape != (n, 4):
            raise ValueError("boxes must be (N, 4)")


def _masked_mean(objects: np.ndarray, masked: Optional[Set[int]]) -> np.ndarray:
    if masked:
        keep = [k for k in range(len(objects)) if k not in masked]
        if not keep:
            raise ValueError("cannot mask every object")
        return objects[keep].mean(axis=0)
    return objects.mean(axis=0)


def ego_concat(scene: RiskScene, masked: Optional[Set[int]] = None) -> np.ndarray:
    """Plain ego representation: frame feature concatenated with the mean
    object message (no fusion layer, no backbone state)."""
    return np.concatenate([scene.g_f, _masked_mean(scene.objects, masked)])


def ego_fuse(scene: RiskScene, h: np.ndarray, masked: Optional[Set[int]] = None) -> np.ndarray:
    """Backbone-guided ego representation: the fused branch
    W_ego (g_f concat mean_k g_k) + b_ego, concatenated with the hidden state."""
    fused = scene.w_ego @ ego_concat(scene, masked) + scene.b_ego
    return np.concatenate([fused, np.asarray(h, dtype=np.float64)])


FuseFn = Callable[[RiskScene, np.ndarray, Optional[Set[int]]], np.ndarray]
BehaviorFn = Callable[[np.ndarray], np.ndarray]


def risk_identify(
    scene: RiskScene,
    h: np.ndarray,
    behavior: BehaviorFn,
    fuse: FuseFn = ego_fuse,
) -> Tuple[int, np.ndarray]:
    """Intervention scoring: remove each object from the pool, measure the L1
    change of the behavior output, return (argmax index, all scores).
    Ties break to the lowest index."""
    n = len(scene.objects)
    if n == 0:
        raise ValueError("risk_identify needs at least one object")
    if n == 1:
        return 0, np.zeros(1)
    base = behavior(fuse(scene, h, None))
    scores = np.zeros(n)
    for k in range(n):
        altered = behavior(fuse(scene, h, {k}))
        scores[k] = float(np.abs(base - altered).sum())
    return int(np.argmax(scores)), scores


def box_iou(a: Sequence[float], b: Sequence[float]) -> float:
    """IoU of (x, y, w, h) boxes; degenerate boxes have IoU 0."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        return 0.0
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def risk_box_metrics(pred_boxes: np.ndarray, gt_boxes: np.ndarray) -> Dict[str, float]:
    """Frame accuracy at IoU 0.5 and 0.75, plus the mean over 0.5:0.05:0.95."""
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    if len(pred_boxes) != len(gt_boxes):
        raise ValueError("pred/gt box count mismatch")
    ious = np.array([box_iou(p, g) for p, g in zip(pred_boxes, gt_boxes)])
    acc = {f"acc@{tau}": float((ious >= tau).mean()) for tau in (0.5, 0.75)}
    acc["mean_acc"] = float(np.mean([(ious >= tau).mean() for tau in MEAN_ACC_THRESHOLDS]))
    return acc
