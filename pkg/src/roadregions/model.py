"""Region-prediction sequence model with hand-written analytic gradients.

The cell is a single-gate recurrent unit (update gate + tanh candidate).
Per encoder step it consumes the frame feature concatenated with the
previous step's decoder summary, emits topology logits and both region
classifiers' logits from the hidden state, then unrolls a decoder whose
per-step logits are expanded back to an embedding and fed to the next
decoder step; the mean of those embeddings is the summary folded back into
the next encoder step. The final unroll's logits are the future-region
predictions.

The feedback embedding is gated by topology: the ground-truth class during
loss/gradient computation (teacher forcing) and the predicted class at
inference. This keeps the loss exactly independent of the classifier the
topology indicator does not select, which also makes its gradient exactly
zero on single-topology batches.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

N_TOPOLOGY_CLASSES = 2
N_REGIONS_INTERSECTION = 13
N_REGIONS_NON_INTERSECTION = 5

CHECKPOINT_MAGIC = b"RRCK0001"


@dataclass(frozen=True)
class SrpConfig:
    t_e: int = 3  # encoder window length (historical frames)
    t_d: int = 5  # decoder horizon
    feature_dim: int = 146
    hidden_dim: int = 64
    logit_embed_dim: int = 16

    n_regions_intersection: int = N_REGIONS_INTERSECTION
    n_regions_non: int = N_REGIONS_NON_INTERSECTION

    def __post_init__(self) -> None:
        if self.t_e < 1 or self.t_d < 1:
            raise ValueError("t_e and t_d must be >= 1")
        if self.n_regions_intersection != 13 or self.n_regions_non != 5:
            raise ValueError("region vocabulary sizes are fixed at 13/5")
        if min(self.feature_dim, self.hidden_dim, self.logit_embed_dim) < 1:
            raise ValueError("dimensions must be positive")


def _param_shapes(cfg: SrpConfig) -> Dict[str, Tuple[int, ...]]:
    f, h, e = cfg.feature_dim, cfg.hidden_dim, cfg.logit_embed_dim
    r0, r1 = cfg.n_regions_non, cfg.n_regions_intersection
    return {
        "enc_wu": (h, f + e), "enc_uu": (h, h), "enc_bu": (h,),
        "enc_wc": (h, f + e), "enc_uc": (h, h), "enc_bc": (h,),
        "dec_wu": (h, e), "dec_uu": (h, h), "dec_bu": (h,),
        "dec_wc": (h, e), "dec_uc": (h, h), "dec_bc": (h,),
        "top_w": (N_TOPOLOGY_CLASSES, h), "top_b": (N_TOPOLOGY_CLASSES,),
        "reg0_w": (r0, h), "reg0_b": (r0,),
        "reg1_w": (r1, h), "reg1_b": (r1,),
        "emb0_w": (e, r0), "emb0_b": (e,),
        "emb1_w": (e, r1), "emb1_b": (e,),
    }


@dataclass
class SrpParams:
    """All learnable weights, keyed by name with fixed ordering."""

    arrays: Dict[str, np.ndarray]

    @classmethod
    def zeros(cls, cfg: SrpConfig) -> "SrpParams":
        return cls({k: np.zeros(s) for k, s in _param_shapes(cfg).items()})

    @classmethod
    def init(cls, cfg: SrpConfig, seed: int = 0) -> "SrpParams":
        rng = np.random.default_rng([seed, 77])
        arrays = {}
        for k, shape in _param_shapes(cfg).items():
            if len(shape) == 1:
                arrays[k] = np.zeros(shape)
            else:
                arrays[k] = rng.normal(0.0, 1.0 / np.sqrt(shape[-1]), shape)
        return cls(arrays)

    def copy(self) -> "SrpParams":
        return SrpParams({k: v.copy() for k, v in self.arrays.items()})

    def validate_shapes(self, cfg: SrpConfig) -> None:
        shapes = _param_shapes(cfg)
        if set(shapes) != set(self.arrays):
            raise ValueError("parameter names do not match config")
        for k, s in shapes.items():
            if tuple(self.arrays[k].shape) != s:
                raise ValueError(f"parameter {k} has shape {self.arrays[k].shape}, expected {s}")

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for k in sorted(self.arrays):
            digest.update(k.encode())
            digest.update(np.ascontiguousarray(self.arrays[k], dtype=np.float64).tobytes())
        return digest.hexdigest()


@dataclass
class SrpOutputs:
    """Per-window outputs: encoder-step logits, final-unroll decoder logits,
    and the accumulator hidden state."""

    topology_logits: np.ndarray  # (t_e, 2)
    encoder_region_logits_non: np.ndarray  # (t_e, 5)
    encoder_region_logits_int: np.ndarray  # (t_e, 13)
    decoder_region_logits_non: np.ndarray  # (t_d, 5)
    decoder_region_logits_int: np.ndarray  # (t_d, 13)
    hidden: np.ndarray  # (hidden_dim,)


@dataclass(frozen=True)
class TrainingTarget:
    """Per-window supervision: topology class, per-encoder-frame region
    indices (in the vocabulary selected by the topology class), and the
    decoder-step region indices with a validity mask for frames past the
    episode end."""

    topology: int
    regions: np.ndarray  # (t_e,)
    future_regions: np.ndarray  # (t_d,)
    future_mask: np.ndarray  # (t_d,) bool

    def __post_init__(self) -> None:
        if self.topology not in (0, 1):
            raise ValueError("topology class must be 0 or 1")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits))


def _ce_and_grad(logits: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row softmax cross-entropy (natural log) and its logit gradient,
    each scaled by the per-row weight."""
    logp = _log_softmax(logits)
    rows = np.arange(len(logits))
    losses = -logp[rows, targets] * weights
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    grad *= weights[:, None]
    return losses, grad


class _Cache:
    __slots__ = ("xin", "u", "c", "h_prev", "h", "unroll", "gate")

    def __init__(self):
        self.unroll = []


def _forward_batch(
    params: SrpParams,
    cfg: SrpConfig,
    windows: np.ndarray,
    gates: Optional[np.ndarray],
    need_cache: bool = False,
):
    """Batched forward pass.

    windows: (B, t_e, feature_dim); gates: (B,) topology classes used for
    the feedback embedding, or None to gate by the running topology
    prediction. Returns (outputs dict of arrays, caches list per step).
    """
    p = params.arrays
    b, t_e, f = windows.shape
    if t_e != cfg.t_e or f != cfg.feature_dim:
        raise ValueError(f"window shape {(t_e, f)} does not match config {(cfg.t_e, cfg.feature_dim)}")
    h = np.zeros((b, cfg.hidden_dim))
    summary = np.zeros((b, cfg.logit_embed_dim))

    z_all = np.zeros((b, cfg.t_e, N_TOPOLOGY_CLASSES))
    ye0_all = np.zeros((b, cfg.t_e, cfg.n_regions_non))
    ye1_all = np.zeros((b, cfg.t_e, cfg.n_regions_intersection))
    yd0_last = np.zeros((b, cfg.t_d, cfg.n_regions_non))
    yd1_last = np.zeros((b, cfg.t_d, cfg.n_regions_intersection))
    caches: List[_Cache] = []

    for t in range(cfg.t_e):
        xin = np.concatenate([windows[:, t, :], summary], axis=1)
        u = _sigmoid(xin @ p["enc_wu"].T + h @ p["enc_uu"].T + p["enc_bu"])
        c = np.tanh(xin @ p["enc_wc"].T + h @ p["enc_uc"].T + p["enc_bc"])
        h_new = u * h + (1.0 - u) * c

        z = h_new @ p["top_w"].T + p["top_b"]
        ye0 = h_new @ p["reg0_w"].T + p["reg0_b"]
        ye1 = h_new @ p["reg1_w"].T + p["reg1_b"]
        z_all[:, t] = z
        ye0_all[:, t] = ye0
        ye1_all[:, t] = ye1

        gate = gates if gates is not None else np.argmax(z, axis=1)
        gate = np.asarray(gate, dtype=np.int64)
        gmask = (gate == 1).astype(np.float64)[:, None]

        cache = _Cache()
        if need_cache:
            cache.xin, cache.u, cache.c, cache.h_prev, cache.h, cache.gate = xin, u, c, h, h_new, gate

        d = h_new
        fused = np.zeros((b, cfg.logit_embed_dim))
        fused_sum = np.zeros((b, cfg.logit_embed_dim))
        for m in range(cfg.t_d):
            ud = _sigmoid(fused @ p["dec_wu"].T + d @ p["dec_uu"].T + p["dec_bu"])
            cd = np.tanh(fused @ p["dec_wc"].T + d @ p["dec_uc"].T + p["dec_bc"])
            d_new = ud * d + (1.0 - ud) * cd
            yd0 = d_new @ p["reg0_w"].T + p["reg0_b"]
            yd1 = d_new @ p["reg1_w"].T + p["reg1_b"]
            emb0 = yd0 @ p["emb0_w"].T + p["emb0_b"]
            emb1 = yd1 @ p["emb1_w"].T + p["emb1_b"]
            fused_new = gmask * emb1 + (1.0 - gmask) * emb0
            if need_cache:
                cache.unroll.append((fused, d, ud, cd, d_new, yd0, yd1))
            if t == cfg.t_e - 1:
                yd0_last[:, m] = yd0
                yd1_last[:, m] = yd1
            fused_sum += fused_new
            fused = fused_new
            d = d_new
        summary = fused_sum / cfg.t_d
        h = cache.h if need_cache else h_new
        if need_cache:
            caches.append(cache)

    outputs = {
        "z": z_all,
        "ye0": ye0_all,
        "ye1": ye1_all,
        "yd0": yd0_last,
        "yd1": yd1_last,
        "hidden": h,
    }
    return outputs, caches


def forward(
    params: SrpParams, cfg: SrpConfig, window: np.ndarray, topology_gate: Optional[int] = None
) -> SrpOutputs:
    """Deterministic forward pass for one window of t_e frame features."""
    params.validate_shapes(cfg)
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (cfg.t_e, cfg.feature_dim):
        raise ValueError(f"window shape {window.shape} != {(cfg.t_e, cfg.feature_dim)}")
    gates = None if topology_gate is None else np.array([topology_gate])
    out, _ = _forward_batch(params, cfg, window[None], gates)
    return SrpOutputs(
        topology_logits=out["z"][0],
        encoder_region_logits_non=out["ye0"][0],
        encoder_region_logits_int=out["ye1"][0],
        decoder_region_logits_non=out["yd0"][0],
        decoder_region_logits_int=out["yd1"][0],
        hidden=out["hidden"][0],
    )


def _loss_terms(
    cfg: SrpConfig,
    z: np.ndarray,
    ye0: np.ndarray,
    ye1: np.ndarray,
    yd0: np.ndarray,
    yd1: np.ndarray,
    o: np.ndarray,
    regions: np.ndarray,
    future: np.ndarray,
    future_mask: np.ndarray,
    with_grads: bool,
):
    """Eq-style loss for a batch: topology CE summed over encoder steps,
    plus for the selected classifier the encoder-region CE sum and the
    masked mean of decoder-step CEs."""
    b = len(o)
    rows = np.arange(b)
    topo_loss = np.zeros(b)
    dz = np.zeros_like(z)
    for t in range(cfg.t_e):
        losses, grad = _ce_and_grad(z[:, t], o, np.ones(b))
        topo_loss += losses
        dz[:, t] = grad

    enc_loss = np.zeros(b)
    dye0 = np.zeros_like(ye0)
    dye1 = np.zeros_like(ye1)
    sel0 = (o == 0).astype(np.float64)
    sel1 = (o == 1).astype(np.float64)
    for t in range(cfg.t_e):
        l0, g0 = _ce_and_grad(ye0[:, t], np.clip(regions[:, t], 0, cfg.n_regions_non - 1), sel0)
        l1, g1 = _ce_and_grad(ye1[:, t], np.clip(regions[:, t], 0, cfg.n_regions_intersection - 1), sel1)
        enc_loss += l0 + l1
        dye0[:, t] = g0
        dye1[:, t] = g1

    n_unmasked = future_mask.sum(axis=1).astype(np.float64)
    dec_weight = np.where(n_unmasked > 0, 1.0 / np.maximum(n_unmasked, 1.0), 0.0)
    dec_loss = np.zeros(b)
    dyd0 = np.zeros_like(yd0)
    dyd1 = np.zeros_like(yd1)
    for m in range(cfg.t_d):
        w = future_mask[:, m].astype(np.float64) * dec_weight
        l0, g0 = _ce_and_grad(yd0[:, m], np.clip(future[:, m], 0, cfg.n_regions_non - 1), w * sel0)
        l1, g1 = _ce_and_grad(yd1[:, m], np.clip(future[:, m], 0, cfg.n_regions_intersection - 1), w * sel1)
        dec_loss += l0 + l1
        dyd0[:, m] = g0
        dyd1[:, m] = g1

    total = topo_loss + enc_loss + dec_loss
    grads = (dz, dye0, dye1, dyd0, dyd1) if with_grads else None
    return total, (topo_loss, enc_loss, dec_loss), grads


def _validate_target(cfg: SrpConfig, target: TrainingTarget) -> None:
    n = cfg.n_regions_intersection if target.topology == 1 else cfg.n_regions_non
    regions = np.asarray(target.regions)
    future = np.asarray(target.future_regions)
    mask = np.asarray(target.future_mask, dtype=bool)
    if regions.shape != (cfg.t_e,) or future.shape != (cfg.t_d,) or mask.shape != (cfg.t_d,):
        raise ValueError("target shapes do not match config")
    if np.any(regions < 0) or np.any(regions >= n):
        raise ValueError("encoder region target out of range for the selected classifier")
    if np.any((future < 0) & mask) or np.any((future >= n) & mask):
        raise ValueError("future region target out of range for the selected classifier")


def srp_loss(outputs: SrpOutputs, target: TrainingTarget, cfg: SrpConfig) -> Tuple[float, Dict[str, float]]:
    """Loss for one window; breakdown: topology, encoder_region, decoder_region."""
    _validate_target(cfg, target)
    total, (topo, enc, dec), _ = _loss_terms(
        cfg,
        outputs.topology_logits[None],
        outputs.encoder_region_logits_non[None],
        outputs.encoder_region_logits_int[None],
        outputs.decoder_region_logits_non[None],
        outputs.decoder_region_logits_int[None],
        np.array([target.topology]),
        np.asarray(target.regions)[None],
        np.asarray(target.future_regions)[None],
        np.asarray(target.future_mask, dtype=bool)[None],
        with_grads=False,
    )
    return float(total[0]), {
        "topology": float(topo[0]),
        "encoder_region": float(enc[0]),
        "decoder_region": float(dec[0]),
    }


def _backward_batch(
    params: SrpParams,
    cfg: SrpConfig,
    windows: np.ndarray,
    o: np.ndarray,
    regions: np.ndarray,
    future: np.ndarray,
    future_mask: np.ndarray,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean loss over the batch and its gradient w.r.t. every parameter.

    The feedback gate is teacher-forced to the ground-truth topology, so the
    loss is a smooth function of the parameters (no argmax switching).
    """
    p = params.arrays
    b = len(windows)
    out, caches = _forward_batch(params, cfg, windows, o, need_cache=True)
    total, _, grads_logits = _loss_terms(
        cfg, out["z"], out["ye0"], out["ye1"], out["yd0"], out["yd1"],
        o, regions, future, future_mask, with_grads=True,
    )
    dz, dye0, dye1, dyd0, dyd1 = grads_logits
    scale = 1.0 / b
    g = {k: np.zeros_like(v) for k, v in p.items()}

    f_dim = cfg.feature_dim
    dh_next = np.zeros((b, cfg.hidden_dim))
    dsummary_next = np.zeros((b, cfg.logit_embed_dim))

    for t in reversed(range(cfg.t_e)):
        cache = caches[t]
        gmask = (cache.gate == 1).astype(np.float64)[:, None]
        dh = dh_next.copy()

        dh += dz[:, t] @ p["top_w"]
        g["top_w"] += dz[:, t].T @ cache.h
        g["top_b"] += dz[:, t].sum(axis=0)
        dh += dye0[:, t] @ p["reg0_w"] + dye1[:, t] @ p["reg1_w"]
        g["reg0_w"] += dye0[:, t].T @ cache.h
        g["reg0_b"] += dye0[:, t].sum(axis=0)
        g["reg1_w"] += dye1[:, t].T @ cache.h
        g["reg1_b"] += dye1[:, t].sum(axis=0)

        # backward through the decoder unroll launched at this step
        dsummary = dsummary_next  # grad w.r.t. this unroll's mean fused embedding
        dfused_in = np.zeros((b, cfg.logit_embed_dim))
        dd = np.zeros((b, cfg.hidden_dim))
        for m in reversed(range(cfg.t_d)):
            fused_prev, d_prev, ud, cd, d_new, yd0_m, yd1_m = cache.unroll[m]
            dfused_m = dfused_in + dsummary / cfg.t_d
            demb0 = dfused_m * (1.0 - gmask)
            demb1 = dfused_m * gmask
            dyd0_m = demb0 @ p["emb0_w"]
            dyd1_m = demb1 @ p["emb1_w"]
            g["emb0_w"] += demb0.T @ yd0_m
            g["emb0_b"] += demb0.sum(axis=0)
            g["emb1_w"] += demb1.T @ yd1_m
            g["emb1_b"] += demb1.sum(axis=0)
            if t == cfg.t_e - 1:
                dyd0_m = dyd0_m + dyd0[:, m]
                dyd1_m = dyd1_m + dyd1[:, m]
            dd += dyd0_m @ p["reg0_w"] + dyd1_m @ p["reg1_w"]
            g["reg0_w"] += dyd0_m.T @ d_new
            g["reg0_b"] += dyd0_m.sum(axis=0)
            g["reg1_w"] += dyd1_m.T @ d_new
            g["reg1_b"] += dyd1_m.sum(axis=0)

            dud_pre = dd * (d_prev - cd) * ud * (1.0 - ud)
            dcd_pre = dd * (1.0 - ud) * (1.0 - cd * cd)
            g["dec_wu"] += dud_pre.T @ fused_prev
            g["dec_uu"] += dud_pre.T @ d_prev
            g["dec_bu"] += dud_pre.sum(axis=0)
            g["dec_wc"] += dcd_pre.T @ fused_prev
            g["dec_uc"] += dcd_pre.T @ d_prev
            g["dec_bc"] += dcd_pre.sum(axis=0)
            dfused_in = dud_pre @ p["dec_wu"] + dcd_pre @ p["dec_wc"]
            dd = dd * ud + dud_pre @ p["dec_uu"] + dcd_pre @ p["dec_uc"]
        dh += dd  # unroll starts from d_0 = h_t

        du_pre = dh * (cache.h_prev - cache.c) * cache.u * (1.0 - cache.u)
        dc_pre = dh * (1.0 - cache.u) * (1.0 - cache.c * cache.c)
        g["enc_wu"] += du_pre.T @ cache.xin
        g["enc_uu"] += du_pre.T @ cache.h_prev
        g["enc_bu"] += du_pre.sum(axis=0)
        g["enc_wc"] += dc_pre.T @ cache.xin
        g["enc_uc"] += dc_pre.T @ cache.h_prev
        g["enc_bc"] += dc_pre.sum(axis=0)
        dxin = du_pre @ p["enc_wu"] + dc_pre @ p["enc_wc"]
        dh_next = dh * cache.u + du_pre @ p["enc_uu"] + dc_pre @ p["enc_uc"]
        dsummary_next = dxin[:, f_dim:]

    for k in g:
        g[k] *= scale
    return float(total.mean()), g


def backward(
    params: SrpParams, window: np.ndarray, target: TrainingTarget, cfg: SrpConfig
) -> Dict[str, np.ndarray]:
    """Analytic gradient of srp_loss w.r.t. every parameter, one window."""
    params.validate_shapes(cfg)
    _validate_target(cfg, target)
    window = np.asarray(window, dtype=np.float64)
    _, grads = _backward_batch(
        params,
        cfg,
        window[None],
        np.array([target.topology]),
        np.asarray(target.regions)[None],
        np.asarray(target.future_regions)[None],
        np.asarray(target.future_mask, dtype=bool)[None],
    )
    return grads


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4  # paper-faithful defaults
    weight_decay: float = 5e-4
    epochs: int = 60
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0


@dataclass(frozen=True)
class SrpSample:
    window: np.ndarray  # (t_e, feature_dim)
    target: TrainingTarget


@dataclass
class TrainResult:
    params: SrpParams
    epoch_losses: List[float]


def _stack_samples(samples: Sequence[SrpSample]):
    windows = np.stack([s.window for s in samples]).astype(np.float64)
    o = np.array([s.target.topology for s in samples])
    regions = np.stack([np.asarray(s.target.regions) for s in samples])
    future = np.stack([np.asarray(s.target.future_regions) for s in samples])
    mask = np.stack([np.asarray(s.target.future_mask, dtype=bool) for s in samples])
    return windows, o, regions, future, mask


def train(
    samples: Sequence[SrpSample],
    cfg: SrpConfig,
    hyper: TrainConfig = TrainConfig(),
    init: Optional[SrpParams] = None,
) -> TrainResult:
    """Adam with decoupled weight decay; bit-reproducible under a fixed seed."""
    if not samples:
        raise ValueError("train needs a non-empty dataset")
    params = init.copy() if init is not None else SrpParams.init(cfg, hyper.seed)
    params.validate_shapes(cfg)
    for s in samples:
        _validate_target(cfg, s.target)
    windows, o, regions, future, mask = _stack_samples(samples)

    m_state = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    v_state = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    step = 0
    rng = np.random.default_rng([hyper.seed, 13])
    epoch_losses: List[float] = []
    n = len(samples)
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            loss, grads = _backward_batch(
                params, cfg, windows[idx], o[idx], regions[idx], future[idx], mask[idx]
            )
            epoch_loss += loss * len(idx)
            step += 1
            bc1 = 1.0 - hyper.adam_beta1**step
            bc2 = 1.0 - hyper.adam_beta2**step
            for k, grad in grads.items():
                m_state[k] = hyper.adam_beta1 * m_state[k] + (1.0 - hyper.adam_beta1) * grad
                v_state[k] = hyper.adam_beta2 * v_state[k] + (1.0 - hyper.adam_beta2) * grad * grad
                update = (m_state[k] / bc1) / (np.sqrt(v_state[k] / bc2) + hyper.adam_eps)
                params.arrays[k] -= hyper.lr * update + hyper.lr * hyper.weight_decay * params.arrays[k]
        epoch_losses.append(epoch_loss / n)
    return TrainResult(params, epoch_losses)


@dataclass
class Prediction:
    topology_class: int
    current_region: int  # index in the selected classifier's vocabulary
    future_regions: np.ndarray  # (t_d,) indices in the selected vocabulary
    hidden: np.ndarray


def predict(params: SrpParams, cfg: SrpConfig, window: np.ndarray) -> Prediction:
    """Conditional inference: the predicted topology selects which region
    classifier's outputs are reported. Argmax ties resolve to the lowest index."""
    outputs = forward(params, cfg, window, topology_gate=None)
    topo = int(np.argmax(outputs.topology_logits[-1]))
    if topo == 1:
        current = int(np.argmax(outputs.encoder_region_logits_int[-1]))
        future = np.argmax(outputs.decoder_region_logits_int, axis=1)
    else:
        current = int(np.argmax(outputs.encoder_region_logits_non[-1]))
        future = np.argmax(outputs.decoder_region_logits_non, axis=1)
    return Prediction(topo, current, future, outputs.hidden)


def hidden_states(params: SrpParams, cfg: SrpConfig, windows: np.ndarray) -> np.ndarray:
    """Batched accumulator hidden states (inference gating), (B, hidden_dim)."""
    out, _ = _forward_batch(params, cfg, np.asarray(windows, dtype=np.float64), None)
    return out["hidden"]


def infer_batch(params: SrpParams, cfg: SrpConfig, windows: np.ndarray) -> Dict[str, np.ndarray]:
    """Batched inference-mode outputs: z (B,t_e,2), ye0/ye1 (encoder region
    logits), yd0/yd1 (final-unroll decoder logits), hidden (B,H)."""
    params.validate_shapes(cfg)
    out, _ = _forward_batch(params, cfg, np.asarray(windows, dtype=np.float64), None)
    return out


def save_checkpoint(
    path: str,
    params: SrpParams,
    cfg: SrpConfig,
    seed: int,
    epoch: int,
    config_hash: str = "",
    extra: Optional[dict] = None,
) -> None:
    """Versioned binary checkpoint: magic, JSON header, raw float64 arrays."""
    names = sorted(params.arrays)
    header = {
        "format_version": 1,
        "config": {
            "t_e": cfg.t_e, "t_d": cfg.t_d, "feature_dim": cfg.feature_dim,
            "hidden_dim": cfg.hidden_dim, "logit_embed_dim": cfg.logit_embed_dim,
        },
        "seed": seed,
        "epoch": epoch,
        "config_hash": config_hash,
        "arrays": [{"name": k, "shape": list(params.arrays[k].shape)} for k in names],
    }
    if extra:
        header["extra"] = extra
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for k in names:
            fh.write(np.ascontiguousarray(params.arrays[k], dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Tuple[SrpParams, SrpConfig, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a recognized checkpoint file (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != 1:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
        cfg = SrpConfig(**header["config"])
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            arrays[spec["name"]] = data.copy()
    params = SrpParams(arrays)
    params.validate_shapes(cfg)
    return params, cfg, header
