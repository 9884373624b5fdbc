"""Command-line entry point tying the pipeline together.

Subcommands: gen, eval-labeler, train-srp, eval-srp, train-intent,
eval-intent, risk, export-bev. Every command is deterministic given
(config, seed), writes only inside its --out directory, and stamps outputs
with the config hash. Exit codes: 0 success, 1 validation error, 2 I/O
error. Concurrent runs against one output directory are unsupported (a
lock file guards against it).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bev import BevGrid, detect_intersection_core, to_csv_lines, to_pgm_bytes
from .config import ConfigError, MixEntry, RunConfig, load_config
from .dataset import (
    LoadedDataset,
    assign_splits,
    build_intent_samples,
    build_srp_samples,
    episode_records,
    load_dataset,
    make_header,
    write_dataset,
)
from .evaluation import evaluate_intent, evaluate_srp, intent_features, run_risk_evaluation
from .heads import HeadTrainConfig, IntentHead, train_intent, train_linear_softmax
from .labeling import CoherenceParams, label_episode, labeling_accuracy
from .model import (
    SrpConfig,
    SrpParams,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .simulate import DEFAULT_BEV_RESOLUTION, SimConfig, make_episode
from .topology import (
    RoadTopology,
    SemanticRegion,
    TopologyKind,
    TopologyParams,
    UnaffordableActionError,
    build_topology,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@contextmanager
def _output_lock(out_dir: str):
    lock_path = os.path.join(out_dir, ".lock")
    if os.path.exists(lock_path):
        raise CliError(f"output directory {out_dir} is locked by another run ({lock_path})", EXIT_IO)
    with open(lock_path, "w") as fh:
        fh.write(str(os.getpid()))
    try:
        yield
    finally:
        try:
            os.remove(lock_path)
        except OSError:
            pass


def _ensure_out(out_dir: str) -> None:
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out_dir}: {exc}", EXIT_IO)


def _load_run_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}", EXIT_IO)
    try:
        return load_config(path)
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_VALIDATION)


def _sim_config(cfg: RunConfig, seed: int) -> SimConfig:
    return SimConfig(
        speed_mps=cfg.speed_mps,
        frame_hz=cfg.frame_hz,
        heading_noise_std=cfg.heading_noise_std,
        position_noise_std=cfg.position_noise_std,
        pose_dropout_rate=cfg.pose_dropout_rate,
        point_density=cfg.point_density,
        label_flip_rate=cfg.label_flip_rate,
        votes_per_point=cfg.votes_per_point,
        seed=seed,
    )


def _topology_params(cfg: RunConfig) -> TopologyParams:
    return TopologyParams(
        lane_width=cfg.lane_width,
        lanes_per_direction=cfg.lanes_per_direction,
        crosswalk_width=cfg.crosswalk_width,
        approach_length=cfg.approach_length,
        seed=cfg.seed,
        midblock_crosswalks=cfg.midblock_crosswalks,
    )


def _coherence(cfg: RunConfig) -> CoherenceParams:
    return CoherenceParams(
        max_step_m=cfg.max_step_m,
        max_heading_step_rad=cfg.max_heading_step_rad,
        min_localized_fraction=cfg.min_localized_fraction,
    )


def _srp_config(cfg: RunConfig, feature_dim: int) -> SrpConfig:
    return SrpConfig(
        t_e=cfg.t_e,
        t_d=cfg.t_d,
        feature_dim=feature_dim,
        hidden_dim=cfg.hidden_dim,
        logit_embed_dim=cfg.logit_embed_dim,
    )


def _default_mix(cfg: RunConfig) -> List[MixEntry]:
    if cfg.mix:
        return cfg.mix
    from .topology import AffordedAction as A

    return [
        MixEntry(TopologyKind.FOUR_WAY, A.LEFT_TURN, 12),
        MixEntry(TopologyKind.FOUR_WAY, A.STRAIGHT, 12),
        MixEntry(TopologyKind.FOUR_WAY, A.RIGHT_TURN, 12),
        MixEntry(TopologyKind.THREE_WAY_LEFT_STRAIGHT, A.LEFT_TURN, 7),
        MixEntry(TopologyKind.THREE_WAY_LEFT_STRAIGHT, A.STRAIGHT, 7),
        MixEntry(TopologyKind.THREE_WAY_LEFT_RIGHT, A.LEFT_TURN, 7),
        MixEntry(TopologyKind.THREE_WAY_LEFT_RIGHT, A.RIGHT_TURN, 7),
        MixEntry(TopologyKind.STRAIGHT_MULTI_LANE, A.STRAIGHT, 16),
        MixEntry(TopologyKind.STRAIGHT_MULTI_LANE, A.LEFT_LANE_CHANGE, 16),
        MixEntry(TopologyKind.STRAIGHT_MULTI_LANE, A.RIGHT_LANE_CHANGE, 16),
    ]


def _emit(report: dict, as_json: bool, lines: Sequence[str]) -> None:
    if as_json:
        print(json.dumps(report, separators=(",", ":"), sort_keys=True))
    else:
        for line in lines:
            print(line)


def _write_json(path: str, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _export_bev(grid: BevGrid, out_dir: str, stem: str) -> None:
    with open(os.path.join(out_dir, f"{stem}.pgm"), "wb") as fh:
        fh.write(to_pgm_bytes(grid))
    with open(os.path.join(out_dir, f"{stem}.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(to_csv_lines(grid)) + "\n")


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = args.out or cfg.out_dir
    _ensure_out(out_dir)
    mix = _default_mix(cfg)
    topo_params = _topology_params(cfg)
    coherence = _coherence(cfg)
    config_hash = cfg.config_hash()

    with _output_lock(out_dir):
        topologies: Dict[TopologyKind, RoadTopology] = {}
        for entry in mix:
            topologies.setdefault(entry.kind, build_topology(entry.kind, topo_params))
            if entry.action not in topologies[entry.kind].region_partition:
                raise CliError(
                    f"unaffordable action: {entry.action.value} on {entry.kind.value} "
                    f"with lanes_per_direction={cfg.lanes_per_direction}",
                    EXIT_VALIDATION,
                )

        episodes = []
        episode_ids = []
        for entry_idx, entry in enumerate(mix):
            topo = topologies[entry.kind]
            for i in range(entry.count):
                ep_seed = 1000003 * cfg.seed + entry_idx * 10007 + i
                sim_cfg = _sim_config(cfg, ep_seed)
                ep = make_episode(topo, entry.action, sim_cfg, bev_resolution=cfg.bev_resolution)
                core = detect_intersection_core(ep.grid, cfg.min_component_cells) if entry.kind.is_intersection else None
                result = label_episode(
                    ep.poses,
                    ep.grid,
                    entry.kind.is_intersection,
                    entry.action,
                    core,
                    coherence,
                    topology=None if entry.kind.is_intersection else topo,
                    min_component_cells=cfg.min_component_cells,
                    inflate_m=cfg.overlap_inflate_m,
                )
                ep_id = f"{entry.kind.value}-{entry.action.value}-{i:04d}"
                episodes.append((ep_id, ep, result, ep_seed))
                episode_ids.append(ep_id)

        splits = assign_splits(episode_ids, (cfg.split_train, cfg.split_val, cfg.split_test), cfg.seed)
        records = []
        accepted = 0
        acc_values = []
        reject_reasons: Dict[str, int] = {}
        for ep_id, ep, result, ep_seed in episodes:
            records.extend(episode_records(ep, ep_id, splits[ep_id], result, ep_seed))
            if result.accepted:
                accepted += 1
                acc_values.append(labeling_accuracy(result, ep.gt_regions))
            elif result.reject_reason:
                reject_reasons[result.reject_reason.value] = reject_reasons.get(result.reject_reason.value, 0) + 1

        header = make_header(config_hash, cfg.frame_hz, cfg.speed_mps)
        dataset_path = os.path.join(out_dir, "dataset.jsonl")
        write_dataset(dataset_path, header, records)

        bev_dir = os.path.join(out_dir, "bev")
        _ensure_out(bev_dir)
        exported = set()
        for ep_id, ep, _, _ in episodes:
            kind = ep.topology.kind
            if kind not in exported:
                _export_bev(ep.grid, bev_dir, kind.value)
                exported.add(kind)

    report = {
        "dataset": dataset_path,
        "config_hash": config_hash,
        "episodes": len(episodes),
        "frames": len(records),
        "labeler_acceptance": accepted / len(episodes) if episodes else 0.0,
        "labeler_accuracy_mean": float(np.mean(acc_values)) if acc_values else None,
        "reject_reasons": reject_reasons,
        "splits": {s: sum(1 for v in splits.values() if v == s) for s in ("train", "val", "test")},
    }
    _emit(
        report,
        args.json,
        [
            f"wrote {len(records)} frames over {len(episodes)} episodes to {dataset_path}",
            f"labeler acceptance {report['labeler_acceptance']:.3f}, "
            f"mean accuracy {report['labeler_accuracy_mean']}",
            f"splits: {report['splits']}",
        ],
    )
    return EXIT_OK


def _load_dataset_checked(path: str) -> LoadedDataset:
    if not os.path.exists(path):
        raise CliError(f"dataset not found: {path}", EXIT_IO)
    try:
        return load_dataset(path)
    except ValueError as exc:
        raise CliError(f"bad dataset: {exc}", EXIT_VALIDATION)


def cmd_eval_labeler(args: argparse.Namespace) -> int:
    ds = _load_dataset_checked(args.dataset)
    by_episode = ds.episodes()
    total = 0
    correct = 0
    per_region: Dict[str, List[int]] = {}
    accepted_eps = 0
    reject_reasons: Dict[str, int] = {}
    for frames in by_episode.values():
        if not frames[0]["accepted"]:
            reason = frames[0]["reject_reason"] or "unknown"
            reject_reasons[reason] = reject_reasons.get(reason, 0) + 1
            continue
        accepted_eps += 1
        for f in frames:
            gt = f["gt_region"]
            if gt == SemanticRegion.OUTSIDE.name:
                continue
            total += 1
            hit = int(f["labeler_region"] == gt)
            correct += hit
            per_region.setdefault(gt, []).append(hit)
    report = {
        "accuracy": correct / total if total else None,
        "no_accepted_frames": total == 0,
        "per_region_accuracy": {k: float(np.mean(v)) for k, v in sorted(per_region.items())},
        "acceptance_rate": accepted_eps / len(by_episode) if by_episode else 0.0,
        "reject_reasons": reject_reasons,
        "config_hash": ds.config_hash(),
    }
    if args.out:
        _ensure_out(args.out)
        _write_json(os.path.join(args.out, "labeler_report.json"), report)
    _emit(
        report,
        args.json,
        [
            f"labeling accuracy: {report['accuracy']}",
            f"acceptance rate: {report['acceptance_rate']:.3f}",
            f"reject reasons: {reject_reasons}",
        ],
    )
    return EXIT_OK


def cmd_train_srp(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    ds = _load_dataset_checked(args.dataset)
    out_dir = args.out or cfg.out_dir
    _ensure_out(out_dir)
    srp_cfg = _srp_config(cfg, ds.header["feature_length"])
    samples = build_srp_samples(ds, srp_cfg, splits=("train",), stride=cfg.window_stride,
                                label_source=cfg.label_source, frame_step=cfg.frame_step)
    if not samples:
        raise CliError("no training windows in the dataset's train split", EXIT_VALIDATION)
    hyper = TrainConfig(lr=cfg.lr, weight_decay=cfg.weight_decay, epochs=cfg.epochs, batch_size=cfg.batch_size, seed=cfg.seed)
    with _output_lock(out_dir):
        result = train(samples, srp_cfg, hyper)
        ckpt_path = os.path.join(out_dir, "srp.ckpt")
        save_checkpoint(ckpt_path, result.params, srp_cfg, cfg.seed, hyper.epochs, ds.config_hash())
        _write_json(os.path.join(out_dir, "srp_train_report.json"), {
            "checkpoint": ckpt_path,
            "n_windows": len(samples),
            "epoch_losses": result.epoch_losses,
            "config_hash": ds.config_hash(),
        })
    report = {"checkpoint": ckpt_path, "n_windows": len(samples),
              "first_loss": result.epoch_losses[0], "final_loss": result.epoch_losses[-1]}
    _emit(report, args.json, [
        f"trained on {len(samples)} windows; loss {result.epoch_losses[0]:.3f} -> {result.epoch_losses[-1]:.3f}",
        f"checkpoint: {ckpt_path}",
    ])
    return EXIT_OK


def _load_checkpoint_checked(path: str, ds: Optional[LoadedDataset] = None):
    if not os.path.exists(path):
        raise CliError(f"checkpoint not found: {path}", EXIT_IO)
    try:
        params, srp_cfg, header = load_checkpoint(path)
    except ValueError as exc:
        raise CliError(f"bad checkpoint: {exc}", EXIT_VALIDATION)
    if ds is not None and header.get("config_hash") and ds.config_hash() and header["config_hash"] != ds.config_hash():
        raise CliError(
            "checkpoint/config hash mismatch: the checkpoint was trained on a dataset "
            f"with hash {header['config_hash'][:12]}.., this dataset has {ds.config_hash()[:12]}..",
            EXIT_VALIDATION,
        )
    return params, srp_cfg, header


def cmd_eval_srp(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    ds = _load_dataset_checked(args.dataset)
    params, srp_cfg, _ = _load_checkpoint_checked(args.checkpoint, ds)
    samples = build_srp_samples(ds, srp_cfg, splits=(args.split,), stride=cfg.window_stride, frame_step=cfg.frame_step)
    if not samples:
        raise CliError(f"no windows in split {args.split!r}", EXIT_VALIDATION)
    report = evaluate_srp(params, srp_cfg, samples)
    report["config_hash"] = ds.config_hash()
    report["split"] = args.split
    if args.out:
        _ensure_out(args.out)
        _write_json(os.path.join(args.out, "srp_eval_report.json"), report)
    lines = [f"topology accuracy: {report['topology_accuracy']:.4f}"]
    for name, grp in report["groups"].items():
        lines.append(
            f"{name}: current micro {grp['current']['micro_avg_precision']:.4f} "
            f"macro {grp['current']['macro_avg_precision']:.4f} mAP {grp['current']['map']:.4f}"
        )
        if "future" in grp:
            lines.append(
                f"{name}: future micro {grp['future']['micro_avg_precision']:.4f} "
                f"macro {grp['future']['macro_avg_precision']:.4f} mAP {grp['future']['map']:.4f}"
            )
    _emit(report, args.json, lines)
    return EXIT_OK


def cmd_train_intent(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    ds = _load_dataset_checked(args.dataset)
    params, srp_cfg, _ = _load_checkpoint_checked(args.checkpoint, ds)
    out_dir = args.out or cfg.out_dir
    _ensure_out(out_dir)
    samples = build_intent_samples(ds, srp_cfg, splits=("train",), per_episode=cfg.intent_per_episode,
                                   seed=cfg.seed, frame_step=cfg.frame_step)
    if not samples:
        raise CliError("no intent samples in the train split", EXIT_VALIDATION)
    hyper = HeadTrainConfig(lr=cfg.lr, weight_decay=cfg.weight_decay, epochs=cfg.intent_epochs, seed=cfg.seed)
    with _output_lock(out_dir):
        checksum_before = params.checksum()
        head = train_intent(IntentHead.zeros(srp_cfg.hidden_dim), samples, params, srp_cfg, hyper)
        hidden, raw, labels = intent_features(samples, params, srp_cfg)
        w_raw, b_raw, _ = train_linear_softmax(raw, labels, 5, hyper)
        head_path = os.path.join(out_dir, "intent_head.json")
        _write_json(head_path, {
            "w_int": head.w_int.tolist(),
            "b_int": head.b_int.tolist(),
            "raw_w": w_raw.tolist(),
            "raw_b": b_raw.tolist(),
            "srp_checksum": params.checksum(),
            "config_hash": ds.config_hash(),
        })
    report = {
        "intent_head": head_path,
        "n_samples": len(samples),
        "srp_unchanged": params.checksum() == checksum_before,
    }
    _emit(report, args.json, [
        f"trained intent head on {len(samples)} samples (backbone frozen: {report['srp_unchanged']})",
        f"head: {head_path}",
    ])
    return EXIT_OK


def _load_intent_head(path: str):
    if not os.path.exists(path):
        raise CliError(f"intent head not found: {path}", EXIT_IO)
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    head = IntentHead(np.array(blob["w_int"]), np.array(blob["b_int"]))
    raw = (np.array(blob["raw_w"]), np.array(blob["raw_b"]))
    return head, raw


def cmd_eval_intent(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    ds = _load_dataset_checked(args.dataset)
    params, srp_cfg, _ = _load_checkpoint_checked(args.checkpoint, ds)
    head, raw_head = _load_intent_head(args.intent_head)
    samples = build_intent_samples(ds, srp_cfg, splits=(args.split,), per_episode=cfg.intent_per_episode,
                                   seed=cfg.seed, frame_step=cfg.frame_step)
    if not samples:
        raise CliError(f"no intent samples in split {args.split!r}", EXIT_VALIDATION)
    report = evaluate_intent(head, samples, params, srp_cfg, raw_head=raw_head)
    report["config_hash"] = ds.config_hash()
    report["split"] = args.split
    if args.out:
        _ensure_out(args.out)
        _write_json(os.path.join(args.out, "intent_eval_report.json"), report)
    lines = [
        f"intent micro precision: {report['all']['micro_avg_precision']:.4f}, "
        f"macro {report['all']['macro_avg_precision']:.4f}",
        f"raw-feature baseline macro: {report['raw_feature_baseline']['macro_avg_precision']:.4f}",
    ]
    if "interactive" in report:
        lines.append(f"interactive micro: {report['interactive']['micro_avg_precision']:.4f}")
    _emit(report, args.json, lines)
    return EXIT_OK


def cmd_risk(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    params, srp_cfg, _ = _load_checkpoint_checked(args.checkpoint)
    out_dir = args.out or cfg.out_dir
    _ensure_out(out_dir)
    sim_cfg = _sim_config(cfg, cfg.seed)
    hyper = HeadTrainConfig(lr=cfg.risk_lr, weight_decay=cfg.risk_weight_decay, epochs=cfg.risk_epochs, seed=cfg.seed)
    with _output_lock(out_dir):
        report = run_risk_evaluation(
            params,
            srp_cfg,
            sim_cfg,
            cfg.seed,
            n_train_scenes=cfg.risk_train_scenes,
            n_eval_scenes=cfg.risk_eval_scenes,
            miss_fraction=cfg.risk_miss_fraction,
            intent_fraction=cfg.risk_intent_fraction,
            hyper=hyper,
            topology_params=_topology_params(cfg),
            frame_step=cfg.frame_step,
        )
        report["config_hash"] = cfg.config_hash()
        _write_json(os.path.join(out_dir, "risk_report.json"), report)
    _emit(report, args.json, [
        f"identification rate (backbone-fused): {report['identification_rate_fused']:.3f}",
        f"identification rate (plain): {report['identification_rate_plain']:.3f}",
        f"box metrics fused: {report['box_metrics_fused']}",
        f"report: {os.path.join(out_dir, 'risk_report.json')}",
    ])
    return EXIT_OK


def cmd_export_bev(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = args.out or cfg.out_dir
    _ensure_out(out_dir)
    mix = _default_mix(cfg)
    topo_params = _topology_params(cfg)
    with _output_lock(out_dir):
        exported = []
        for kind in dict.fromkeys(entry.kind for entry in mix):
            topo = build_topology(kind, topo_params)
            action = next(iter(topo.region_partition))
            ep = make_episode(topo, action, _sim_config(cfg, cfg.seed), bev_resolution=cfg.bev_resolution)
            _export_bev(ep.grid, out_dir, kind.value)
            exported.append(kind.value)
    report = {"exported": exported, "out": out_dir, "config_hash": cfg.config_hash()}
    _emit(report, args.json, [f"exported BEV maps for: {', '.join(exported)} -> {out_dir}"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roadregions", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, dataset=False, checkpoint=False, out=False) -> None:
        p.add_argument("--config", default=None, help="flat key/value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--json", action="store_true", help="machine-readable stdout")
        if dataset:
            p.add_argument("--dataset", required=True)
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
        if out:
            p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("gen", help="generate episodes, label them, write the dataset and BEV exports")
    common(p, out=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval-labeler", help="score automatic labels against ground truth")
    common(p, dataset=True, out=True)
    p.set_defaults(func=cmd_eval_labeler)

    p = sub.add_parser("train-srp", help="train the region-prediction model")
    common(p, dataset=True, out=True)
    p.set_defaults(func=cmd_train_srp)

    p = sub.add_parser("eval-srp", help="evaluate a region-prediction checkpoint")
    common(p, dataset=True, checkpoint=True, out=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_eval_srp)

    p = sub.add_parser("train-intent", help="train the intention head on a frozen backbone")
    common(p, dataset=True, checkpoint=True, out=True)
    p.set_defaults(func=cmd_train_intent)

    p = sub.add_parser("eval-intent", help="evaluate the intention head")
    common(p, dataset=True, checkpoint=True, out=True)
    p.add_argument("--intent-head", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_eval_intent)

    p = sub.add_parser("risk", help="run the intervention-based risk-object suite")
    common(p, checkpoint=True, out=True)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("export-bev", help="write PGM/CSV BEV maps for the configured topologies")
    common(p, out=True)
    p.set_defaults(func=cmd_export_bev)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except UnaffordableActionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
