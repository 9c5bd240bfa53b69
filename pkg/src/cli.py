"""
CattleAct command-line interface

Subcommands:
1. synth-generate: Synthetic pasture dataset plus GPS / tracklet files
2. pretrain: Action-space pretraining (triplet + zero-mean)
3. train-joint: Joint action-interaction training
4. evaluate: Interaction metrics, per-class table and action recognition
5. reid-match: Tracklet <-> GPS identity assignment
6. occlusion-map: Occlusion sensitivity heatmaps
7. augment-preview: Cutout masks and protected discs drawn on samples
8. embed-export: Embedding dump (CAEM), PCA coordinates and k-NN check

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Errors are printed to stdout as an ErrorResponse JSON object.
"""
import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel

from . import __version__
from .association import (
    fit_homography,
    identity_recovery,
    match_gps_to_tracklets,
    read_correspondences_csv,
    read_gps_csv,
    read_homography_json,
    read_tracklets_jsonl,
    write_correspondences_csv,
    write_gps_csv,
    write_tracklets_jsonl,
)
from .augmentation import cutout_with_masks
from .checkpoint import Checkpoint
from .encoders import channel_statistics
from .config import config, load_json_model, resolve_seed
from .errors import CattleActError, MissingFile, StageOrderError, UsageError
from .evaluation import (
    evaluate_checkpoint,
    export_embeddings,
    knn_classify_embeddings,
    mean_cosine_similarities,
    occlusion_hits_region,
    occlusion_sensitivity_map,
    pca_project,
    write_predictions_csv,
)
from .image_processor import draw_rectangles, heatmap_to_rgb, overlay, save_png, side_by_side
from .manifest import MANIFEST_NAME, load_manifest, load_sample, load_samples, write_dataset
from .schemas import (
    INTERACTION_CLASSES,
    ActionSample,
    CutoutConfig,
    ErrorResponse,
    JointTrainConfig,
    PretrainConfig,
    ProtectedRegionSpec,
    RunConfig,
    RunRecord,
    SyntheticSceneSpec,
)
from .synthetic import check_cooccurrence, generate_synthetic_dataset, generate_synthetic_gps_scene
from .table_converter import confusion_table, per_class_table
from .training import pretrain_action_encoder, train_joint

logger = logging.getLogger(__name__)

RUN_RECORD = "run.json"
PACKAGES = ("numpy", "torch", "scipy", "scikit-learn", "pydantic", "pydantic-settings", "Pillow")


class RunContext:
    """Per-invocation bookkeeping written to run.json"""

    def __init__(self, command: str, out_dir: Path, args: argparse.Namespace):
        self.command = command
        self.out_dir = out_dir
        self.args = args
        self.seed: int = resolve_seed(0, args.seed)
        self.config: Dict = {}
        self.inputs: List[Path] = []
        self.started_at = datetime.now(timezone.utc).isoformat()

    def use_input(self, path) -> Path:
        path = Path(path)
        if path.is_dir() and (path / MANIFEST_NAME).exists():
            path = path / MANIFEST_NAME
        self.inputs.append(path)
        return path

    def record(self, status: str) -> RunRecord:
        return RunRecord(
            run=RunConfig(
                command=self.command,
                config_path=getattr(self.args, "config", None),
                out_dir=str(self.out_dir),
                seed=self.seed,
                verbosity=self.args.verbose,
            ),
            config=self.config,
            versions=_versions(),
            input_checksums={str(p): _sha256(p) for p in self.inputs if p.is_file()},
            started_at=self.started_at,
            finished_at=datetime.now(timezone.utc).isoformat(),
            status=status,
        )


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _versions() -> Dict[str, str]:
    versions = {"cattleact": __version__}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def _setup_logging(out_dir: Path, verbosity: int) -> None:
    level = logging.DEBUG if verbosity else getattr(logging, config.log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(str(out_dir / config.log_file_name), mode='w'),
            logging.StreamHandler(sys.stderr)
        ],
        force=True,
    )


def _load_config(ctx: RunContext, model_cls, what: str):
    """Command config from --config (defaults otherwise) with the resolved seed applied"""
    if ctx.args.config:
        cfg = load_json_model(ctx.use_input(ctx.args.config), model_cls, what)
    else:
        cfg = model_cls()
    ctx.seed = resolve_seed(cfg.seed, ctx.args.seed)
    return cfg.model_copy(update={"seed": ctx.seed})


def _dump_json(path: Path, payload) -> Path:
    text = payload.model_dump_json(indent=2) if isinstance(payload, BaseModel) else json.dumps(payload, indent=2)
    path.write_text(text + "\n", encoding="utf-8")
    return path


# ============================================================================
# Command handlers
# ============================================================================

def cmd_synth_generate(ctx: RunContext) -> str:
    spec = _load_config(ctx, SyntheticSceneSpec, "Scene spec")
    ctx.config = spec.model_dump(mode="json")
    out = ctx.out_dir

    # Nothing is written until both the dataset and the GPS scene exist
    manifest = generate_synthetic_dataset(spec)
    scene = generate_synthetic_gps_scene(spec, ctx.args.gps_duration, ctx.args.gps_rate)
    cooccurrence = check_cooccurrence(manifest)
    if not cooccurrence.valid:
        logger.warning(f"Co-occurrence check failed: {cooccurrence.message}")

    write_dataset(manifest, out)
    write_gps_csv(scene.gps_tracks, out / "gps.csv")
    write_tracklets_jsonl(scene.tracklets, out / "tracklets.jsonl")
    write_correspondences_csv(scene.correspondences, out / "correspondences.csv")
    _dump_json(out / "homography.json", scene.homography)
    _dump_json(out / "reid_truth.json", dict(sorted(scene.truth.items())))

    return json.dumps({
        "manifest": str(out / MANIFEST_NAME),
        "records": len(manifest.records),
        "action_counts": manifest.counts("action"),
        "interaction_counts": manifest.counts("interaction"),
        "gps_tracks": len(scene.gps_tracks),
        "seed": ctx.seed,
    }, indent=2)


def cmd_pretrain(ctx: RunContext) -> str:
    cfg = _load_config(ctx, PretrainConfig, "Pretrain config")
    if ctx.args.standard_cutout:
        cfg = cfg.model_copy(update={"cutout_mode": "standard"})
    ctx.config = cfg.model_dump(mode="json")

    manifest = load_manifest(ctx.use_input(ctx.args.manifest))
    result = pretrain_action_encoder(manifest, cfg, ctx.out_dir)
    path = result.checkpoint.save(ctx.out_dir / "action.ckpt")
    return json.dumps({"checkpoint": str(path), "metrics": result.checkpoint.metrics, "seed": ctx.seed}, indent=2)


def cmd_train_joint(ctx: RunContext) -> str:
    cfg = _load_config(ctx, JointTrainConfig, "Joint training config")
    updates = {}
    if ctx.args.from_scratch:
        updates["from_scratch"] = True
    if ctx.args.standard_cutout:
        updates["cutout_mode"] = "standard"
    if ctx.args.no_alignment:
        updates["use_alignment"] = False
    cfg = cfg.model_copy(update=updates)
    ctx.config = cfg.model_dump(mode="json")

    if ctx.args.action_checkpoint is None and not cfg.from_scratch:
        raise StageOrderError(
            "train-joint needs --action-checkpoint from the pretrain stage; "
            "pass --from-scratch (or --no-pretrain) to train without action pretraining"
        )

    action = None
    if ctx.args.action_checkpoint is not None and not cfg.from_scratch:
        action = Checkpoint.load(ctx.use_input(ctx.args.action_checkpoint))

    manifest = load_manifest(ctx.use_input(ctx.args.manifest))
    result = train_joint(manifest, action, cfg, ctx.out_dir)
    final_path = result.final.save(ctx.out_dir / "final.ckpt")
    best_path = result.best.save(ctx.out_dir / "best.ckpt")
    return json.dumps({
        "final_checkpoint": str(final_path),
        "best_checkpoint": str(best_path),
        "val_macro_f1": [None if np.isnan(v) else v for v in result.val_macro_f1],
        "seed": ctx.seed,
    }, indent=2)


def cmd_evaluate(ctx: RunContext) -> str:
    manifest = load_manifest(ctx.use_input(ctx.args.manifest))
    checkpoint = Checkpoint.load(ctx.use_input(ctx.args.checkpoint))
    ctx.seed = resolve_seed(int(checkpoint.config.get("seed", 0)), ctx.args.seed)
    ctx.config = {"split": ctx.args.split, "knn_k": ctx.args.knn_k or config.knn_k, "checkpoint": checkpoint.config}

    report, raw = evaluate_checkpoint(manifest, checkpoint, ctx.args.split, ctx.args.knn_k)
    report.seed = ctx.seed
    _dump_json(ctx.out_dir / "metrics.json", report)
    if raw:
        write_predictions_csv(ctx.out_dir / "predictions.csv", raw["sample_ids"], raw["truths"], raw["preds"],
                              raw["scores"], INTERACTION_CLASSES)

    sections = []
    if report.interaction is not None:
        m = report.interaction
        sections.append(
            f"Interaction ({ctx.args.split}, n={m.n_samples}): accuracy {m.accuracy:.3f}, "
            f"macro-F1 {m.macro_f1:.3f}, weighted F1 {m.weighted_f1:.3f}"
        )
        sections.append(per_class_table(report.interaction_per_class.rows, report.interaction_per_class.average_accuracy,
                                        report.interaction_per_class.average_f1, title="Per-class (one-vs-rest)"))
        sections.append(confusion_table(report.interaction_confusion.class_order, report.interaction_confusion.counts))
    if report.action_head is not None:
        sections.append(f"Action head: accuracy {report.action_head.accuracy:.3f}, "
                        f"macro-F1 {report.action_head.macro_f1:.3f}")
    if report.action_knn is not None:
        sections.append(f"Action k-NN: accuracy {report.action_knn.accuracy:.3f}, "
                        f"macro-F1 {report.action_knn.macro_f1:.3f}")
    return "\n\n".join(sections) if sections else f"No samples in split '{ctx.args.split}'"


def cmd_reid_match(ctx: RunContext) -> str:
    tolerance = ctx.args.time_tolerance if ctx.args.time_tolerance is not None else config.time_tolerance_s
    ctx.config = {"time_tolerance_s": tolerance}
    tracklets = read_tracklets_jsonl(ctx.use_input(ctx.args.tracklets))
    gps_tracks = read_gps_csv(ctx.use_input(ctx.args.gps))

    if ctx.args.homography:
        homography = read_homography_json(ctx.use_input(ctx.args.homography))
    elif ctx.args.correspondences:
        homography = fit_homography(read_correspondences_csv(ctx.use_input(ctx.args.correspondences)))
        _dump_json(ctx.out_dir / "homography.json", homography)
    else:
        raise UsageError("reid-match needs --homography or --correspondences")

    result = match_gps_to_tracklets(tracklets, gps_tracks, homography, tolerance)
    _dump_json(ctx.out_dir / "assignment.json", result)

    summary = {"assignment": str(ctx.out_dir / "assignment.json"), "matched": len(result.matching),
               "total_cost": result.total_cost}
    if ctx.args.truth:
        truth = json.loads(ctx.use_input(ctx.args.truth).read_text(encoding="utf-8"))
        summary["identity_recovery"] = identity_recovery(result, truth)
    return json.dumps(summary, indent=2)


def _occlusion_png(sample, occlusion) -> np.ndarray:
    image = sample.image if isinstance(sample, ActionSample) else sample.union_image
    height, width = image.shape[:2]
    heat = heatmap_to_rgb(np.asarray(occlusion.grid), size=(width, height))
    annotated = overlay(image, heat)
    if not isinstance(sample, ActionSample) and sample.focus_box is not None:
        annotated = draw_rectangles(annotated, [sample.focus_box.pixel_bounds()])
    return side_by_side(image, annotated)


def _file_stem(sample_id: str) -> str:
    return sample_id.replace("/", "_")


def cmd_occlusion_map(ctx: RunContext) -> str:
    manifest = load_manifest(ctx.use_input(ctx.args.manifest))
    checkpoint = Checkpoint.load(ctx.use_input(ctx.args.checkpoint))
    patch = ctx.args.patch_size or config.occlusion_patch_size
    stride = ctx.args.stride or config.occlusion_stride
    ctx.config = {"patch_size": patch, "stride": stride, "target_class": ctx.args.target_class,
                  "split": ctx.args.split}

    if ctx.args.sample_id:
        records = [r for r in manifest.records if r.sample_id == ctx.args.sample_id]
        if not records:
            raise MissingFile(f"Sample '{ctx.args.sample_id}' is not in the manifest")
    else:
        target = ctx.args.target_class or "mount"
        records = [r for r in manifest.select("interaction", ctx.args.split)
                   if r.label == target and r.focus_box is not None][:ctx.args.limit]

    hits = []
    maps_dir = ctx.out_dir / "occlusion"
    maps_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        sample = load_sample(manifest, record)
        occlusion = occlusion_sensitivity_map(sample, checkpoint.model, ctx.args.target_class, patch, stride)
        stem = _file_stem(record.sample_id)
        _dump_json(maps_dir / f"{stem}.json", occlusion)
        save_png(maps_dir / f"{stem}.png", _occlusion_png(sample, occlusion))
        if not isinstance(sample, ActionSample) and sample.focus_box is not None:
            hits.append({"sample_id": record.sample_id, "hit": occlusion_hits_region(occlusion, sample.focus_box)})

    summary = {"maps": len(records), "directory": str(maps_dir)}
    if hits:
        summary["focus_hit_rate"] = sum(h["hit"] for h in hits) / len(hits)
        _dump_json(ctx.out_dir / "occlusion_audit.json", {"hit_rate": summary["focus_hit_rate"], "cases": hits})
    return json.dumps(summary, indent=2)


def _preview_input(sample):
    """(image, skeletons) a cutout preview draws on"""
    if isinstance(sample, ActionSample):
        return sample.image, [sample.skeleton]
    return sample.union_image, [sample.member_a.skeleton, sample.member_b.skeleton]


def cmd_augment_preview(ctx: RunContext) -> str:
    cutout = _load_config(ctx, CutoutConfig, "Cutout config")
    manifest = load_manifest(ctx.use_input(ctx.args.manifest))
    protected = ProtectedRegionSpec.default(ctx.args.kind)
    rng = np.random.default_rng(ctx.seed)

    train = load_samples(manifest, ctx.args.kind, "train")
    fill = cutout.fill or channel_statistics([_preview_input(s)[0] for s in train])[0]
    ctx.config = {"cutout": cutout.model_dump(mode="json"), "mode": ctx.args.mode, "kind": ctx.args.kind,
                  "fill": list(fill)}

    preview_dir = ctx.out_dir / "preview"
    masks = 0
    for sample in train[:ctx.args.count]:
        image, skeletons = _preview_input(sample)
        if ctx.args.mode == "standard":
            skeletons = []
        augmented, rectangles, discs = cutout_with_masks(image, skeletons, protected, cutout, rng, fill)
        stem = _file_stem(sample.sample_id)
        save_png(preview_dir / f"{stem}.png", side_by_side(image, draw_rectangles(augmented, rectangles, discs)))
        _dump_json(preview_dir / f"{stem}.json", {
            "sample_id": sample.sample_id,
            "fill": list(fill),
            "rectangles": [list(r) for r in rectangles],
            "protected_discs": [list(d) for d in discs],
        })
        masks += len(rectangles)

    return json.dumps({"previews": min(len(train), ctx.args.count), "masks_applied": masks,
                       "directory": str(preview_dir)}, indent=2)


def cmd_embed_export(ctx: RunContext) -> str:
    manifest = load_manifest(ctx.use_input(ctx.args.manifest))
    checkpoint = Checkpoint.load(ctx.use_input(ctx.args.checkpoint), expected_dim=ctx.args.dim)
    ctx.config = {"split": ctx.args.split, "dim": checkpoint.embedding_dim}

    dump = export_embeddings(manifest, checkpoint, ctx.args.split, ctx.args.dim)
    dump_path = dump.save(ctx.out_dir / "embeddings.caem")
    summary = {"embeddings": str(dump_path), "rows": len(dump), "dim": dump.dim}

    if len(dump) >= 2:
        projection = pca_project(dump, k=2)
        with open(ctx.out_dir / "pca.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["sample_id", "kind", "label", "pc1", "pc2"])
            for sample_id, kind, label, (x, y) in zip(dump.sample_ids, dump.kinds, dump.labels, projection.coordinates):
                writer.writerow([sample_id, kind, label or "", f"{x:.8f}", f"{y:.8f}"])
        summary["pca_rank_deficient"] = projection.rank_deficient

    actions = dump.select("action")
    if len(set(actions.labels)) > 1:
        intra, inter = mean_cosine_similarities(actions.values, actions.labels)
        summary["action_cosine"] = {"intra_class": intra, "inter_class": inter}

    if ctx.args.split is None:
        ids = {r.sample_id: r.split for r in manifest.records}
        keep_train = [i for i, sid in enumerate(actions.sample_ids) if ids[sid] == "train"]
        keep_test = [i for i, sid in enumerate(actions.sample_ids) if ids[sid] == "test"]
        k = config.knn_k
        if len(keep_train) >= k and keep_test:
            preds = knn_classify_embeddings(_subset(actions, keep_train), _subset(actions, keep_test), k)
            truths = [actions.labels[i] for i in keep_test]
            summary["action_knn_accuracy"] = float(np.mean([p == t for p, t in zip(preds, truths)]))
    return json.dumps(summary, indent=2)


def _subset(dump, rows):
    return dump.model_copy(update={
        "sample_ids": [dump.sample_ids[i] for i in rows],
        "kinds": [dump.kinds[i] for i in rows],
        "labels": [dump.labels[i] for i in rows],
        "values": dump.values[rows],
    })


COMMANDS = {
    "synth-generate": cmd_synth_generate,
    "pretrain": cmd_pretrain,
    "train-joint": cmd_train_joint,
    "evaluate": cmd_evaluate,
    "reid-match": cmd_reid_match,
    "occlusion-map": cmd_occlusion_map,
    "augment-preview": cmd_augment_preview,
    "embed-export": cmd_embed_export,
}


# ============================================================================
# Argument parsing
# ============================================================================

FORMATS = """file formats:
  manifest.jsonl      header {"format": "cattleact-manifest", "version": 1, "metadata": {...}}, then one record
                      per line: {"kind": "action"|"interaction", "sample_id", "image", "box": [x0,y0,x1,y1],
                      "skeleton": [[name, x, y, conf], ...], "label", "split", ...}
  *.json configs      SyntheticSceneSpec / PretrainConfig / JointTrainConfig / CutoutConfig fields
  *.ckpt              b"CACK", u32 index length, JSON index, little-endian float32 tensors
  embeddings.caem     b"CAEM", u16 version, u32 rows, u32 D, rows of (u16 id length, id, kind byte,
                      label byte, D float32)
  gps.csv             cattle_id,timestamp_s,x_m,y_m
  tracklets.jsonl     {"track_id": ..., "frames": [[t, x0, y0, x1, y1], ...]}
  correspondences.csv x_m,y_m,u_px,v_px
  predictions.csv     sample_id,truth,pred,score_no_interaction,score_interest,score_conflict,score_mount

environment: CATTLEACT_SEED overrides config seeds (--seed overrides both)
exit codes: 0 success, 1 runtime failure, 2 usage/configuration error"""


def _common(parser: argparse.ArgumentParser, config_help: Optional[str]) -> None:
    parser.add_argument("--out-dir", required=True, type=Path, help="Output directory (created if absent)")
    if config_help:
        parser.add_argument("--config", default=None, help=config_help)
    parser.add_argument("--seed", type=int, default=None, help="Seed overriding the config and CATTLEACT_SEED")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="Debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cattleact",
        description="Cattle action and interaction recognition toolkit",
        epilog=FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"cattleact {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, config_help: Optional[str] = None) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=FORMATS,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(p, config_help)
        return p

    p = add("synth-generate", "Generate a synthetic dataset, GPS tracks and tracklets", "SyntheticSceneSpec JSON")
    p.add_argument("--spec", dest="config", help="Alias of --config")
    p.add_argument("--gps-duration", type=float, default=60.0, help="Simulated seconds (default: 60)")
    p.add_argument("--gps-rate", type=float, default=1.0, help="GPS fixes per second (default: 1)")

    p = add("pretrain", "Pretrain the action encoder with the triplet loss", "PretrainConfig JSON")
    p.add_argument("--manifest", required=True, help="Manifest file or dataset directory")
    p.add_argument("--standard-cutout", action="store_true", help="Plain cutout instead of skeleton-aware cutout")

    p = add("train-joint", "Jointly train action and interaction representations", "JointTrainConfig JSON")
    p.add_argument("--manifest", required=True, help="Manifest file or dataset directory")
    p.add_argument("--action-checkpoint", default=None, help="Checkpoint from the pretrain command")
    p.add_argument("--from-scratch", "--no-pretrain", dest="from_scratch", action="store_true",
                   help="Train without action pretraining")
    p.add_argument("--standard-cutout", action="store_true", help="Plain cutout instead of skeleton-aware cutout")
    p.add_argument("--no-alignment", action="store_true", help="Drop the action-interaction alignment loss")

    p = add("evaluate", "Evaluate a checkpoint on one split")
    p.add_argument("--manifest", required=True, help="Manifest file or dataset directory")
    p.add_argument("--checkpoint", required=True, help="Checkpoint to evaluate")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--knn-k", type=int, default=None, help=f"Neighbours for action k-NN (default: {config.knn_k})")

    p = add("reid-match", "Assign GPS identities to tracklets")
    p.add_argument("--tracklets", required=True, help="tracklets.jsonl")
    p.add_argument("--gps", required=True, help="gps.csv")
    p.add_argument("--homography", default=None, help="Homography JSON ({\"H\": 3x3})")
    p.add_argument("--correspondences", default=None, help="correspondences.csv to fit the homography from")
    p.add_argument("--time-tolerance", type=float, default=None,
                   help=f"Seconds between a frame and its nearest fix (default: {config.time_tolerance_s})")
    p.add_argument("--truth", default=None, help="track_id -> cattle_id JSON for scoring the assignment")

    p = add("occlusion-map", "Occlusion sensitivity of a checkpoint")
    p.add_argument("--manifest", required=True, help="Manifest file or dataset directory")
    p.add_argument("--checkpoint", required=True, help="Checkpoint whose sensitivity is mapped")
    p.add_argument("--sample-id", default=None, help="One sample; otherwise audit labeled interactions of --split")
    p.add_argument("--target-class", default=None, help="Class scored (default: the sample label / mount)")
    p.add_argument("--patch-size", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--limit", type=int, default=50, help="Samples in the audit (default: 50)")

    p = add("augment-preview", "Draw cutout masks and protected discs on training samples", "CutoutConfig JSON")
    p.add_argument("--manifest", required=True, help="Manifest file or dataset directory")
    p.add_argument("--kind", default="action", choices=["action", "interaction"])
    p.add_argument("--mode", default="skeleton", choices=["skeleton", "standard"])
    p.add_argument("--count", type=int, default=8, help="Samples previewed (default: 8)")

    p = add("embed-export", "Export embeddings with PCA coordinates")
    p.add_argument("--manifest", required=True, help="Manifest file or dataset directory")
    p.add_argument("--checkpoint", required=True, help="Checkpoint providing the encoders")
    p.add_argument("--split", default=None, choices=["train", "val", "test"])
    p.add_argument("--dim", type=int, default=None, help="Required embedding dimension")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one command and write run.json

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _setup_logging(out_dir, args.verbose)

    ctx = RunContext(args.command, out_dir, args)
    status, exit_code = "ok", 0
    try:
        output = COMMANDS[args.command](ctx)
        print(output)
    except CattleActError as e:
        logger.error(f"{args.command} failed: {e.message}")
        print(ErrorResponse(error=e.code, message=e.message, suggested_files=e.suggested_files)
              .model_dump_json(indent=2, exclude_none=True))
        status, exit_code = "failed", e.exit_code
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        print(ErrorResponse(error="INTERNAL_ERROR", message=str(e)).model_dump_json(indent=2, exclude_none=True))
        status, exit_code = "failed", 1

    _dump_json(out_dir / RUN_RECORD, ctx.record(status))
    return exit_code


def run():
    """Synchronous entry point"""
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(130)


if __name__ == "__main__":
    run()
