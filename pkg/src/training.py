"""
Two-stage training
Action-space pretraining (triplet + zero-mean), then joint action-interaction optimization
"""
import copy
import csv
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from .augmentation import Augmenter
from .checkpoint import Checkpoint
from .config import config
from .encoders import CattleActModel, channel_statistics, describe, encode_action
from .errors import InsufficientClassDiversity, NonFiniteLoss, SchemaViolation, StageOrderError
from .evaluation import confusion_and_metrics, evaluate_interactions, knn_predict
from .losses import (
    AlignmentBatch,
    alignment_loss,
    joint_loss_weights,
    ldam_loss,
    ldam_margins,
    total_joint_loss,
    triplet_loss,
    zero_mean_reg,
)
from .manifest import load_samples, split_batch
from .schemas import (
    ACTION_CLASSES,
    INTERACTION_CLASSES,
    ActionSample,
    DatasetManifest,
    InteractionSample,
    JointTrainConfig,
    PretrainConfig,
)
from .validators import check_split_sources

logger = logging.getLogger(__name__)

PRETRAIN_LOG = "pretrain_log.csv"
JOINT_LOG = "joint_log.csv"
PRETRAIN_COLUMNS = ["step", "epoch", "loss_total", "loss_triplet", "loss_zero_mean", "mean_norm"]
JOINT_COLUMNS = ["step", "epoch", "loss_total", "loss_aln", "loss_cls", "lambda2", "loss_act", "n_anchors"]


class PretrainResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    checkpoint: Checkpoint
    history: List[dict] = Field(default_factory=list, description="One row per optimization step")


class JointTrainResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    final: Checkpoint
    best: Checkpoint
    history: List[dict] = Field(default_factory=list, description="One row per optimization step")
    val_macro_f1: List[float] = Field(default_factory=list, description="Before training, then after each epoch")


def _seed_everything(seed: int) -> np.random.Generator:
    torch.manual_seed(seed)
    torch.set_num_threads(config.num_threads)
    return np.random.default_rng(seed)


def _check_finite(loss: torch.Tensor, step: int, what: str) -> None:
    if not bool(torch.isfinite(loss)):
        raise NonFiniteLoss(f"{what} loss became {float(loss)}", step)


def _write_log(path: Path, columns: Sequence[str], rows: List[Dict[str, float]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in row.items()})


def _check_splits(manifest: DatasetManifest, kind: str) -> None:
    result = check_split_sources(manifest, kind)
    if not result.valid:
        raise SchemaViolation(result.message)


# ============================================================================
# Triplet mining
# ============================================================================

def triplet_indices(labels: Sequence[str], n: int, rng: np.random.Generator) -> List[Tuple[int, int, int]]:
    """
    Uniform random (anchor, positive, negative) index triples

    Anchors come from classes with at least two samples; the positive is
    another sample of the anchor's class, the negative any sample of another class.
    """
    labels = np.asarray(list(labels), dtype=object)
    by_class: Dict[str, np.ndarray] = {c: np.flatnonzero(labels == c) for c in dict.fromkeys(labels)}
    if len(by_class) < 2:
        raise InsufficientClassDiversity(f"triplets need at least 2 action classes, found {sorted(by_class)}")

    eligible = [idx for idx in by_class.values() if len(idx) >= 2]
    if not eligible:
        raise InsufficientClassDiversity("triplets need a class with at least 2 samples")
    anchors = np.sort(np.concatenate(eligible))

    triples = []
    for _ in range(n):
        a = int(anchors[rng.integers(len(anchors))])
        same = by_class[labels[a]]
        others = same[same != a]
        p = int(others[rng.integers(len(others))])
        different = np.flatnonzero(labels != labels[a])
        neg = int(different[rng.integers(len(different))])
        triples.append((a, p, neg))
    return triples


def sample_triplets(
    manifest: DatasetManifest,
    batch_size: int,
    seed: int,
    split: str = "train",
) -> List[Tuple[ActionSample, ActionSample, ActionSample]]:
    """
    Draw batch_size triplets of action samples

    Args:
        manifest: Dataset with action records
        batch_size: Number of triplets
        seed: Generator seed
        split: Split the samples come from

    Returns:
        List of (anchor, positive, negative)
    """
    samples = load_samples(manifest, "action", split)
    rng = np.random.default_rng(seed)
    triples = triplet_indices([s.label for s in samples], batch_size, rng)
    return [(samples[a], samples[p], samples[n]) for a, p, n in triples]


# ============================================================================
# Stage 1: action-space pretraining
# ============================================================================

def _knn_accuracy(model: CattleActModel, train: List[ActionSample], held_out: List[ActionSample], k: int) -> float:
    if not held_out or len(train) < k:
        return float("nan")
    train_values = encode_action(model, [s.image for s in train])
    held_values = encode_action(model, [s.image for s in held_out])
    preds = knn_predict(train_values, [s.label for s in train], held_values, k)
    return float(np.mean([p == s.label for p, s in zip(preds, held_out)]))


def pretrain_action_encoder(
    manifest: DatasetManifest,
    cfg: PretrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> PretrainResult:
    """
    Train f_act with the triplet loss plus the zero-mean regularizer

    Args:
        manifest: Dataset with action records of at least two classes
        cfg: Pretraining hyperparameters
        out_dir: Where the per-step CSV log goes (none written when omitted)

    Returns:
        PretrainResult with the checkpoint and the per-step history
    """
    rng = _seed_everything(cfg.seed)
    _check_splits(manifest, "action")

    train = load_samples(manifest, "action", "train")
    labels = [s.label for s in train]
    triplet_indices(labels, 0, rng)  # diversity check before any work

    model = CattleActModel(cfg.encoder)
    mean, std = channel_statistics([s.image for s in train])
    model.set_normalization(mean, std)
    logger.info(f"Pretraining on {len(train)} action crops: {describe(model)}")

    augment = Augmenter(
        "action",
        cfg.cutout_mode,
        cfg.cutout,
        fill=mean,
        flip_probability=config.flip_probability,
        cutout_probability=config.cutout_probability,
    )
    optimizer = torch.optim.Adam(model.action_encoder.parameters(), lr=cfg.learning_rate)
    steps_per_epoch = cfg.steps_per_epoch or max(1, math.ceil(len(train) / cfg.batch_size))

    history = []
    epoch_losses = []
    step = 0
    model.train()
    for epoch in range(cfg.epochs):
        losses = []
        for _ in range(steps_per_epoch):
            triples = triplet_indices(labels, cfg.batch_size, rng)
            images = [augment(train[i], rng).image for column in zip(*triples) for i in column]
            z = model.encode_action(model.preprocess(images))
            z_a, z_p, z_n = z.chunk(3)

            l_triplet = triplet_loss(z_a, z_p, z_n, cfg.alpha)
            l_zero_mean = zero_mean_reg(z)
            loss = l_triplet + cfg.zero_mean_weight * l_zero_mean
            _check_finite(loss, step, "pretraining")

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            history.append({
                "step": step,
                "epoch": epoch,
                "loss_total": float(loss),
                "loss_triplet": float(l_triplet),
                "loss_zero_mean": float(l_zero_mean),
                "mean_norm": float(z.detach().mean(dim=0).norm()),
            })
            losses.append(float(l_triplet))
            step += 1

        epoch_losses.append(float(np.mean(losses)))
        logger.info(f"Pretrain epoch {epoch + 1}/{cfg.epochs}: triplet {epoch_losses[-1]:.4f}")

    last_epoch = [row["mean_norm"] for row in history if row["epoch"] == cfg.epochs - 1]
    metrics = {
        "first_epoch_triplet": epoch_losses[0],
        "final_epoch_triplet": epoch_losses[-1],
        "initial_mean_norm": history[0]["mean_norm"],
        "final_mean_norm": float(np.mean(last_epoch)),
    }
    val_accuracy = _knn_accuracy(model, train, load_samples(manifest, "action", "val"), config.knn_k)
    if not math.isnan(val_accuracy):
        metrics["val_knn_accuracy"] = val_accuracy
        logger.info(f"Validation {config.knn_k}-NN accuracy: {val_accuracy:.3f}")

    if out_dir is not None:
        _write_log(Path(out_dir) / PRETRAIN_LOG, PRETRAIN_COLUMNS, history)

    model.eval()
    echo = cfg.model_dump(mode="json")
    checkpoint = Checkpoint(model=model, stage="pretrain", step=step, metrics=metrics, config=echo)
    return PretrainResult(checkpoint=checkpoint, history=history)


# ============================================================================
# Stage 2: joint optimization
# ============================================================================

def build_alignment_batch(
    samples: Sequence[InteractionSample],
    z_int: torch.Tensor,
    z_a: torch.Tensor,
    z_b: torch.Tensor,
) -> List[AlignmentBatch]:
    """
    One AlignmentBatch per labeled interaction in the batch

    Positives are the anchor's two member action latents; negatives are the
    interaction latents of the batch's no_interaction samples. A batch without
    anchors or without negatives yields no alignment term.

    Args:
        samples: Interaction samples of the step
        z_int, z_a, z_b: (N, D) encoder outputs in sample order

    Returns:
        List of AlignmentBatch (possibly empty)
    """
    anchors = [i for i, s in enumerate(samples) if s.label is not None and s.label != "no_interaction"]
    negatives = [i for i, s in enumerate(samples) if s.label == "no_interaction"]
    if not anchors or not negatives:
        logger.debug(f"Alignment term skipped: {len(anchors)} anchors, {len(negatives)} negatives in batch")
        return []

    negative_ids = [samples[j].sample_id for j in negatives]
    return [
        AlignmentBatch(
            z_int=z_int[i],
            z_act_pos=[z_a[i], z_b[i]],
            z_int_negs=z_int[negatives],
            anchor_id=samples[i].sample_id,
            negative_ids=negative_ids,
        )
        for i in anchors
    ]


def _training_counts(samples: Sequence[InteractionSample]) -> Dict[str, int]:
    counts = {name: 0 for name in INTERACTION_CLASSES}
    for s in samples:
        counts[s.label] += 1
    empty = [name for name, n in counts.items() if n == 0]
    if empty:
        logger.warning(f"No training samples for {empty}; their LDAM margins use a count of 1")
        counts.update({name: 1 for name in empty})
    return counts


def _validation_macro_f1(model: CattleActModel, samples: Sequence[InteractionSample]) -> float:
    if not samples:
        return float("nan")
    truths, preds, _ = evaluate_interactions(model, samples)
    _, report = confusion_and_metrics(preds, truths, INTERACTION_CLASSES)
    return report.macro_f1


def _member_action_loss(model: CattleActModel, crops: Sequence[ActionSample], z: torch.Tensor) -> torch.Tensor:
    labeled = [i for i, c in enumerate(crops) if c.label is not None]
    if not labeled:
        return torch.zeros((), dtype=z.dtype)
    targets = torch.tensor([ACTION_CLASSES.index(crops[i].label) for i in labeled], dtype=torch.long)
    return F.cross_entropy(model.classify_action(z[labeled]), targets)


def _initial_model(
    action_checkpoint: Optional[Checkpoint],
    cfg: JointTrainConfig,
    train: Sequence[InteractionSample],
) -> CattleActModel:
    if cfg.from_scratch:
        if action_checkpoint is not None:
            logger.info("from_scratch set; ignoring the supplied action checkpoint")
        model = CattleActModel(cfg.encoder)
        model.set_normalization(*channel_statistics([s.union_image for s in train]))
        return model

    if action_checkpoint is None:
        raise StageOrderError(
            "joint training needs a pretrained action checkpoint; "
            "pretrain first or pass --from-scratch to skip action pretraining"
        )
    return action_checkpoint.copy_model()


def train_joint(
    manifest: DatasetManifest,
    action_checkpoint: Optional[Checkpoint],
    cfg: JointTrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> JointTrainResult:
    """
    Optimize alignment, LDAM interaction classification and the action head end-to-end

    Args:
        manifest: Dataset with interaction records (train, and optionally val)
        action_checkpoint: Output of pretrain_action_encoder (ignored with from_scratch)
        cfg: Joint training hyperparameters and ablation switches
        out_dir: Where the per-step CSV log goes (none written when omitted)

    Returns:
        JointTrainResult with the final and the best-validation checkpoints
    """
    rng = _seed_everything(cfg.seed)
    _check_splits(manifest, "interaction")

    train = load_samples(manifest, "interaction", "train")
    if not train:
        raise InsufficientClassDiversity("joint training needs interaction samples in the train split")
    val = load_samples(manifest, "interaction", "val")

    model = _initial_model(action_checkpoint, cfg, train)
    if cfg.freeze_action_encoder:
        for p in model.action_encoder.parameters():
            p.requires_grad_(False)
    logger.info(f"Joint training on {len(train)} interactions ({len(val)} val): {describe(model)}")

    margins = ldam_margins(_training_counts(train), cfg.weights.ldam_margin_scale)
    logger.info(f"LDAM margins: {dict(zip(INTERACTION_CLASSES, np.round(margins, 4)))}")

    augment = Augmenter(
        "interaction",
        cfg.cutout_mode,
        cfg.cutout,
        fill=model.pixel_mean.cpu().numpy().tolist(),
        flip_probability=config.flip_probability,
        cutout_probability=config.cutout_probability,
    )
    optimizer = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=cfg.learning_rate)
    batches_per_epoch = math.ceil(len(train) / cfg.batch_size)
    total_steps = cfg.weights.lambda2_schedule.total_steps or cfg.epochs * batches_per_epoch
    # lambda2 reaches its end value on the last step (index total_steps - 1)
    horizon = max(total_steps - 1, 1)
    targets_of = {name: i for i, name in enumerate(INTERACTION_CLASSES)}

    val_scores = [_validation_macro_f1(model, val)]
    best_score = val_scores[0]
    best_state = copy.deepcopy(model.state_dict())
    best_step = 0

    history = []
    step = 0
    model.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        for start in range(0, len(train), cfg.batch_size):
            batch = [augment(train[i], rng) for i in order[start:start + cfg.batch_size]]
            crops_a, crops_b = split_batch(batch)
            logits, _, z_int, z_a, z_b = model.forward_interaction(
                model.preprocess([s.union_image for s in batch]),
                model.preprocess([c.image for c in crops_a]),
                model.preprocess([c.image for c in crops_b]),
            )

            y = torch.tensor([targets_of[s.label] for s in batch], dtype=torch.long)
            l_cls = ldam_loss(logits, y, margins)
            anchors = build_alignment_batch(batch, z_int, z_a, z_b) if cfg.use_alignment else []
            l_aln = alignment_loss(anchors, cfg.weights.tau, like=logits)
            l_act = _member_action_loss(model, crops_a + crops_b, torch.cat([z_a, z_b]))

            loss = total_joint_loss(l_aln, l_cls, step, cfg.weights, horizon) + cfg.action_loss_weight * l_act
            _check_finite(loss, step, "joint")

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            _, _, lambda2 = joint_loss_weights(step, cfg.weights, horizon)
            history.append({
                "step": step,
                "epoch": epoch,
                "loss_total": float(loss),
                "loss_aln": float(l_aln),
                "loss_cls": float(l_cls),
                "lambda2": float(lambda2),
                "loss_act": float(l_act),
                "n_anchors": len(anchors),
            })
            step += 1

        score = _validation_macro_f1(model, val)
        model.train()
        val_scores.append(score)
        epoch_rows = [row for row in history if row["epoch"] == epoch]
        logger.info(
            f"Joint epoch {epoch + 1}/{cfg.epochs}: loss {np.mean([r['loss_total'] for r in epoch_rows]):.4f}, "
            f"val macro-F1 {score:.3f}"
        )
        if not math.isnan(score) and (math.isnan(best_score) or score > best_score):
            best_score, best_state, best_step = score, copy.deepcopy(model.state_dict()), step

    if out_dir is not None:
        _write_log(Path(out_dir) / JOINT_LOG, JOINT_COLUMNS, history)

    model.eval()
    echo = cfg.model_dump(mode="json")
    final_metrics = {"loss_total": history[-1]["loss_total"]}
    if not math.isnan(val_scores[-1]):
        final_metrics["val_macro_f1"] = val_scores[-1]
    final = Checkpoint(model=model, stage="joint", step=step, metrics=final_metrics, config=echo)

    if math.isnan(best_score):
        best = final
    else:
        best_model = copy.deepcopy(model)
        best_model.load_state_dict(best_state)
        best_model.eval()
        best = Checkpoint(model=best_model, stage="joint", step=best_step,
                          metrics={"val_macro_f1": best_score}, config=echo)
        logger.info(f"Best validation macro-F1 {best_score:.3f} at step {best_step}")

    return JointTrainResult(final=final, best=best, history=history, val_macro_f1=val_scores)
