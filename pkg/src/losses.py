"""
Objective functions
Triplet, zero-mean regularization, InfoNCE alignment, LDAM and the weighted joint loss
"""
import logging
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from .errors import DimensionMismatch, EmptyBatch, IndexOutOfRange, ZeroCount, ZeroNormEmbedding
from .schemas import INTERACTION_CLASSES, Lambda2Schedule, LossWeights

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12


class AlignmentBatch(BaseModel):
    """One interaction anchor with its decomposed-action positives and no_interaction negatives"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    z_int: torch.Tensor = Field(description="Anchor interaction latent, shape (D,)")
    z_act_pos: List[torch.Tensor] = Field(description="One or two member action latents")
    z_int_negs: torch.Tensor = Field(description="Negative interaction latents, shape (M, D)")
    anchor_id: str = ""
    negative_ids: List[str] = Field(default_factory=list)

    @property
    def n_negatives(self) -> int:
        return int(self.z_int_negs.shape[0])


def _check_same_shape(*tensors: torch.Tensor) -> None:
    shapes = {tuple(t.shape) for t in tensors}
    if len(shapes) != 1:
        raise DimensionMismatch(f"embedding shapes differ: {sorted(shapes)}")


def triplet_loss(z_a: torch.Tensor, z_p: torch.Tensor, z_n: torch.Tensor, alpha: float) -> torch.Tensor:
    """
    Hinge on Euclidean distances: max(0, d(a, p) - d(a, n) + alpha)

    Args:
        z_a, z_p, z_n: Embeddings of shape (D,) or (N, D)
        alpha: Margin

    Returns:
        Scalar loss (mean over the batch)
    """
    _check_same_shape(z_a, z_p, z_n)
    d_ap = torch.linalg.vector_norm(z_a - z_p, dim=-1)
    d_an = torch.linalg.vector_norm(z_a - z_n, dim=-1)
    return F.relu(d_ap - d_an + alpha).mean()


def zero_mean_reg(batch: Union[torch.Tensor, Sequence[torch.Tensor]]) -> torch.Tensor:
    """Squared norm of the batch-mean embedding"""
    if not isinstance(batch, torch.Tensor):
        if len(batch) == 0:
            raise EmptyBatch("zero_mean_reg needs at least one embedding")
        batch = torch.stack(list(batch))
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise EmptyBatch(f"zero_mean_reg needs a non-empty (N, D) batch, got shape {tuple(batch.shape)}")
    return batch.mean(dim=0).pow(2).sum()


def _unit(z: torch.Tensor, what: str) -> torch.Tensor:
    norms = torch.linalg.vector_norm(z, dim=-1, keepdim=True)
    if bool((norms <= NORM_EPS).any()):
        raise ZeroNormEmbedding(f"{what} has zero norm; cosine similarity is undefined")
    return z / norms


def infonce_alignment_loss(batch: AlignmentBatch, tau: float) -> torch.Tensor:
    """
    InfoNCE of one anchor against its positives, averaged per positive

    -log( exp(s+/tau) / (exp(s+/tau) + sum_j exp(s-_j/tau)) ) with cosine similarity s

    Args:
        batch: Anchor, positives and M >= 1 negatives
        tau: Temperature

    Returns:
        Scalar loss
    """
    if batch.n_negatives < 1:
        raise EmptyBatch("alignment batch needs at least one negative")
    if not batch.z_act_pos:
        raise EmptyBatch("alignment batch needs at least one positive")

    positives = torch.stack(batch.z_act_pos)
    dim = batch.z_int.shape[-1]
    if positives.shape[-1] != dim or batch.z_int_negs.shape[-1] != dim:
        raise DimensionMismatch(
            f"alignment dims differ: anchor {dim}, positives {positives.shape[-1]}, "
            f"negatives {batch.z_int_negs.shape[-1]}"
        )

    anchor = _unit(batch.z_int, "anchor interaction embedding")
    pos_sim = _unit(positives, "positive action embedding") @ anchor / tau
    neg_sim = _unit(batch.z_int_negs, "negative interaction embedding") @ anchor / tau

    losses = []
    for s in pos_sim:
        logits = torch.cat([s.reshape(1), neg_sim])
        losses.append(torch.logsumexp(logits, dim=0) - s)
    return torch.stack(losses).mean()


def alignment_loss(batches: Sequence[AlignmentBatch], tau: float, like: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Mean InfoNCE over anchors; zero when the step has no anchors"""
    if not batches:
        return torch.zeros((), dtype=like.dtype if like is not None else torch.float32)
    return torch.stack([infonce_alignment_loss(b, tau) for b in batches]).mean()


def ldam_margins(
    class_counts: Union[Mapping[str, int], Sequence[int]],
    scale: float,
    class_order: Sequence[str] = INTERACTION_CLASSES,
) -> np.ndarray:
    """
    Class-dependent margins Delta_j = scale / n_j^(1/4)

    Args:
        class_counts: Training counts per class (mapping, or sequence in class_order)
        scale: Margin constant
        class_order: Order of the returned margins when counts is a mapping

    Returns:
        float64 array of margins
    """
    if isinstance(class_counts, Mapping):
        counts = [class_counts.get(name, 0) for name in class_order]
        names = list(class_order)
    else:
        counts = list(class_counts)
        names = [str(i) for i in range(len(counts))]

    empty = [name for name, n in zip(names, counts) if n < 1]
    if empty:
        raise ZeroCount(f"LDAM margins need at least one training sample per class; none for {empty}")

    return scale / np.power(np.asarray(counts, dtype=np.float64), 0.25)


def ldam_loss(
    p: torch.Tensor,
    y: Union[int, torch.Tensor],
    margins: Union[np.ndarray, torch.Tensor, Sequence[float]],
) -> torch.Tensor:
    """
    LDAM: cross-entropy after subtracting the true class margin from its logit

    Args:
        p: Logits (C,) or (N, C)
        y: True class index, or (N,) indices
        margins: Per-class Delta, length C

    Returns:
        Scalar loss (mean over the batch)
    """
    logits = p.unsqueeze(0) if p.ndim == 1 else p
    n_classes = logits.shape[-1]

    if not isinstance(margins, torch.Tensor):
        margins = torch.as_tensor(np.asarray(margins, dtype=np.float64))
    margins = margins.to(dtype=logits.dtype, device=logits.device)
    if margins.shape != (n_classes,):
        raise DimensionMismatch(f"margins of shape {tuple(margins.shape)} for {n_classes} classes")

    target = torch.as_tensor(y, dtype=torch.long, device=logits.device).reshape(-1)
    if target.numel() != logits.shape[0]:
        raise DimensionMismatch(f"{target.numel()} targets for {logits.shape[0]} logit rows")
    if bool(((target < 0) | (target >= n_classes)).any()):
        raise IndexOutOfRange(f"class index out of range [0, {n_classes}): {target.tolist()}")

    onehot = F.one_hot(target, n_classes).to(logits.dtype)
    # cross_entropy stabilizes with the max-subtraction inside logsumexp
    return F.cross_entropy(logits - onehot * margins, target)


def lambda2_at(step: int, schedule: Lambda2Schedule, total_steps: Optional[int] = None) -> float:
    """Linearly interpolated schedule value, clamped to the horizon"""
    horizon = total_steps or schedule.total_steps
    if not horizon:
        return schedule.start
    fraction = min(max(step, 0), horizon) / horizon
    return schedule.start + (schedule.end - schedule.start) * fraction


def joint_loss_weights(step: int, weights: LossWeights, total_steps: Optional[int] = None) -> Tuple[float, float, float]:
    """
    Returns:
        (alignment weight, classification weight, lambda2) at this step
    """
    lambda2 = lambda2_at(step, weights.lambda2_schedule, total_steps)
    if weights.lambda2_schedule.decay_target == "classification":
        return weights.lambda1, lambda2, lambda2
    return lambda2, weights.lambda1, lambda2


def total_joint_loss(
    aln: torch.Tensor,
    cls: torch.Tensor,
    step: int,
    weights: LossWeights,
    total_steps: Optional[int] = None,
) -> torch.Tensor:
    """lambda1 * L_aln + lambda2(step) * L_cls (roles swap when the schedule targets alignment)"""
    w_aln, w_cls, _ = joint_loss_weights(step, weights, total_steps)
    return w_aln * aln + w_cls * cls
