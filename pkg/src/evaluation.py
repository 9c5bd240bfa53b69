"""
Evaluation
Confusion matrix and F1 family, per-class one-vs-rest table, occlusion sensitivity,
embedding export (CAEM container), PCA projection and k-NN classification
"""
import csv
import logging
import struct
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import cdist
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from .checkpoint import Checkpoint
from .config import config
from .encoders import (
    CattleActModel,
    action_probabilities,
    encode_action,
    encode_interaction,
    interaction_probabilities,
)
from .errors import (
    CheckpointMismatch,
    DimensionMismatch,
    IndexOutOfRange,
    InsufficientPoints,
    LengthMismatch,
    MissingFile,
    PatchLargerThanImage,
    SchemaViolation,
    UnknownLabel,
)
from .manifest import load_samples
from .schemas import (
    ACTION_CLASSES,
    INTERACTION_CLASSES,
    ActionSample,
    BoundingBox,
    ConfusionMatrix,
    DatasetManifest,
    EvaluationReport,
    InteractionSample,
    MetricsReport,
    OcclusionMap,
    PerClassReport,
    PerClassRow,
    class_order_for,
)

logger = logging.getLogger(__name__)


# ============================================================================
# Metrics
# ============================================================================

def _check_labels(preds: Sequence[str], truths: Sequence[str], class_order: Sequence[str]) -> None:
    if len(preds) != len(truths):
        raise LengthMismatch(f"{len(preds)} predictions for {len(truths)} ground-truth labels")
    known = set(class_order)
    for name, labels in (("prediction", preds), ("truth", truths)):
        unknown = sorted({label for label in labels if label not in known})
        if unknown:
            raise UnknownLabel(f"{name} labels {unknown} are not in class order {list(class_order)}")


def confusion_and_metrics(
    preds: Sequence[str],
    truths: Sequence[str],
    class_order: Sequence[str] = INTERACTION_CLASSES,
) -> Tuple[ConfusionMatrix, MetricsReport]:
    """
    Multiclass confusion matrix, accuracy, per-class F1, macro-F1 and weighted F1

    A class with P + R = 0 gets F1 = 0 and is listed in zero_division_classes.

    Args:
        preds: Predicted class names
        truths: True class names
        class_order: Row/column order of the confusion matrix

    Returns:
        (ConfusionMatrix, MetricsReport)
    """
    _check_labels(preds, truths, class_order)
    labels = list(class_order)
    n = len(truths)

    if n == 0:
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        precision = recall = f1 = np.zeros(len(labels))
        support = np.zeros(len(labels), dtype=np.int64)
    else:
        counts = confusion_matrix(list(truths), list(preds), labels=labels)
        precision, recall, f1, support = precision_recall_fscore_support(
            list(truths), list(preds), labels=labels, average=None, zero_division=0
        )

    tp = np.diag(counts)
    zero_division = [name for name, hits in zip(labels, tp) if hits == 0]
    if zero_division:
        logger.info(f"F1 = 0 by convention for classes without true positives: {zero_division}")

    accuracy = float(tp.sum() / n) if n else 0.0
    total_support = int(np.sum(support))
    weighted_f1 = float(np.sum(f1 * support) / total_support) if total_support else 0.0

    matrix = ConfusionMatrix(class_order=labels, counts=counts.astype(int).tolist())
    report = MetricsReport(
        class_order=labels,
        n_samples=n,
        accuracy=accuracy,
        macro_f1=float(np.mean(f1)) if len(labels) else 0.0,
        weighted_f1=weighted_f1,
        per_class_f1={name: float(v) for name, v in zip(labels, f1)},
        per_class_precision={name: float(v) for name, v in zip(labels, precision)},
        per_class_recall={name: float(v) for name, v in zip(labels, recall)},
        support={name: int(v) for name, v in zip(labels, support)},
        zero_division_classes=zero_division,
    )
    return matrix, report


def per_class_binary_report(
    preds: Sequence[str],
    truths: Sequence[str],
    class_order: Sequence[str] = INTERACTION_CLASSES,
) -> PerClassReport:
    """
    One-vs-rest accuracy and F1 per class, plus their averages

    Returns:
        PerClassReport in class_order
    """
    _check_labels(preds, truths, class_order)
    preds = np.asarray(list(preds), dtype=object)
    truths = np.asarray(list(truths), dtype=object)
    n = len(truths)

    rows = []
    for name in class_order:
        t = truths == name
        p = preds == name
        tp = int(np.sum(t & p))
        fp = int(np.sum(~t & p))
        fn = int(np.sum(t & ~p))
        accuracy = float(np.mean(t == p)) if n else 0.0
        denominator = 2 * tp + fp + fn
        rows.append(PerClassRow(class_name=name, accuracy=accuracy, f1=2 * tp / denominator if denominator else 0.0))

    return PerClassReport(
        rows=rows,
        average_accuracy=float(np.mean([r.accuracy for r in rows])) if rows else 0.0,
        average_f1=float(np.mean([r.f1 for r in rows])) if rows else 0.0,
    )


def write_predictions_csv(
    path: Union[str, Path],
    sample_ids: Sequence[str],
    truths: Sequence[str],
    preds: Sequence[str],
    scores: np.ndarray,
    class_order: Sequence[str],
) -> Path:
    """Raw predictions: sample_id,truth,pred,score_<class>... (one row per sample)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "truth", "pred"] + [f"score_{name}" for name in class_order])
        for sample_id, truth, pred, row in zip(sample_ids, truths, preds, scores):
            writer.writerow([sample_id, truth, pred] + [f"{float(v):.8f}" for v in row])
    return path


def read_predictions_csv(path: Union[str, Path]) -> Tuple[List[str], List[str], List[str]]:
    """(sample_ids, truths, preds) from a raw predictions file"""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    return [r["sample_id"] for r in rows], [r["truth"] for r in rows], [r["pred"] for r in rows]


# ============================================================================
# Occlusion sensitivity
# ============================================================================

ScoreFn = Callable[[List[np.ndarray]], np.ndarray]


def occlusion_grid(
    image: np.ndarray,
    score_fn: ScoreFn,
    patch_size: int,
    stride: int,
    fill: Sequence[float],
    target_class: str = "",
    batch_size: int = 32,
) -> OcclusionMap:
    """
    Slide a filled square patch over the image and record the target score drop

    Args:
        image: H x W x 3 array
        score_fn: Maps a list of images to their target-class scores
        patch_size: Patch side in pixels
        stride: Step between patch positions
        fill: Per-channel patch value
        target_class: Name recorded in the map
        batch_size: Occluded images scored per call

    Returns:
        OcclusionMap with grid[r][c] = baseline - occluded score
    """
    height, width = image.shape[:2]
    if patch_size > height or patch_size > width:
        raise PatchLargerThanImage(f"patch {patch_size} px does not fit a {width}x{height} image")
    if stride < 1:
        raise PatchLargerThanImage(f"stride must be positive, got {stride}")

    rows = (height - patch_size) // stride + 1
    cols = (width - patch_size) // stride + 1
    value = np.asarray(fill, dtype=image.dtype)
    baseline = float(score_fn([image])[0])

    positions = [(r, c) for r in range(rows) for c in range(cols)]
    drops = np.zeros((rows, cols), dtype=np.float64)
    for start in range(0, len(positions), batch_size):
        chunk = positions[start:start + batch_size]
        occluded = []
        for r, c in chunk:
            img = np.array(image, copy=True)
            y0, x0 = r * stride, c * stride
            img[y0:y0 + patch_size, x0:x0 + patch_size] = value
            occluded.append(img)
        scores = np.asarray(score_fn(occluded), dtype=np.float64)
        for (r, c), score in zip(chunk, scores):
            drops[r, c] = baseline - score

    return OcclusionMap(
        grid=drops.tolist(),
        patch_size=patch_size,
        stride=stride,
        baseline_score=baseline,
        target_class=target_class,
        fill=tuple(float(v) for v in value),
    )


def action_scorer(model: CattleActModel, target_index: int, template: ActionSample) -> ScoreFn:
    """Target-class probability of the action head for occluded copies of a crop"""
    def score(images: List[np.ndarray]) -> np.ndarray:
        samples = [template.model_copy(update={"image": img}) for img in images]
        return action_probabilities(model, samples)[:, target_index]
    return score


def interaction_scorer(model: CattleActModel, target_index: int, template: InteractionSample) -> ScoreFn:
    """Target-class probability for occluded union images, re-split at the member boxes"""
    def score(images: List[np.ndarray]) -> np.ndarray:
        samples = []
        for img in images:
            members = [m.model_copy(update={"image": img}) for m in (template.member_a, template.member_b)]
            samples.append(template.model_copy(update={"union_image": img, "member_a": members[0],
                                                       "member_b": members[1]}))
        return interaction_probabilities(model, samples)[:, target_index]
    return score


def occlusion_sensitivity_map(
    sample: Union[ActionSample, InteractionSample],
    model: CattleActModel,
    target_class: Optional[str] = None,
    patch_size: Optional[int] = None,
    stride: Optional[int] = None,
    fill: Optional[Sequence[float]] = None,
) -> OcclusionMap:
    """
    Occlusion sensitivity of the model's target-class score on one sample

    Args:
        sample: Action crop or interaction candidate
        model: Model (switched to inference mode)
        target_class: Class scored (defaults to the sample's label)
        patch_size: Patch side (config.occlusion_patch_size)
        stride: Patch step (config.occlusion_stride)
        fill: Patch value (defaults to the dataset mean stored in the model)

    Returns:
        OcclusionMap
    """
    model.eval()
    patch_size = patch_size or config.occlusion_patch_size
    stride = stride or config.occlusion_stride
    fill = fill if fill is not None else model.pixel_mean.cpu().numpy().tolist()

    if isinstance(sample, ActionSample):
        order, image, make = ACTION_CLASSES, sample.image, action_scorer
    else:
        order, image, make = INTERACTION_CLASSES, sample.union_image, interaction_scorer

    target_class = target_class or sample.label
    if target_class not in order:
        raise UnknownLabel(f"target class '{target_class}' is not one of {list(order)}")

    return occlusion_grid(image, make(model, order.index(target_class), sample), patch_size, stride, fill,
                          target_class=target_class)


def occlusion_hits_region(occlusion: OcclusionMap, region: BoundingBox) -> bool:
    """Whether the center of the max-drop cell lies inside region"""
    row, col = occlusion.argmax_cell()
    cx, cy = occlusion.cell_box(row, col).center
    return region.contains_point(cx, cy)


# ============================================================================
# Embedding dump
# ============================================================================

DUMP_MAGIC = b"CAEM"
DUMP_VERSION = 1
KIND_CODES = {"action": 0, "interaction": 1}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
UNLABELED = 255


class EmbeddingDump(BaseModel):
    """Rows of (sample_id, kind, label, D floats)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    dim: int
    sample_ids: List[str] = Field(default_factory=list)
    kinds: List[str] = Field(default_factory=list)
    labels: List[Optional[str]] = Field(default_factory=list)
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.sample_ids)

    def select(self, kind: str) -> "EmbeddingDump":
        keep = [i for i, k in enumerate(self.kinds) if k == kind]
        return EmbeddingDump(
            dim=self.dim,
            sample_ids=[self.sample_ids[i] for i in keep],
            kinds=[self.kinds[i] for i in keep],
            labels=[self.labels[i] for i in keep],
            values=self.values[keep].reshape(len(keep), self.dim),
        )

    def to_bytes(self) -> bytes:
        parts = [DUMP_MAGIC, struct.pack("<HII", DUMP_VERSION, len(self.sample_ids), self.dim)]
        values = np.asarray(self.values, dtype="<f4").reshape(len(self.sample_ids), self.dim)
        for sample_id, kind, label, row in zip(self.sample_ids, self.kinds, self.labels, values):
            encoded = sample_id.encode("utf-8")
            order = class_order_for(kind)
            label_code = order.index(label) if label in order else UNLABELED
            parts.append(struct.pack("<H", len(encoded)) + encoded)
            parts.append(struct.pack("<BB", KIND_CODES[kind], label_code))
            parts.append(row.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddingDump":
        if data[:4] != DUMP_MAGIC:
            raise SchemaViolation(f"not an embedding dump (magic {data[:4]!r})")
        version, n_rows, dim = struct.unpack_from("<HII", data, 4)
        if version != DUMP_VERSION:
            raise SchemaViolation(f"unsupported embedding dump version {version}")

        offset = 14
        ids, kinds, labels, rows = [], [], [], []
        for _ in range(n_rows):
            (id_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            ids.append(data[offset:offset + id_len].decode("utf-8"))
            offset += id_len
            kind_code, label_code = struct.unpack_from("<BB", data, offset)
            offset += 2
            kind = KIND_NAMES[kind_code]
            kinds.append(kind)
            labels.append(None if label_code == UNLABELED else class_order_for(kind)[label_code])
            rows.append(np.frombuffer(data, dtype="<f4", count=dim, offset=offset))
            offset += 4 * dim

        values = np.stack(rows).astype(np.float32) if rows else np.zeros((0, dim), dtype=np.float32)
        return cls(dim=dim, sample_ids=ids, kinds=kinds, labels=labels, values=values)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EmbeddingDump":
        path = Path(path)
        if not path.exists():
            raise MissingFile(f"Embedding dump not found: {path}")
        return cls.from_bytes(path.read_bytes())


def export_embeddings(
    manifest: DatasetManifest,
    checkpoint: Union[Checkpoint, CattleActModel],
    split: Optional[str] = None,
    expected_dim: Optional[int] = None,
) -> EmbeddingDump:
    """
    Embed every manifest sample: actions through f_act, interactions through f_int

    Args:
        manifest: Samples to embed
        checkpoint: Trained checkpoint (or a bare model)
        split: Restrict to one split
        expected_dim: Required embedding dimension

    Returns:
        EmbeddingDump ordered by sample_id
    """
    if isinstance(checkpoint, Checkpoint):
        checkpoint.require_class_order()
    model = checkpoint.model if isinstance(checkpoint, Checkpoint) else checkpoint
    if expected_dim is not None and model.embedding_dim != expected_dim:
        raise CheckpointMismatch(f"model has D={model.embedding_dim}, expected D={expected_dim}")

    actions = load_samples(manifest, "action", split)
    interactions = load_samples(manifest, "interaction", split)
    action_values = encode_action(model, [s.image for s in actions])
    interaction_values = encode_interaction(model, [s.union_image for s in interactions])

    rows = [(s.sample_id, "action", s.label, v) for s, v in zip(actions, action_values)]
    rows += [(s.sample_id, "interaction", s.label, v) for s, v in zip(interactions, interaction_values)]
    rows.sort(key=lambda row: row[0])

    ids = [row[0] for row in rows]
    if len(set(ids)) != len(ids):
        raise SchemaViolation("sample ids must be unique across the manifest")

    values = np.stack([row[3] for row in rows]).astype(np.float32) if rows else np.zeros((0, model.embedding_dim),
                                                                                          dtype=np.float32)
    logger.info(f"Exported {len(rows)} embeddings (D={model.embedding_dim})")
    return EmbeddingDump(
        dim=model.embedding_dim,
        sample_ids=ids,
        kinds=[row[1] for row in rows],
        labels=[row[2] for row in rows],
        values=values,
    )


# ============================================================================
# PCA and k-NN
# ============================================================================

class PcaProjection(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coordinates: np.ndarray = Field(description="N x k projected rows")
    components: np.ndarray = Field(description="k x D unit principal directions (zero rows when missing)")
    singular_values: np.ndarray
    mean: np.ndarray
    rank_deficient: bool = False


def pca_project(dump: Union[EmbeddingDump, np.ndarray], k: int = 2) -> PcaProjection:
    """
    Project mean-centered rows onto the top-k principal directions

    Each direction's sign is chosen so its largest-magnitude coordinate is
    positive. With fewer than k nonzero singular values the missing
    directions are zero and rank_deficient is set.

    Args:
        dump: EmbeddingDump or N x D array
        k: Number of components

    Returns:
        PcaProjection
    """
    values = dump.values if isinstance(dump, EmbeddingDump) else dump
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < k:
        raise InsufficientPoints(f"PCA to {k} components needs at least {k} rows, got {x.shape[0] if x.ndim else 0}")

    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)

    tol = s[0] * max(centered.shape) * np.finfo(np.float64).eps if s.size and s[0] > 0 else 0.0
    rank = int(np.sum(s > tol)) if s.size and s[0] > 0 else 0

    components = np.zeros((k, x.shape[1]), dtype=np.float64)
    for i in range(min(k, rank)):
        direction = vt[i]
        if direction[int(np.argmax(np.abs(direction)))] < 0:
            direction = -direction
        components[i] = direction

    rank_deficient = rank < k
    if rank_deficient:
        logger.warning(f"PCA rank deficient: {rank} nonzero singular values for k={k}")

    singular = np.zeros(k, dtype=np.float64)
    singular[:min(k, s.size)] = s[:k]
    return PcaProjection(
        coordinates=centered @ components.T,
        components=components,
        singular_values=singular,
        mean=mean,
        rank_deficient=rank_deficient,
    )


def knn_predict(
    train_values: np.ndarray,
    train_labels: Sequence[str],
    test_values: np.ndarray,
    k: int = 5,
) -> List[str]:
    """
    Majority vote over the k Euclidean nearest training rows

    Ties between labels go to the label whose voting neighbours are closest on average.
    """
    train_values = np.asarray(train_values, dtype=np.float64)
    test_values = np.asarray(test_values, dtype=np.float64)
    if len(test_values) == 0:
        return []
    if train_values.shape[1] != test_values.shape[1]:
        raise DimensionMismatch(f"train D={train_values.shape[1]} != test D={test_values.shape[1]}")
    if not 1 <= k <= len(train_values):
        raise IndexOutOfRange(f"k={k} must be between 1 and the training size {len(train_values)}")

    distances = cdist(test_values, train_values)
    labels = np.asarray(list(train_labels), dtype=object)
    predictions = []
    for row in distances:
        nearest = np.argsort(row, kind="stable")[:k]
        votes = {}
        for idx in nearest:
            votes.setdefault(labels[idx], []).append(row[idx])
        best = max(votes.items(), key=lambda item: (len(item[1]), -float(np.mean(item[1]))))
        predictions.append(best[0])
    return predictions


def knn_classify_embeddings(train: EmbeddingDump, test: EmbeddingDump, k: int = 5) -> List[str]:
    """k-NN labels for the test dump's rows using the labeled rows of the train dump"""
    if train.dim != test.dim:
        raise DimensionMismatch(f"train dump D={train.dim} != test dump D={test.dim}")
    labeled = [i for i, label in enumerate(train.labels) if label is not None]
    return knn_predict(train.values[labeled], [train.labels[i] for i in labeled], test.values, k)


def mean_cosine_similarities(values: np.ndarray, labels: Sequence[str]) -> Tuple[float, float]:
    """(mean intra-class, mean inter-class) cosine similarity over all distinct pairs"""
    x = np.asarray(values, dtype=np.float64)
    x = x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)
    sims = x @ x.T
    labels = np.asarray(list(labels), dtype=object)
    same = labels[:, None] == labels[None, :]
    off_diagonal = ~np.eye(len(labels), dtype=bool)
    intra = sims[same & off_diagonal]
    inter = sims[~same]
    return (float(intra.mean()) if intra.size else 0.0, float(inter.mean()) if inter.size else 0.0)


# ============================================================================
# Whole-checkpoint evaluation
# ============================================================================

def evaluate_interactions(model: CattleActModel, samples: Sequence[InteractionSample]):
    """(truths, predictions, probabilities) for labeled interaction samples"""
    probabilities = interaction_probabilities(model, list(samples))
    preds = [INTERACTION_CLASSES[i] for i in np.argmax(probabilities, axis=1)] if len(samples) else []
    return [s.label for s in samples], preds, probabilities


def evaluate_checkpoint(
    manifest: DatasetManifest,
    checkpoint: Union[Checkpoint, CattleActModel],
    split: str = "test",
    k: Optional[int] = None,
) -> Tuple[EvaluationReport, dict]:
    """
    Interaction metrics plus action recognition by head and by k-NN in embedding space

    Args:
        manifest: Dataset with train and evaluation splits
        checkpoint: Model to evaluate
        split: Split evaluated
        k: Neighbours for the k-NN action evaluation (config.knn_k)

    Returns:
        (EvaluationReport, raw dict with ids/truths/preds/scores for the CSV)
    """
    model = checkpoint.model if isinstance(checkpoint, Checkpoint) else checkpoint
    k = k or config.knn_k
    report = EvaluationReport(split=split)
    raw = {}

    interactions = load_samples(manifest, "interaction", split)
    if interactions:
        truths, preds, scores = evaluate_interactions(model, interactions)
        report.interaction_confusion, report.interaction = confusion_and_metrics(preds, truths, INTERACTION_CLASSES)
        report.interaction_per_class = per_class_binary_report(preds, truths, INTERACTION_CLASSES)
        raw = {"sample_ids": [s.sample_id for s in interactions], "truths": truths, "preds": preds, "scores": scores}

    actions = load_samples(manifest, "action", split)
    if actions:
        truths = [s.label for s in actions]
        probabilities = action_probabilities(model, actions)
        head_preds = [ACTION_CLASSES[i] for i in np.argmax(probabilities, axis=1)]
        _, report.action_head = confusion_and_metrics(head_preds, truths, ACTION_CLASSES)

        train_actions = load_samples(manifest, "action", "train")
        if len(train_actions) >= k:
            train_values = encode_action(model, [s.image for s in train_actions])
            test_values = encode_action(model, [s.image for s in actions])
            knn_preds = knn_predict(train_values, [s.label for s in train_actions], test_values, k)
            _, report.action_knn = confusion_and_metrics(knn_preds, truths, ACTION_CLASSES)
        else:
            logger.warning(f"Skipping {k}-NN action evaluation: only {len(train_actions)} training actions")

    if report.interaction is not None:
        logger.info(
            f"{split}: interaction accuracy {report.interaction.accuracy:.3f}, "
            f"macro-F1 {report.interaction.macro_f1:.3f}"
        )
    return report, raw
