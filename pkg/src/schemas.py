"""
Pydantic schemas for CattleAct records, configs and reports
"""
import math
from pathlib import Path
from typing import Annotated, Dict, FrozenSet, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import config


# ============================================================================
# Label taxonomy and keypoint vocabulary
# ============================================================================

ACTION_CLASSES: Tuple[str, ...] = ("grazing", "standing", "lying", "riding")
INTERACTION_CLASSES: Tuple[str, ...] = ("no_interaction", "interest", "conflict", "mount")

ActionLabel = Literal["grazing", "standing", "lying", "riding"]
InteractionLabel = Literal["no_interaction", "interest", "conflict", "mount"]
SampleKind = Literal["action", "interaction"]
Split = Literal["train", "val", "test"]
CutoutMode = Literal["skeleton", "standard", "none"]

KEYPOINT_NAMES: Tuple[str, ...] = (
    "head", "neck", "torso_center", "buttocks",
    "front_leg_left", "front_leg_right", "hind_leg_left", "hind_leg_right",
)
KeypointName = Literal[
    "head", "neck", "torso_center", "buttocks",
    "front_leg_left", "front_leg_right", "hind_leg_left", "hind_leg_right",
]

# Left/right chirality swaps under a horizontal mirror
MIRRORED_KEYPOINTS: Dict[str, str] = {
    "front_leg_left": "front_leg_right",
    "front_leg_right": "front_leg_left",
    "hind_leg_left": "hind_leg_right",
    "hind_leg_right": "hind_leg_left",
}


def class_order_for(kind: SampleKind) -> Tuple[str, ...]:
    """Fixed class order of the action or interaction head"""
    return ACTION_CLASSES if kind == "action" else INTERACTION_CLASSES


# ============================================================================
# Geometry
# ============================================================================

class BoundingBox(BaseModel):
    """Axis-aligned box in image pixels, origin top-left"""
    model_config = ConfigDict(frozen=True)

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @model_validator(mode="after")
    def validate_extent(self):
        values = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("box coordinates must be finite")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box must satisfy x_min < x_max and y_min < y_max, got {list(values)}")
        return self

    @classmethod
    def from_list(cls, values) -> "BoundingBox":
        if len(values) != 4:
            raise ValueError(f"box needs 4 values [x0, y0, x1, y1], got {len(values)}")
        x0, y0, x1, y1 = (float(v) for v in values)
        return cls(x_min=x0, y_min=y0, x_max=x1, y_max=y1)

    def to_list(self) -> List[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def bottom_center(self) -> Tuple[float, float]:
        """Ground-contact anchor of a standing animal"""
        return ((self.x_min + self.x_max) / 2, self.y_max)

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(x_min=self.x_min + dx, y_min=self.y_min + dy,
                           x_max=self.x_max + dx, y_max=self.y_max + dy)

    def union(self, other: "BoundingBox") -> "BoundingBox":
        return BoundingBox(
            x_min=min(self.x_min, other.x_min), y_min=min(self.y_min, other.y_min),
            x_max=max(self.x_max, other.x_max), y_max=max(self.y_max, other.y_max),
        )

    def intersection_area(self, other: "BoundingBox") -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        return max(0.0, w) * max(0.0, h)

    def iou(self, other: "BoundingBox") -> float:
        inter = self.intersection_area(other)
        return inter / (self.area + other.area - inter)

    def gap(self, other: "BoundingBox") -> float:
        """Euclidean distance between the two rectangles (0 when touching or overlapping)"""
        dx = max(0.0, other.x_min - self.x_max, self.x_min - other.x_max)
        dy = max(0.0, other.y_min - self.y_max, self.y_min - other.y_max)
        return math.hypot(dx, dy)

    def contains(self, other: "BoundingBox", tol: float = 1e-6) -> bool:
        return (other.x_min >= self.x_min - tol and other.y_min >= self.y_min - tol
                and other.x_max <= self.x_max + tol and other.y_max <= self.y_max + tol)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def pixel_bounds(self) -> Tuple[int, int, int, int]:
        """Integer crop window (x0, y0, x1, y1), end-exclusive"""
        return (int(round(self.x_min)), int(round(self.y_min)),
                int(round(self.x_max)), int(round(self.y_max)))


class Keypoint(BaseModel):
    """Single named skeleton joint"""
    model_config = ConfigDict(frozen=True)

    name: KeypointName
    x: float
    y: float
    confidence: float = Field(ge=0.0, le=1.0)

    @model_validator(mode="after")
    def validate_finite(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"keypoint '{self.name}' has non-finite coordinates")
        return self


class Skeleton(BaseModel):
    """Ordered keypoints of one animal"""
    model_config = ConfigDict(frozen=True)

    keypoints: List[Keypoint] = Field(default_factory=list)

    @field_validator('keypoints')
    @classmethod
    def validate_unique_names(cls, v):
        names = [kp.name for kp in v]
        if len(names) != len(set(names)):
            raise ValueError(f"keypoint names must be unique, got {names}")
        return v

    @classmethod
    def from_rows(cls, rows) -> "Skeleton":
        return cls(keypoints=[
            Keypoint(name=row[0], x=float(row[1]), y=float(row[2]), confidence=float(row[3]))
            for row in rows
        ])

    def to_rows(self) -> List[list]:
        return [[kp.name, kp.x, kp.y, kp.confidence] for kp in self.keypoints]

    def get(self, name: str) -> Optional[Keypoint]:
        for kp in self.keypoints:
            if kp.name == name:
                return kp
        return None

    def translated(self, dx: float, dy: float) -> "Skeleton":
        return Skeleton(keypoints=[
            kp.model_copy(update={"x": kp.x + dx, "y": kp.y + dy}) for kp in self.keypoints
        ])

    def mirrored(self, width: float) -> "Skeleton":
        """Reflect about the vertical axis of an image of the given width"""
        return Skeleton(keypoints=[
            Keypoint(name=MIRRORED_KEYPOINTS.get(kp.name, kp.name), x=width - kp.x, y=kp.y,
                     confidence=kp.confidence)
            for kp in self.keypoints
        ])


# ============================================================================
# In-memory samples
# ============================================================================

def _validate_image(v: np.ndarray) -> np.ndarray:
    if not isinstance(v, np.ndarray) or v.ndim != 3 or v.shape[2] != 3:
        raise ValueError(f"image must be an H x W x 3 array, got shape {getattr(v, 'shape', None)}")
    if v.shape[0] < 8 or v.shape[1] < 8:
        raise ValueError(f"image must be at least 8x8, got {v.shape[0]}x{v.shape[1]}")
    if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
        raise ValueError("image intensities must be finite and within [0, 1]")
    return v


class ActionSample(BaseModel):
    """One animal: image, its box and skeleton in that image's frame"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sample_id: str = ""
    image: np.ndarray
    box: BoundingBox
    skeleton: Skeleton = Field(default_factory=Skeleton)
    label: Optional[ActionLabel] = None

    @field_validator('image')
    @classmethod
    def validate_image(cls, v):
        return _validate_image(v)

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    @property
    def width(self) -> int:
        return int(self.image.shape[1])


class InteractionSample(BaseModel):
    """Interaction candidate: union crop plus both members in union-crop coordinates"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sample_id: str = ""
    union_image: np.ndarray
    member_a: ActionSample
    member_b: ActionSample
    label: Optional[InteractionLabel] = None
    focus_box: Optional[BoundingBox] = None

    @field_validator('union_image')
    @classmethod
    def validate_union_image(cls, v):
        return _validate_image(v)

    @model_validator(mode="after")
    def validate_members_inside(self):
        h, w = self.union_image.shape[:2]
        bounds = BoundingBox(x_min=0.0, y_min=0.0, x_max=float(w), y_max=float(h))
        for name, member in (("member_a", self.member_a), ("member_b", self.member_b)):
            if not bounds.contains(member.box):
                raise ValueError(f"{name} box {member.box.to_list()} lies outside the union image {w}x{h}")
        return self

    @property
    def height(self) -> int:
        return int(self.union_image.shape[0])

    @property
    def width(self) -> int:
        return int(self.union_image.shape[1])


# ============================================================================
# Manifest records (JSON Lines)
# ============================================================================

SkeletonRow = Tuple[KeypointName, float, float, float]


def _check_box(v: List[float]) -> List[float]:
    BoundingBox.from_list(v)
    return [float(x) for x in v]


def _check_skeleton(v: List[SkeletonRow]) -> List[SkeletonRow]:
    Skeleton.from_rows(v)
    return v


class MemberRecord(BaseModel):
    """One member of an interaction record, in union-image coordinates"""
    box: List[float]
    skeleton: List[SkeletonRow] = Field(default_factory=list)
    label: Optional[ActionLabel] = None

    @field_validator('box')
    @classmethod
    def validate_box(cls, v):
        return _check_box(v)

    @field_validator('skeleton')
    @classmethod
    def validate_skeleton(cls, v):
        return _check_skeleton(v)

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox.from_list(self.box)


class ActionRecord(BaseModel):
    """Manifest line for a single-animal crop"""
    kind: Literal["action"] = "action"
    sample_id: str
    image: str = Field(description="Image path relative to the manifest directory")
    box: List[float]
    skeleton: List[SkeletonRow] = Field(default_factory=list)
    label: ActionLabel
    split: Split = "train"

    @field_validator('box')
    @classmethod
    def validate_box(cls, v):
        return _check_box(v)

    @field_validator('skeleton')
    @classmethod
    def validate_skeleton(cls, v):
        return _check_skeleton(v)

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox.from_list(self.box)


class InteractionRecord(BaseModel):
    """Manifest line for an interaction candidate (union crop + two members)"""
    kind: Literal["interaction"] = "interaction"
    sample_id: str
    image: str = Field(description="Union image path relative to the manifest directory")
    box: List[float]
    skeleton: List[SkeletonRow] = Field(default_factory=list)
    label: InteractionLabel
    member_a: MemberRecord
    member_b: MemberRecord
    focus_box: Optional[List[float]] = Field(
        default=None,
        description="Discriminative region known by construction (synthetic data only)"
    )
    split: Split = "train"

    @field_validator('box')
    @classmethod
    def validate_box(cls, v):
        return _check_box(v)

    @field_validator('focus_box')
    @classmethod
    def validate_focus_box(cls, v):
        return None if v is None else _check_box(v)

    @property
    def bbox(self) -> BoundingBox:
        return BoundingBox.from_list(self.box)


ManifestRecord = Annotated[Union[ActionRecord, InteractionRecord], Field(discriminator="kind")]


class ManifestHeader(BaseModel):
    """First line of every manifest file"""
    format: Literal["cattleact-manifest"] = "cattleact-manifest"
    version: Literal[1] = 1
    metadata: Dict[str, Union[int, float, str, bool, None]] = Field(default_factory=dict)


class DatasetManifest(BaseModel):
    """Validated records plus the directory their image paths resolve against"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    header: ManifestHeader = Field(default_factory=ManifestHeader)
    records: List[ManifestRecord] = Field(default_factory=list)
    root: Optional[Path] = None
    images: Dict[str, np.ndarray] = Field(
        default_factory=dict,
        description="In-memory images keyed by relative path (generated, not yet written)",
        exclude=True,
    )

    @property
    def class_counts(self) -> Dict[str, int]:
        """n_j per class over all records (action and interaction classes)"""
        counts = {name: 0 for name in ACTION_CLASSES + INTERACTION_CLASSES}
        for record in self.records:
            counts[record.label] += 1
        return counts

    def counts(self, kind: SampleKind, split: Optional[Split] = None) -> Dict[str, int]:
        counts = {name: 0 for name in class_order_for(kind)}
        for record in self.select(kind, split):
            counts[record.label] += 1
        return counts

    def select(self, kind: Optional[SampleKind] = None, split: Optional[Split] = None) -> list:
        return [
            r for r in self.records
            if (kind is None or r.kind == kind) and (split is None or r.split == split)
        ]


# ============================================================================
# Synthetic scene spec
# ============================================================================

# Image counts per class of the reference pasture dataset
REFERENCE_ACTION_COUNTS: Dict[str, int] = {"grazing": 2209, "standing": 816, "lying": 319, "riding": 165}
REFERENCE_INTERACTION_COUNTS: Dict[str, int] = {"no_interaction": 3637, "interest": 1379, "conflict": 178, "mount": 117}


def _normalized(counts: Dict[str, int]) -> Dict[str, float]:
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()}


class ClassMix(BaseModel):
    """Sampling probabilities over action and interaction classes"""
    action: Dict[ActionLabel, float] = Field(default_factory=lambda: _normalized(REFERENCE_ACTION_COUNTS))
    interaction: Dict[InteractionLabel, float] = Field(
        default_factory=lambda: _normalized(REFERENCE_INTERACTION_COUNTS)
    )

    @field_validator('action', 'interaction')
    @classmethod
    def validate_probabilities(cls, v, info):
        if any(p < 0 or not math.isfinite(p) for p in v.values()):
            raise ValueError(f"class_mix.{info.field_name} probabilities must be finite and non-negative")
        total = sum(v.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"class_mix.{info.field_name} probabilities must sum to 1, got {total}")
        return v

    def vector(self, kind: SampleKind) -> np.ndarray:
        mix = self.action if kind == "action" else self.interaction
        return np.array([mix.get(name, 0.0) for name in class_order_for(kind)], dtype=np.float64)


class SyntheticSceneSpec(BaseModel):
    """Parameters of the synthetic pasture generator"""
    model_config = ConfigDict(extra='forbid')

    n_cattle: int = Field(default=5, ge=2, description="Animals in the GPS scene")
    arena_size: Tuple[float, float] = Field(default=(50.0, 50.0), description="Pasture width x depth in meters")
    class_mix: ClassMix = Field(default_factory=ClassMix)
    gps_noise_sigma: float = Field(default=0.5, ge=0.0, description="GPS noise standard deviation in meters")
    seed: int = 0
    n_action_samples: int = Field(default=400, ge=0)
    n_interaction_samples: int = Field(default=400, ge=0)
    action_image_size: int = Field(default=64, ge=16, description="Square action crop side in pixels")
    interaction_image_size: Tuple[int, int] = Field(default=(96, 72), description="Union crop (width, height)")
    val_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    test_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    image_noise: float = Field(default=0.03, ge=0.0, description="Pixel noise standard deviation")
    min_spacing_m: float = Field(default=3.0, gt=0.0)
    motion_amplitude_m: float = Field(default=0.5, ge=0.0)

    @field_validator('arena_size')
    @classmethod
    def validate_arena(cls, v):
        if v[0] <= 0 or v[1] <= 0:
            raise ValueError("arena_size must be positive")
        return v

    @field_validator('interaction_image_size')
    @classmethod
    def validate_union_size(cls, v):
        if v[0] < 32 or v[1] < 32:
            raise ValueError("interaction_image_size must be at least 32x32")
        return v

    @model_validator(mode="after")
    def validate_fractions(self):
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("val_fraction + test_fraction must leave a training split")
        return self


# ============================================================================
# Augmentation configs
# ============================================================================

ACTION_PROTECTED: FrozenSet[str] = frozenset({"head", "front_leg_left", "front_leg_right"})
INTERACTION_PROTECTED: FrozenSet[str] = frozenset({"head", "buttocks", "torso_center"})


class CutoutConfig(BaseModel):
    """Square-mask cutout parameters"""
    n_masks: int = Field(default=1, ge=0)
    mask_size_frac: float = Field(default=0.25, gt=0.0, lt=1.0, description="Mask side as a fraction of min(H, W)")
    protection_radius_frac: float = Field(default=0.12, ge=0.0, description="Disc radius as a fraction of min(H, W)")
    max_resample_attempts: int = Field(default=10, ge=0)
    seed: int = 0
    fill: Optional[Tuple[float, float, float]] = Field(
        default=None,
        description="Per-channel fill value; None uses the dataset (or image) channel mean"
    )
    confidence_threshold: float = Field(default_factory=lambda: config.protected_confidence, ge=0.0, le=1.0)


class ProtectedRegionSpec(BaseModel):
    """Keypoints whose neighbourhood cutout must never touch"""
    model_config = ConfigDict(frozen=True)

    mode: SampleKind
    protected_keypoints: FrozenSet[KeypointName]

    @model_validator(mode="after")
    def validate_required(self):
        required = ACTION_PROTECTED if self.mode == "action" else INTERACTION_PROTECTED
        missing = required - set(self.protected_keypoints)
        if missing:
            raise ValueError(f"{self.mode} mode must protect {sorted(required)}; missing {sorted(missing)}")
        return self

    @classmethod
    def default(cls, mode: SampleKind) -> "ProtectedRegionSpec":
        keypoints = ACTION_PROTECTED if mode == "action" else INTERACTION_PROTECTED
        return cls(mode=mode, protected_keypoints=keypoints)


# ============================================================================
# Model and training configs
# ============================================================================

class EncoderConfig(BaseModel):
    """Architecture of the action/interaction encoders and fusion"""
    input_size: int = Field(default=224, ge=32)
    embedding_dim: int = Field(default=256, ge=1, description="D, shared by both encoders")
    action_backbone: Literal["patch_attention", "conv"] = "patch_attention"
    interaction_backbone: Literal["conv_large_kernel"] = "conv_large_kernel"
    n_attention_heads: int = Field(default=4, ge=1)
    patch_size: int = Field(default=16, ge=2)
    interaction_kernel_size: int = Field(default=32, ge=3)
    width: int = Field(default=64, ge=4, description="Hidden width of the backbones")
    depth: int = Field(default=2, ge=1, description="Transformer layers / extra conv blocks")
    seed: int = 0

    @model_validator(mode="after")
    def validate_dims(self):
        if self.embedding_dim % self.n_attention_heads != 0:
            raise ValueError(
                f"embedding_dim ({self.embedding_dim}) must be divisible by n_attention_heads ({self.n_attention_heads})"
            )
        if self.patch_size > self.input_size or self.interaction_kernel_size > self.input_size:
            raise ValueError("patch_size and interaction_kernel_size must not exceed input_size")
        if self.action_backbone == "patch_attention" and self.width % self.n_attention_heads != 0:
            raise ValueError("width must be divisible by n_attention_heads for the patch-attention encoder")
        return self


class Lambda2Schedule(BaseModel):
    """Linear decay of one loss weight over the training horizon"""
    start: float = Field(default=0.1, ge=0.0)
    end: float = Field(default=0.0, ge=0.0)
    total_steps: Optional[int] = Field(default=None, ge=1, description="None = filled in by the trainer")
    decay_target: Literal["classification", "alignment"] = "classification"


class LossWeights(BaseModel):
    """Every loss hyperparameter"""
    alpha: float = Field(default=0.5, gt=0.0, description="Triplet margin")
    tau: float = Field(default=0.03, gt=0.0, description="InfoNCE temperature")
    lambda1: float = Field(default=1.0, ge=0.0, description="Alignment weight")
    lambda2_schedule: Lambda2Schedule = Field(default_factory=Lambda2Schedule)
    ldam_margin_scale: float = Field(default=4.0, gt=0.0, description="Constant in Delta_j = scale / n_j^(1/4)")
    zero_mean_weight: float = Field(default=0.01, ge=0.0, description="beta of the zero-mean regularizer")


class PretrainConfig(BaseModel):
    """Action-space pretraining (triplet + zero-mean)"""
    model_config = ConfigDict(extra='forbid')

    epochs: int = Field(default=50, ge=1)
    learning_rate: float = Field(default=1e-5, gt=0.0)
    batch_size: int = Field(default=32, ge=1)
    alpha: float = Field(default=0.5, gt=0.0)
    zero_mean_weight: float = Field(default=0.01, ge=0.0)
    seed: int = 0
    steps_per_epoch: Optional[int] = Field(default=None, ge=1, description="None = ceil(train actions / batch_size)")
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    cutout: CutoutConfig = Field(default_factory=CutoutConfig)
    cutout_mode: CutoutMode = "skeleton"


class JointTrainConfig(BaseModel):
    """Joint action-interaction optimization"""
    model_config = ConfigDict(extra='forbid')

    epochs: int = Field(default=50, ge=1)
    learning_rate: float = Field(default=1e-5, gt=0.0)
    batch_size: int = Field(default=16, ge=1)
    weights: LossWeights = Field(default_factory=LossWeights)
    freeze_action_encoder: bool = False
    seed: int = 0
    cutout: CutoutConfig = Field(default_factory=CutoutConfig)
    cutout_mode: CutoutMode = "skeleton"
    use_alignment: bool = True
    from_scratch: bool = False
    action_loss_weight: float = Field(default=1.0, ge=0.0)
    encoder: EncoderConfig = Field(
        default_factory=EncoderConfig,
        description="Architecture used only when training from scratch"
    )


# ============================================================================
# Evaluation reports
# ============================================================================

class ConfusionMatrix(BaseModel):
    """Rows = truth, columns = prediction"""
    class_order: List[str]
    counts: List[List[int]]

    @property
    def total(self) -> int:
        return int(sum(sum(row) for row in self.counts))


class MetricsReport(BaseModel):
    """Multiclass accuracy and F1 family"""
    class_order: List[str]
    n_samples: int
    accuracy: float
    macro_f1: float
    weighted_f1: float
    per_class_f1: Dict[str, float]
    per_class_precision: Dict[str, float]
    per_class_recall: Dict[str, float]
    support: Dict[str, int]
    zero_division_classes: List[str] = Field(
        default_factory=list,
        description="Classes whose F1 is 0 by convention (P + R = 0)"
    )


class PerClassRow(BaseModel):
    class_name: str
    accuracy: float = Field(description="One-vs-rest binary accuracy")
    f1: float


class PerClassReport(BaseModel):
    """Per-class one-vs-rest table with an average row"""
    rows: List[PerClassRow]
    average_accuracy: float
    average_f1: float


class OcclusionMap(BaseModel):
    """Score drop per occluding patch position, row-major"""
    grid: List[List[float]]
    patch_size: int
    stride: int
    baseline_score: float
    target_class: str
    fill: Tuple[float, float, float]

    @property
    def shape(self) -> Tuple[int, int]:
        return (len(self.grid), len(self.grid[0]) if self.grid else 0)

    def argmax_cell(self) -> Tuple[int, int]:
        grid = np.asarray(self.grid)
        row, col = np.unravel_index(int(np.argmax(grid)), grid.shape)
        return int(row), int(col)

    def cell_box(self, row: int, col: int) -> BoundingBox:
        y0, x0 = row * self.stride, col * self.stride
        return BoundingBox(x_min=x0, y_min=y0, x_max=x0 + self.patch_size, y_max=y0 + self.patch_size)


class EvaluationReport(BaseModel):
    """Everything `evaluate` writes to metrics.json"""
    split: str
    interaction: Optional[MetricsReport] = None
    interaction_confusion: Optional[ConfusionMatrix] = None
    interaction_per_class: Optional[PerClassReport] = None
    action_head: Optional[MetricsReport] = None
    action_knn: Optional[MetricsReport] = None
    seed: Optional[int] = None


# ============================================================================
# Association
# ============================================================================

class PairCandidate(BaseModel):
    """Interaction candidate built from two detections"""
    i: int
    j: int
    union: BoundingBox


class Tracklet(BaseModel):
    """Time-stamped boxes of one tracked animal; frames are [t, x0, y0, x1, y1]"""
    track_id: str
    frames: List[Tuple[float, float, float, float, float]]
    anchor_point: Literal["bottom_center", "center"] = "bottom_center"

    @field_validator('frames')
    @classmethod
    def validate_frames(cls, v):
        if not v:
            raise ValueError("tracklet needs at least one frame")
        times = [f[0] for f in v]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("tracklet timestamps must be strictly increasing")
        for frame in v:
            BoundingBox.from_list(frame[1:])
        return v

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f[0] for f in self.frames], dtype=np.float64)

    def anchors(self) -> np.ndarray:
        """Ground-contact pixel per frame, shape (T, 2)"""
        points = []
        for _, x0, y0, x1, y1 in self.frames:
            if self.anchor_point == "bottom_center":
                points.append(((x0 + x1) / 2, y1))
            else:
                points.append(((x0 + x1) / 2, (y0 + y1) / 2))
        return np.array(points, dtype=np.float64)


class GpsTrack(BaseModel):
    """GPS fixes of one collar; fixes are (t, x_m, y_m)"""
    cattle_id: str
    fixes: List[Tuple[float, float, float]]

    @field_validator('fixes')
    @classmethod
    def validate_fixes(cls, v):
        times = [f[0] for f in v]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("GPS timestamps must be strictly increasing")
        if not all(math.isfinite(c) for f in v for c in f):
            raise ValueError("GPS fixes must be finite")
        return v

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f[0] for f in self.fixes], dtype=np.float64)

    @property
    def positions(self) -> np.ndarray:
        return np.array([(f[1], f[2]) for f in self.fixes], dtype=np.float64).reshape(-1, 2)


class Homography(BaseModel):
    """Ground plane (meters) -> image (pixels), normalized so H[2][2] = 1"""
    H: List[List[float]]
    rms_error: Optional[float] = None

    @field_validator('H')
    @classmethod
    def validate_matrix(cls, v):
        m = np.asarray(v, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("H must be a finite 3x3 matrix")
        if abs(m[2, 2] - 1.0) > 1e-9:
            raise ValueError("H must be normalized so that H[2][2] = 1")
        if abs(np.linalg.det(m)) < 1e-12:
            raise ValueError("H must be invertible")
        return v

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.H, dtype=np.float64)

    @classmethod
    def from_matrix(cls, m: np.ndarray, rms_error: Optional[float] = None) -> "Homography":
        return cls(H=np.asarray(m, dtype=np.float64).tolist(), rms_error=rms_error)


class SyntheticGpsScene(BaseModel):
    """Simulated collars, camera and tracker output of one pasture scene"""
    gps_tracks: List[GpsTrack]
    truth_tracks: List[GpsTrack] = Field(description="Noiseless ground-plane trajectories")
    tracklets: List[Tracklet]
    homography: Homography
    correspondences: List[Tuple[float, float, float, float]] = Field(
        description="Calibration pairs (x_m, y_m, u_px, v_px)"
    )
    truth: Dict[str, str] = Field(description="track_id -> cattle_id")


class AssignmentResult(BaseModel):
    """Optimal tracklet -> GPS identity matching"""
    matching: Dict[str, str]
    total_cost: float = Field(ge=0.0)
    pair_costs: Dict[str, float] = Field(default_factory=dict)
    unmatched_tracklets: List[str] = Field(default_factory=list)
    unmatched_gps: List[str] = Field(default_factory=list)


# ============================================================================
# CLI
# ============================================================================

class RunConfig(BaseModel):
    """Common options of every CLI command"""
    command: str
    config_path: Optional[str] = None
    out_dir: str
    seed: int
    verbosity: int = 0


class RunRecord(BaseModel):
    """run.json written next to every command's artifacts"""
    run: RunConfig
    config: Dict = Field(default_factory=dict)
    versions: Dict[str, str] = Field(default_factory=dict)
    input_checksums: Dict[str, str] = Field(default_factory=dict)
    started_at: str
    finished_at: Optional[str] = None
    status: Literal["ok", "failed"] = "ok"


class ValidationResult(BaseModel):
    """Outcome of a manifest check"""
    valid: bool
    error: Optional[Literal["MISSING_FILE", "SCHEMA_VIOLATION", "DATA_LEAKAGE", "COOCCURRENCE"]] = None
    message: Optional[str] = None
    record_index: Optional[int] = None
    field: Optional[str] = None
    offending_ids: List[str] = Field(default_factory=list)


class ErrorResponse(BaseModel):
    """Error payload printed by the CLI"""
    error: str = Field(description="Error type")
    message: str = Field(description="Human-readable error message")
    suggested_files: Optional[List[str]] = Field(
        default=None,
        description="Similar file names (when a file was not found)"
    )
