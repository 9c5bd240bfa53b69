"""
Label-invariant augmentations
Skeleton-aware cutout, standard cutout, horizontal flip and brightness/contrast jitter
"""
import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .schemas import (
    ActionSample,
    BoundingBox,
    CutoutConfig,
    CutoutMode,
    InteractionSample,
    ProtectedRegionSpec,
    SampleKind,
    Skeleton,
)

logger = logging.getLogger(__name__)

Rectangle = Tuple[int, int, int, int]
Disc = Tuple[float, float, float]


def mask_side(height: int, width: int, cfg: CutoutConfig) -> int:
    """Square mask side in pixels"""
    return min(height, width, max(1, int(round(cfg.mask_size_frac * min(height, width)))))


def protected_discs(
    skeletons: Sequence[Skeleton],
    spec: ProtectedRegionSpec,
    height: int,
    width: int,
    cfg: CutoutConfig,
) -> List[Disc]:
    """
    Discs that no mask may touch

    Keypoints outside the image or below the confidence threshold are ignored.

    Returns:
        List of (x, y, radius)
    """
    radius = cfg.protection_radius_frac * min(height, width)
    discs = []
    for skeleton in skeletons:
        for kp in skeleton.keypoints:
            if kp.name not in spec.protected_keypoints or kp.confidence < cfg.confidence_threshold:
                continue
            if not (0.0 <= kp.x <= width and 0.0 <= kp.y <= height):
                continue
            discs.append((kp.x, kp.y, radius))
    return discs


def _touches(x0: int, y0: int, side: int, disc: Disc) -> bool:
    """Whether the mask rectangle's pixel hull comes within the disc radius"""
    kx, ky, radius = disc
    nearest_x = min(max(kx, x0), x0 + side - 1)
    nearest_y = min(max(ky, y0), y0 + side - 1)
    return (nearest_x - kx) ** 2 + (nearest_y - ky) ** 2 <= radius ** 2


def _fill_value(image: np.ndarray, cfg: CutoutConfig, fill: Optional[Sequence[float]]) -> np.ndarray:
    if cfg.fill is not None:
        return np.asarray(cfg.fill, dtype=image.dtype)
    if fill is not None:
        return np.asarray(fill, dtype=image.dtype)
    return image.reshape(-1, 3).mean(axis=0).astype(image.dtype)


def _apply_cutout(
    image: np.ndarray,
    discs: Sequence[Disc],
    cfg: CutoutConfig,
    rng: np.random.Generator,
    fill: Optional[Sequence[float]] = None,
) -> Tuple[np.ndarray, List[Rectangle]]:
    """Rejection-sampled square masks; a mask that keeps hitting a disc is skipped"""
    out = np.array(image, copy=True)
    height, width = image.shape[:2]
    if cfg.n_masks == 0 or height == 0 or width == 0:
        return out, []

    side = mask_side(height, width, cfg)
    value = _fill_value(image, cfg, fill)
    rectangles = []

    for mask_index in range(cfg.n_masks):
        for _ in range(cfg.max_resample_attempts + 1):
            x0 = int(rng.integers(0, width - side + 1))
            y0 = int(rng.integers(0, height - side + 1))
            if not any(_touches(x0, y0, side, disc) for disc in discs):
                out[y0:y0 + side, x0:x0 + side] = value
                rectangles.append((x0, y0, x0 + side, y0 + side))
                break
        else:
            logger.debug(f"Cutout mask {mask_index} skipped after {cfg.max_resample_attempts} resamples")

    return out, rectangles


def _as_list(skeleton: Union[Skeleton, Sequence[Skeleton], None]) -> List[Skeleton]:
    if skeleton is None:
        return []
    if isinstance(skeleton, Skeleton):
        return [skeleton]
    return list(skeleton)


def cutout_with_masks(
    image: np.ndarray,
    skeleton: Union[Skeleton, Sequence[Skeleton]],
    spec: ProtectedRegionSpec,
    cfg: CutoutConfig,
    rng: Optional[np.random.Generator] = None,
    fill: Optional[Sequence[float]] = None,
) -> Tuple[np.ndarray, List[Rectangle], List[Disc]]:
    """
    Skeleton-aware cutout that also reports the applied masks and the protected discs

    Args:
        image: H x W x 3 array
        skeleton: One skeleton, or both members' skeletons in interaction mode
        spec: Protected keypoint set
        cfg: Mask count, size, protection radius and seed
        rng: Generator to draw from (defaults to one seeded with cfg.seed)
        fill: Per-channel dataset mean used when cfg.fill is unset

    Returns:
        (augmented copy, mask rectangles (x0, y0, x1, y1), discs (x, y, r))
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    height, width = image.shape[:2]
    discs = protected_discs(_as_list(skeleton), spec, height, width, cfg)
    out, rectangles = _apply_cutout(image, discs, cfg, rng, fill)
    return out, rectangles, discs


def skeleton_aware_cutout(
    image: np.ndarray,
    skeleton: Union[Skeleton, Sequence[Skeleton]],
    spec: ProtectedRegionSpec,
    cfg: CutoutConfig,
    rng: Optional[np.random.Generator] = None,
    fill: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Cutout that never modifies a pixel within the protection radius of a protected keypoint"""
    return cutout_with_masks(image, skeleton, spec, cfg, rng, fill)[0]


def standard_cutout(
    image: np.ndarray,
    cfg: CutoutConfig,
    rng: Optional[np.random.Generator] = None,
    fill: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Plain cutout: the skeleton-aware variant with nothing protected"""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    return _apply_cutout(image, [], cfg, rng, fill)[0]


def _flip_box(box: BoundingBox, width: float) -> BoundingBox:
    return BoundingBox(x_min=width - box.x_max, y_min=box.y_min, x_max=width - box.x_min, y_max=box.y_max)


def horizontal_flip(sample: Union[ActionSample, InteractionSample]) -> Union[ActionSample, InteractionSample]:
    """
    Mirror a sample about its vertical center line

    x maps to W - x for boxes and keypoints; left/right keypoint names swap.
    Labels are untouched.
    """
    if isinstance(sample, ActionSample):
        width = float(sample.width)
        return ActionSample(
            sample_id=sample.sample_id,
            image=np.ascontiguousarray(sample.image[:, ::-1]),
            box=_flip_box(sample.box, width),
            skeleton=sample.skeleton.mirrored(width),
            label=sample.label,
        )

    width = float(sample.width)
    union_image = np.ascontiguousarray(sample.union_image[:, ::-1])
    members = [
        ActionSample(
            sample_id=member.sample_id,
            image=union_image,
            box=_flip_box(member.box, width),
            skeleton=member.skeleton.mirrored(width),
            label=member.label,
        )
        for member in (sample.member_a, sample.member_b)
    ]
    return InteractionSample(
        sample_id=sample.sample_id,
        union_image=union_image,
        member_a=members[0],
        member_b=members[1],
        label=sample.label,
        focus_box=_flip_box(sample.focus_box, width) if sample.focus_box else None,
    )


def brightness_contrast_jitter(
    image: np.ndarray,
    rng: np.random.Generator,
    brightness: float = 0.1,
    contrast: float = 0.1,
) -> np.ndarray:
    """Random global brightness shift and contrast scale around the image mean, clipped to [0, 1]"""
    shift = rng.uniform(-brightness, brightness)
    scale = rng.uniform(1.0 - contrast, 1.0 + contrast)
    mean = image.mean(axis=(0, 1), keepdims=True)
    return np.clip((image - mean) * scale + mean + shift, 0.0, 1.0).astype(image.dtype)


def _with_image(sample: Union[ActionSample, InteractionSample], image: np.ndarray):
    if isinstance(sample, ActionSample):
        return sample.model_copy(update={"image": image})
    members = [m.model_copy(update={"image": image}) for m in (sample.member_a, sample.member_b)]
    return sample.model_copy(update={"union_image": image, "member_a": members[0], "member_b": members[1]})


class Augmenter:
    """
    Training-time augmentation pipeline

    Random horizontal flip, brightness/contrast jitter, then the configured
    cutout (skeleton-aware, standard or none) applied with a fixed probability.
    All randomness comes from the generator passed to __call__.
    """

    def __init__(
        self,
        kind: SampleKind,
        cutout_mode: CutoutMode = "skeleton",
        cutout: Optional[CutoutConfig] = None,
        fill: Optional[Sequence[float]] = None,
        flip_probability: float = 0.5,
        cutout_probability: float = 0.5,
        jitter: bool = True,
        protected: Optional[ProtectedRegionSpec] = None,
    ):
        self.kind = kind
        self.cutout_mode = cutout_mode
        self.cutout = cutout or CutoutConfig()
        self.fill = fill
        self.flip_probability = flip_probability
        self.cutout_probability = cutout_probability
        self.jitter = jitter
        self.protected = protected or ProtectedRegionSpec.default(kind)

    def __call__(self, sample, rng: np.random.Generator):
        if rng.random() < self.flip_probability:
            sample = horizontal_flip(sample)

        image = sample.image if isinstance(sample, ActionSample) else sample.union_image
        if self.jitter:
            image = brightness_contrast_jitter(image, rng)

        if self.cutout_mode != "none" and rng.random() < self.cutout_probability:
            if self.cutout_mode == "skeleton":
                if isinstance(sample, ActionSample):
                    skeletons = [sample.skeleton]
                else:
                    skeletons = [sample.member_a.skeleton, sample.member_b.skeleton]
                image = skeleton_aware_cutout(image, skeletons, self.protected, self.cutout, rng, self.fill)
            else:
                image = standard_cutout(image, self.cutout, rng, self.fill)

        return _with_image(sample, image)
