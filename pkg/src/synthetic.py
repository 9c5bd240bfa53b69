"""
Synthetic pasture generator
Renders labeled action crops, interaction candidates and GPS/tracker scenes with known ground truth
"""
import logging
import math
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw

from .errors import InvalidSpec
from .image_processor import quantize
from .schemas import (
    ACTION_CLASSES,
    INTERACTION_CLASSES,
    ActionRecord,
    BoundingBox,
    DatasetManifest,
    GpsTrack,
    Homography,
    InteractionRecord,
    ManifestHeader,
    SyntheticGpsScene,
    SyntheticSceneSpec,
    Tracklet,
    ValidationResult,
)

logger = logging.getLogger(__name__)


# Member action pairs (member_a, member_b) each interaction class may contain
INTERACTION_MEMBER_ACTIONS: Dict[str, FrozenSet[Tuple[str, str]]] = {
    "mount": frozenset({("riding", "standing")}),
    "conflict": frozenset({("standing", "standing")}),
    "interest": frozenset({("standing", "standing"), ("standing", "grazing")}),
    "no_interaction": frozenset(
        (a, b) for a in ("grazing", "standing", "lying") for b in ("grazing", "standing", "lying")
    ),
}

DEFAULT_HOMOGRAPHY = [[30.0, 5.0, 200.0], [0.0, 15.0, 100.0], [0.0, 0.002, 1.0]]

GRASS = np.array([0.36, 0.52, 0.24])
COAT_COLORS = [
    (0.45, 0.30, 0.18),
    (0.14, 0.11, 0.10),
    (0.86, 0.83, 0.76),
    (0.66, 0.48, 0.30),
]

# Body ellipse (center u, center v, radius u, radius v, tilt rad), head (u, v, radius),
# neck (u, v) and legs as (keypoint, top, foot) in box-normalized coordinates.
# The head side is u = 1; v grows downwards.
_STANDING_LEGS = [
    ("front_leg_left", (0.61, 0.52), (0.60, 0.96)),
    ("front_leg_right", (0.67, 0.52), (0.67, 0.96)),
    ("hind_leg_left", (0.25, 0.52), (0.24, 0.96)),
    ("hind_leg_right", (0.31, 0.52), (0.31, 0.96)),
]
POSE_GEOMETRY = {
    "standing": {
        "body": (0.46, 0.40, 0.30, 0.16, 0.0),
        "head": (0.87, 0.18, 0.09),
        "neck": (0.75, 0.30),
        "legs": _STANDING_LEGS,
    },
    "grazing": {
        "body": (0.44, 0.40, 0.30, 0.16, 0.0),
        "head": (0.88, 0.86, 0.09),
        "neck": (0.77, 0.62),
        "legs": _STANDING_LEGS,
    },
    "lying": {
        "body": (0.48, 0.78, 0.38, 0.14, 0.0),
        "head": (0.88, 0.60, 0.09),
        "neck": (0.80, 0.68),
        "legs": [],
    },
    "riding": {
        "body": (0.44, 0.48, 0.30, 0.14, -0.6),
        "head": (0.86, 0.10, 0.09),
        "neck": (0.74, 0.22),
        "legs": [
            ("front_leg_left", (0.62, 0.34), (0.82, 0.44)),
            ("front_leg_right", (0.66, 0.30), (0.86, 0.40)),
            ("hind_leg_left", (0.24, 0.62), (0.22, 0.97)),
            ("hind_leg_right", (0.30, 0.62), (0.30, 0.97)),
        ],
    },
}

# Interaction layouts: (member_a box, member_b box, facing_a, facing_b) in union-normalized coordinates
INTERACTION_LAYOUTS = {
    "mount": ((0.04, 0.04, 0.62, 0.78), (0.38, 0.38, 0.98, 0.96), 1, 1),
    "conflict": ((0.02, 0.22, 0.54, 0.92), (0.46, 0.18, 0.98, 0.88), 1, -1),
    "interest": ((0.14, 0.42, 0.62, 0.98), (0.36, 0.04, 0.98, 0.56), 1, 1),
}


# ============================================================================
# Random streams
# ============================================================================

def _streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent generators so label draws do not depend on rendering"""
    names = ("action_labels", "interaction_labels", "render", "splits", "gps")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def sample_class_labels(spec: SyntheticSceneSpec, kind: str, n: Optional[int] = None) -> List[str]:
    """
    Draw class labels following spec.class_mix

    Args:
        spec: Scene spec (class_mix and seed)
        kind: "action" or "interaction"
        n: Number of labels (defaults to the spec's sample count for that kind)

    Returns:
        List of class names
    """
    classes = ACTION_CLASSES if kind == "action" else INTERACTION_CLASSES
    if n is None:
        n = spec.n_action_samples if kind == "action" else spec.n_interaction_samples
    rng = _streams(spec.seed)[f"{kind}_labels"]
    indices = rng.choice(len(classes), size=n, p=spec.class_mix.vector(kind))
    return [classes[i] for i in indices]


# ============================================================================
# Rendering
# ============================================================================

def _to_rgb255(color) -> Tuple[int, int, int]:
    return tuple(int(round(255 * min(1.0, max(0.0, c)))) for c in color)


class CowPainter:
    """Draws one animal fitted into a box and reports its skeleton"""

    def __init__(self, box: Tuple[float, float, float, float], pose: str, facing: int, coat):
        self.x0, self.y0, self.x1, self.y1 = box
        self.w = self.x1 - self.x0
        self.h = self.y1 - self.y0
        self.pose = pose
        self.facing = facing
        self.coat = coat
        self.geometry = POSE_GEOMETRY[pose]

    def point(self, u: float, v: float) -> Tuple[float, float]:
        """Box-normalized -> image pixels, mirrored when facing left"""
        if self.facing < 0:
            u = 1.0 - u
        return (self.x0 + u * self.w, self.y0 + v * self.h)

    def _ellipse(self, cu, cv, ru, rv, tilt, n=28) -> List[Tuple[float, float]]:
        cx, cy = self.point(cu, cv)
        rx, ry = ru * self.w, rv * self.h
        angle = tilt * self.facing
        points = []
        for t in np.linspace(0.0, 2 * math.pi, n, endpoint=False):
            dx, dy = rx * math.cos(t), ry * math.sin(t)
            points.append((cx + dx * math.cos(angle) - dy * math.sin(angle),
                           cy + dx * math.sin(angle) + dy * math.cos(angle)))
        return points

    def _buttocks(self) -> Tuple[float, float]:
        cu, cv, ru, _, tilt = self.geometry["body"]
        cx, cy = self.point(cu, cv)
        reach = 0.85 * ru * self.w
        angle = tilt * self.facing
        # Rear end sits opposite the head along the tilted body axis
        return (cx - self.facing * reach * math.cos(angle), cy - self.facing * reach * math.sin(angle))

    def draw(self, draw: ImageDraw.ImageDraw) -> List[list]:
        """
        Paint legs, body, neck and head

        Returns:
            Skeleton rows [name, x, y, confidence] clamped into the box
        """
        coat = np.asarray(self.coat)
        leg_color = _to_rgb255(coat * 0.7)
        leg_width = max(1, int(round(0.06 * self.w)))

        for _, top, foot in self.geometry["legs"]:
            draw.line([self.point(*top), self.point(*foot)], fill=leg_color, width=leg_width)

        draw.polygon(self._ellipse(*self.geometry["body"]), fill=_to_rgb255(coat))

        neck_width = max(1, int(round(0.08 * self.w)))
        body_cu, body_cv = self.geometry["body"][:2]
        neck_start = (body_cu + 0.2, body_cv - 0.02)
        draw.line([self.point(*neck_start), self.point(*self.geometry["neck"])],
                  fill=_to_rgb255(coat * 0.9), width=neck_width)
        draw.line([self.point(*self.geometry["neck"]), self.point(*self.geometry["head"][:2])],
                  fill=_to_rgb255(coat * 0.9), width=neck_width)

        hu, hv, hr = self.geometry["head"]
        draw.polygon(self._ellipse(hu, hv, hr, hr * self.w / self.h * 1.1, 0.0, n=16),
                     fill=_to_rgb255(coat * 0.8))

        return self.skeleton_rows()

    def skeleton_rows(self) -> List[list]:
        rows = []
        body = self.geometry["body"]
        named = [
            ("head", self.point(*self.geometry["head"][:2]), 0.95),
            ("neck", self.point(*self.geometry["neck"]), 0.95),
            ("torso_center", self.point(body[0], body[1]), 0.95),
            ("buttocks", self._buttocks(), 0.9),
        ]
        legs = {name: foot for name, _, foot in self.geometry["legs"]}
        for name in ("front_leg_left", "front_leg_right", "hind_leg_left", "hind_leg_right"):
            if name in legs:
                named.append((name, self.point(*legs[name]), 0.9))
            else:
                # Tucked legs: under the body, barely visible
                u = body[0] + (0.2 if name.startswith("front") else -0.2)
                named.append((name, self.point(u, body[1] + body[3]), 0.3))

        for name, (x, y), confidence in named:
            x = min(max(x, self.x0), self.x1)
            y = min(max(y, self.y0), self.y1)
            rows.append([name, float(x), float(y), confidence])
        return rows


def _background(rng: np.random.Generator, width: int, height: int) -> Image.Image:
    grass = np.clip(GRASS + rng.normal(0.0, 0.03, size=3), 0.0, 1.0)
    return Image.new("RGB", (width, height), _to_rgb255(grass))


def _finish(img: Image.Image, rng: np.random.Generator, noise: float) -> np.ndarray:
    array = np.asarray(img, dtype=np.float64) / 255.0
    if noise > 0:
        array = array + rng.normal(0.0, noise, size=array.shape)
    return quantize(np.clip(array, 0.0, 1.0))


def _coat(rng: np.random.Generator):
    return COAT_COLORS[int(rng.integers(len(COAT_COLORS)))]


def render_action(label: str, size: int, rng: np.random.Generator, noise: float) -> Tuple[np.ndarray, list, list]:
    """
    Render one single-animal crop

    Returns:
        (image, box [x0, y0, x1, y1], skeleton rows)
    """
    img = _background(rng, size, size)
    margin = max(1, int(round(size * rng.uniform(0.03, 0.08))))
    box = (float(margin), float(margin), float(size - margin), float(size - margin))
    facing = 1 if rng.random() < 0.5 else -1

    painter = CowPainter(box, label, facing, _coat(rng))
    rows = painter.draw(ImageDraw.Draw(img))
    return _finish(img, rng, noise), list(box), rows


def _member_actions(label: str, rng: np.random.Generator) -> Tuple[str, str]:
    allowed = sorted(INTERACTION_MEMBER_ACTIONS[label])
    return allowed[int(rng.integers(len(allowed)))]


def _jittered_box(box, rng, width: int, height: int, amount: float = 0.03) -> Tuple[float, float, float, float]:
    """Integer pixel box from a union-normalized box with small random shifts"""
    x0, y0, x1, y1 = (c + rng.uniform(-amount, amount) for c in box)
    x0, x1 = max(0.0, x0), min(1.0, x1)
    y0, y1 = max(0.0, y0), min(1.0, y1)
    return (float(round(x0 * width)), float(round(y0 * height)),
            float(round(x1 * width)), float(round(y1 * height)))


def _around(points, half_w: float, half_h: float, width: int, height: int) -> list:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return [
        float(max(0.0, min(xs) - half_w)), float(max(0.0, min(ys) - half_h)),
        float(min(width, max(xs) + half_w)), float(min(height, max(ys) + half_h)),
    ]


def render_interaction(label: str, size: Tuple[int, int], rng: np.random.Generator, noise: float) -> dict:
    """
    Render one interaction candidate (union crop with two members)

    Returns:
        dict with image, member boxes/skeletons/labels and the focus box
    """
    width, height = size
    img = _background(rng, width, height)
    draw = ImageDraw.Draw(img)
    action_a, action_b = _member_actions(label, rng)

    if label == "no_interaction":
        top_a, top_b = rng.uniform(0.0, 0.35, size=2)
        span_a, span_b = rng.uniform(0.55, 0.65, size=2)
        layout_a = (0.0, top_a, 0.40, top_a + span_a)
        layout_b = (0.60, top_b, 1.0, top_b + span_b)
        facing_a = 1 if rng.random() < 0.5 else -1
        facing_b = 1 if rng.random() < 0.5 else -1
    else:
        layout_a, layout_b, facing_a, facing_b = INTERACTION_LAYOUTS[label]
        if label == "interest" and rng.random() < 0.5:
            facing_b = -1

    mirror = rng.random() < 0.5
    if mirror:
        layout_a = (1.0 - layout_a[2], layout_a[1], 1.0 - layout_a[0], layout_a[3])
        layout_b = (1.0 - layout_b[2], layout_b[1], 1.0 - layout_b[0], layout_b[3])
        facing_a, facing_b = -facing_a, -facing_b

    box_a = _jittered_box(layout_a, rng, width, height)
    box_b = _jittered_box(layout_b, rng, width, height)

    painter_a = CowPainter(box_a, action_a, facing_a, _coat(rng))
    painter_b = CowPainter(box_b, action_b, facing_b, _coat(rng))

    # The mounted animal is underneath the rider
    rows_b = painter_b.draw(draw)
    rows_a = painter_a.draw(draw)

    focus_box = None
    head_a = painter_a.point(*POSE_GEOMETRY[action_a]["head"][:2])
    reach = 0.12 * min(width, height)
    if label == "mount":
        overlap = BoundingBox.from_list(box_a).intersection_area(BoundingBox.from_list(box_b))
        if overlap > 0:
            focus_box = [max(box_a[0], box_b[0]), max(box_a[1], box_b[1]),
                         min(box_a[2], box_b[2]), min(box_a[3], box_b[3])]
    elif label == "conflict":
        head_b = painter_b.point(*POSE_GEOMETRY[action_b]["head"][:2])
        focus_box = _around([head_a, head_b], reach, reach, width, height)
    elif label == "interest":
        focus_box = _around([head_a], reach, reach, width, height)

    return {
        "image": _finish(img, rng, noise),
        "member_a": {"box": list(box_a), "skeleton": rows_a, "label": action_a},
        "member_b": {"box": list(box_b), "skeleton": rows_b, "label": action_b},
        "focus_box": focus_box,
    }


# ============================================================================
# Dataset generation
# ============================================================================

def _assign_splits(labels: List[str], spec: SyntheticSceneSpec, rng: np.random.Generator) -> List[str]:
    """Stratified train/val/test assignment; every populated class keeps a training sample"""
    splits = ["train"] * len(labels)
    for name in sorted(set(labels)):
        indices = [i for i, label in enumerate(labels) if label == name]
        order = rng.permutation(len(indices))
        n = len(indices)
        n_test = int(math.floor(n * spec.test_fraction + 0.5))
        n_val = int(math.floor(n * spec.val_fraction + 0.5))
        while n_test + n_val >= n and (n_test or n_val):
            if n_test >= n_val:
                n_test -= 1
            else:
                n_val -= 1
        for rank, position in enumerate(order):
            if rank < n_test:
                splits[indices[position]] = "test"
            elif rank < n_test + n_val:
                splits[indices[position]] = "val"
    return splits


def generate_synthetic_dataset(spec: SyntheticSceneSpec) -> DatasetManifest:
    """
    Generate a labeled synthetic dataset

    The manifest holds the rendered images in memory (manifest.images) until
    written with manifest.write_dataset. Output is a pure function of spec.

    Args:
        spec: Scene spec

    Returns:
        DatasetManifest with action and interaction records
    """
    if not isinstance(spec, SyntheticSceneSpec):
        try:
            spec = SyntheticSceneSpec.model_validate(spec)
        except Exception as e:
            raise InvalidSpec(f"invalid synthetic scene spec: {e}")

    streams = _streams(spec.seed)
    render_rng = streams["render"]

    action_labels = sample_class_labels(spec, "action")
    interaction_labels = sample_class_labels(spec, "interaction")
    action_splits = _assign_splits(action_labels, spec, streams["splits"])
    interaction_splits = _assign_splits(interaction_labels, spec, streams["splits"])

    records = []
    images = {}

    for index, (label, split) in enumerate(zip(action_labels, action_splits)):
        image, box, rows = render_action(label, spec.action_image_size, render_rng, spec.image_noise)
        sample_id = f"act-{index:05d}"
        path = f"images/{sample_id}.png"
        images[path] = image
        records.append(ActionRecord(sample_id=sample_id, image=path, box=box, skeleton=rows,
                                    label=label, split=split))

    for index, (label, split) in enumerate(zip(interaction_labels, interaction_splits)):
        rendered = render_interaction(label, spec.interaction_image_size, render_rng, spec.image_noise)
        sample_id = f"int-{index:05d}"
        path = f"images/{sample_id}.png"
        images[path] = rendered["image"]
        width, height = spec.interaction_image_size
        records.append(InteractionRecord(
            sample_id=sample_id,
            image=path,
            box=[0.0, 0.0, float(width), float(height)],
            label=label,
            member_a=rendered["member_a"],
            member_b=rendered["member_b"],
            focus_box=rendered["focus_box"],
            split=split,
        ))

    header = ManifestHeader(metadata={
        "generator": "synthetic",
        "seed": spec.seed,
        "n_action_samples": spec.n_action_samples,
        "n_interaction_samples": spec.n_interaction_samples,
        "spec": spec.model_dump_json(),
    })
    manifest = DatasetManifest(header=header, records=records, images=images)
    logger.info(
        f"Generated {len(action_labels)} action and {len(interaction_labels)} interaction samples "
        f"(seed {spec.seed})"
    )
    return manifest


def check_cooccurrence(manifest: DatasetManifest) -> ValidationResult:
    """
    Verify member action labels against INTERACTION_MEMBER_ACTIONS

    Records whose members are unlabeled are skipped.

    Returns:
        ValidationResult naming the first inconsistent record
    """
    for index, record in enumerate(manifest.records):
        if record.kind != "interaction":
            continue
        pair = (record.member_a.label, record.member_b.label)
        if None in pair:
            continue
        if pair not in INTERACTION_MEMBER_ACTIONS[record.label]:
            return ValidationResult(
                valid=False,
                error="COOCCURRENCE",
                message=f"{record.label} record '{record.sample_id}' has member actions {pair}",
                record_index=index,
                field="member_a.label",
                offending_ids=[record.sample_id],
            )
    return ValidationResult(valid=True)


# ============================================================================
# GPS scene
# ============================================================================

def _grid_bases(spec: SyntheticSceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Animal home positions on a grid whose spacing keeps moving animals apart"""
    spacing = spec.min_spacing_m + 2.0 * spec.motion_amplitude_m
    cols = int(math.ceil(math.sqrt(spec.n_cattle)))
    rows = int(math.ceil(spec.n_cattle / cols))
    usable_w = spec.arena_size[0] - 2.0 * spec.motion_amplitude_m
    usable_h = spec.arena_size[1] - 2.0 * spec.motion_amplitude_m
    if (cols - 1) * spacing > usable_w or (rows - 1) * spacing > usable_h:
        raise InvalidSpec(
            f"arena {spec.arena_size[0]}x{spec.arena_size[1]} m cannot hold {spec.n_cattle} animals "
            f"{spec.min_spacing_m} m apart"
        )
    slack_x = usable_w - (cols - 1) * spacing
    slack_y = usable_h - (rows - 1) * spacing
    origin = np.array([
        spec.motion_amplitude_m + rng.uniform(0.0, slack_x),
        spec.motion_amplitude_m + rng.uniform(0.0, slack_y),
    ])
    cells = rng.permutation(rows * cols)[:spec.n_cattle]
    return np.array([origin + spacing * np.array([c % cols, c // cols]) for c in cells], dtype=np.float64)


def _project(H: np.ndarray, points: np.ndarray) -> np.ndarray:
    homogeneous = np.hstack([points, np.ones((len(points), 1))]) @ H.T
    return homogeneous[:, :2] / homogeneous[:, 2:3]


def generate_synthetic_gps_scene(
    spec: SyntheticSceneSpec,
    duration: float,
    rate: float,
    homography: Optional[Homography] = None,
    box_size: Tuple[float, float] = (40.0, 30.0),
) -> SyntheticGpsScene:
    """
    Simulate GPS collars plus the tracker's image-plane tracklets of the same animals

    Args:
        spec: Scene spec (n_cattle, arena, noise, spacing, seed)
        duration: Seconds simulated
        rate: Fixes (and frames) per second
        homography: Ground -> image map of the camera (default DEFAULT_HOMOGRAPHY)
        box_size: Tracklet box (width, height) in pixels

    Returns:
        SyntheticGpsScene with shuffled track ids and the truth mapping
    """
    if not duration > 0 or not rate > 0:
        raise InvalidSpec(f"duration and rate must be positive, got duration={duration}, rate={rate}")

    n_fixes = int(round(duration * rate))
    if n_fixes < 1:
        raise InvalidSpec(f"duration {duration} s at {rate} Hz yields no fixes")

    homography = homography or Homography(H=DEFAULT_HOMOGRAPHY)
    H = homography.matrix
    rng = _streams(spec.seed)["gps"]

    bases = _grid_bases(spec, rng)
    times = np.arange(n_fixes, dtype=np.float64) / rate
    amplitude = spec.motion_amplitude_m

    gps_tracks, truth_tracks, tracklets = [], [], []
    track_numbers = rng.permutation(spec.n_cattle)
    truth = {}

    for index, base in enumerate(bases):
        omega = rng.uniform(0.05, 0.2, size=2)
        phase = rng.uniform(0.0, 2 * math.pi, size=2)
        path = base + amplitude * np.stack([
            np.sin(omega[0] * times + phase[0]),
            np.cos(omega[1] * times + phase[1]),
        ], axis=1)
        noisy = path + rng.normal(0.0, spec.gps_noise_sigma, size=path.shape) if spec.gps_noise_sigma > 0 else path

        cattle_id = f"cow-{index:02d}"
        truth_tracks.append(GpsTrack(cattle_id=cattle_id, fixes=[(float(t), float(x), float(y))
                                                                for t, (x, y) in zip(times, path)]))
        gps_tracks.append(GpsTrack(cattle_id=cattle_id, fixes=[(float(t), float(x), float(y))
                                                              for t, (x, y) in zip(times, noisy)]))

        pixels = _project(H, path)
        bw, bh = box_size
        track_id = f"trk-{int(track_numbers[index]):02d}"
        tracklets.append(Tracklet(track_id=track_id, frames=[
            (float(t), float(u - bw / 2), float(v - bh), float(u + bw / 2), float(v))
            for t, (u, v) in zip(times, pixels)
        ]))
        truth[track_id] = cattle_id

    tracklets.sort(key=lambda tr: tr.track_id)

    # Calibration points: arena corners, center and three random interior points
    arena_w, arena_h = spec.arena_size
    ground = [(0.0, 0.0), (arena_w, 0.0), (arena_w, arena_h), (0.0, arena_h), (arena_w / 2, arena_h / 2)]
    ground += [tuple(rng.uniform(0.1, 0.9, size=2) * np.array([arena_w, arena_h])) for _ in range(3)]
    ground = np.array(ground, dtype=np.float64)
    image_points = _project(H, ground)
    correspondences = [(float(x), float(y), float(u), float(v)) for (x, y), (u, v) in zip(ground, image_points)]

    logger.info(f"Simulated {spec.n_cattle} animals for {duration} s at {rate} Hz (sigma {spec.gps_noise_sigma} m)")
    return SyntheticGpsScene(
        gps_tracks=gps_tracks,
        truth_tracks=truth_tracks,
        tracklets=tracklets,
        homography=homography,
        correspondences=correspondences,
        truth=truth,
    )


def generate_synthetic_gps_tracks(spec: SyntheticSceneSpec, duration: float, rate: float) -> List[GpsTrack]:
    """One noisy GPS track per animal; see generate_synthetic_gps_scene for the paired tracklets"""
    return generate_synthetic_gps_scene(spec, duration, rate).gps_tracks
