"""
Dataset manifest I/O and crop geometry
A manifest is UTF-8 JSON Lines: one header line, then one record per line
"""
import json
import logging
from pathlib import Path
from typing import List, Tuple, Union

from pydantic import TypeAdapter, ValidationError

from .errors import DegenerateBox, MissingFile, SchemaViolation
from .file_matcher import require_file
from .image_processor import crop, load_png, save_png
from .schemas import (
    ActionRecord,
    ActionSample,
    BoundingBox,
    DatasetManifest,
    InteractionSample,
    ManifestHeader,
    ManifestRecord,
    Skeleton,
)
from .validators import validate_manifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
MIN_CROP_SIDE = 8

_record_adapter = TypeAdapter(ManifestRecord)


def _error_location(error: ValidationError) -> str:
    """Dotted field path of the first pydantic error, without the union tag"""
    loc = [str(part) for part in error.errors()[0]["loc"]]
    if loc and loc[0] in ("action", "interaction"):
        loc = loc[1:]
    return ".".join(loc)


def _error_message(error: ValidationError) -> str:
    return error.errors()[0]["msg"]


def parse_manifest(text: str, root: Path = None) -> DatasetManifest:
    """
    Parse manifest text into validated records

    Args:
        text: JSON Lines content
        root: Directory image paths resolve against

    Returns:
        DatasetManifest (paths are not checked here)
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise SchemaViolation("manifest is empty; the first line must be the manifest header")

    try:
        header = ManifestHeader.model_validate_json(lines[0])
    except ValidationError as e:
        raise SchemaViolation(f"invalid manifest header ({_error_location(e)}): {_error_message(e)}")

    records = []
    for index, line in enumerate(lines[1:]):
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"invalid JSON: {e.msg}", record_index=index)
        try:
            records.append(_record_adapter.validate_python(payload))
        except ValidationError as e:
            raise SchemaViolation(_error_message(e), record_index=index, field=_error_location(e))

    return DatasetManifest(header=header, records=records, root=root)


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    """
    Load and validate a manifest file

    Args:
        path: manifest.jsonl path, or a directory containing one

    Returns:
        DatasetManifest with root set to the manifest's directory
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    require_file(path, "Manifest")

    manifest = parse_manifest(path.read_text(encoding="utf-8"), root=path.parent)

    result = validate_manifest(manifest)
    if not result.valid:
        if result.error == "MISSING_FILE":
            raise MissingFile(f"record {result.record_index}: {result.message}")
        raise SchemaViolation(result.message, record_index=result.record_index, field=result.field)

    logger.info(f"Loaded {len(manifest.records)} records from {path}")
    return manifest


def serialize_manifest(manifest: DatasetManifest) -> bytes:
    """Byte-stable JSON Lines encoding of a manifest"""
    lines = [manifest.header.model_dump_json()]
    lines.extend(record.model_dump_json() for record in manifest.records)
    return ("\n".join(lines) + "\n").encode("utf-8")


def save_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize_manifest(manifest))
    return path


def write_dataset(manifest: DatasetManifest, out_dir: Union[str, Path]) -> Path:
    """
    Write in-memory images and the manifest under out_dir

    Args:
        manifest: Manifest whose images dict holds the generated crops
        out_dir: Output directory

    Returns:
        Path of the written manifest file
    """
    out_dir = Path(out_dir)
    for relative_path in sorted(manifest.images):
        save_png(out_dir / relative_path, manifest.images[relative_path])
    manifest.root = out_dir
    path = save_manifest(manifest, out_dir / MANIFEST_NAME)
    logger.info(f"Wrote {len(manifest.records)} records and {len(manifest.images)} images to {out_dir}")
    return path


# ============================================================================
# Samples
# ============================================================================

def _record_image(manifest: DatasetManifest, relative_path: str):
    if relative_path in manifest.images:
        return manifest.images[relative_path]
    return load_png((manifest.root or Path.cwd()) / relative_path)


def load_sample(manifest: DatasetManifest, record) -> Union[ActionSample, InteractionSample]:
    """
    Materialize one manifest record with its image

    Args:
        manifest: Owning manifest (image cache and root)
        record: ActionRecord or InteractionRecord

    Returns:
        ActionSample or InteractionSample
    """
    image = _record_image(manifest, record.image)

    if isinstance(record, ActionRecord):
        return ActionSample(
            sample_id=record.sample_id,
            image=image,
            box=record.bbox,
            skeleton=Skeleton.from_rows(record.skeleton),
            label=record.label,
        )

    members = [
        ActionSample(
            sample_id=f"{record.sample_id}/{suffix}",
            image=image,
            box=member.bbox,
            skeleton=Skeleton.from_rows(member.skeleton),
            label=member.label,
        )
        for suffix, member in (("a", record.member_a), ("b", record.member_b))
    ]
    return InteractionSample(
        sample_id=record.sample_id,
        union_image=image,
        member_a=members[0],
        member_b=members[1],
        label=record.label,
        focus_box=BoundingBox.from_list(record.focus_box) if record.focus_box else None,
    )


def load_samples(manifest: DatasetManifest, kind: str, split: str = None) -> list:
    """All samples of one kind (and optionally one split), in manifest order"""
    return [load_sample(manifest, record) for record in manifest.select(kind, split)]


# ============================================================================
# Crop geometry
# ============================================================================

def crop_member(union_image, member: ActionSample, sample_id: str = "") -> ActionSample:
    """
    Cut one member out of the union image at its box

    The crop window is the box rounded to whole pixels; the skeleton is
    translated by the window origin so keypoints stay on the same pixels.
    """
    height, width = union_image.shape[:2]
    x0, y0, x1, y1 = member.box.pixel_bounds()
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(width, x1), min(height, y1)

    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise DegenerateBox(f"member box {member.box.to_list()} has zero pixel area")
    if x1 - x0 < MIN_CROP_SIDE or y1 - y0 < MIN_CROP_SIDE:
        raise DegenerateBox(
            f"member box {member.box.to_list()} gives a {x1 - x0}x{y1 - y0} crop; "
            f"crops must be at least {MIN_CROP_SIDE}x{MIN_CROP_SIDE}"
        )

    return ActionSample(
        sample_id=sample_id or member.sample_id,
        image=crop(union_image, (x0, y0, x1, y1)),
        box=BoundingBox(x_min=0.0, y_min=0.0, x_max=float(x1 - x0), y_max=float(y1 - y0)),
        skeleton=member.skeleton.translated(-x0, -y0),
        label=member.label,
    )


def split_interaction_crop(sample: InteractionSample) -> Tuple[ActionSample, ActionSample]:
    """
    Divide an interaction candidate into its two member action crops

    Args:
        sample: Interaction sample whose member boxes are in union-image coordinates

    Returns:
        (crop_a, crop_b) with skeletons in crop-local coordinates
    """
    crop_a = crop_member(sample.union_image, sample.member_a, f"{sample.sample_id}/a")
    crop_b = crop_member(sample.union_image, sample.member_b, f"{sample.sample_id}/b")
    return crop_a, crop_b


def split_batch(samples: List[InteractionSample]) -> Tuple[List[ActionSample], List[ActionSample]]:
    """split_interaction_crop over a batch"""
    pairs = [split_interaction_crop(s) for s in samples]
    return [p[0] for p in pairs], [p[1] for p in pairs]
