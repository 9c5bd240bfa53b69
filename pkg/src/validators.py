"""
Validation logic for CattleAct manifests
Checks path resolvability, id uniqueness, geometry and split leakage before any training step
"""
import logging
from pathlib import Path
from typing import Iterable, Optional

from .schemas import DatasetManifest, ValidationResult

logger = logging.getLogger(__name__)


def validate_manifest(manifest: DatasetManifest, check_paths: bool = True) -> ValidationResult:
    """
    Validate a loaded manifest against the rules the schema alone cannot express

    Checks, in record order:
    1. sample_id unique across the manifest
    2. every referenced image resolvable (on disk under root, or held in memory)
    3. interaction member boxes inside the union box extent

    Args:
        manifest: Parsed manifest
        check_paths: Whether image paths must resolve

    Returns:
        ValidationResult naming the first offending record and field
    """
    seen = set()
    for index, record in enumerate(manifest.records):
        if record.sample_id in seen:
            return ValidationResult(
                valid=False,
                error="SCHEMA_VIOLATION",
                message=f"Duplicate sample_id '{record.sample_id}'",
                record_index=index,
                field="sample_id",
                offending_ids=[record.sample_id],
            )
        seen.add(record.sample_id)

        if check_paths and record.image not in manifest.images:
            image_path = (manifest.root or Path.cwd()) / record.image
            if not image_path.exists():
                return ValidationResult(
                    valid=False,
                    error="MISSING_FILE",
                    message=f"Image not found: {image_path}",
                    record_index=index,
                    field="image",
                )

        if record.kind == "interaction":
            union = record.bbox
            extent = union.translate(-union.x_min, -union.y_min)
            for name in ("member_a", "member_b"):
                member = getattr(record, name)
                if not extent.contains(member.bbox):
                    return ValidationResult(
                        valid=False,
                        error="SCHEMA_VIOLATION",
                        message=(
                            f"{name} box {member.box} lies outside the union image "
                            f"{extent.width:g}x{extent.height:g}"
                        ),
                        record_index=index,
                        field=f"{name}.box",
                    )

    return ValidationResult(valid=True)


def check_no_leakage(
    train_ids: Iterable[str],
    held_out_ids: Iterable[str],
    held_out_name: Optional[str] = "val/test",
    what: str = "sample ids",
) -> ValidationResult:
    """
    Verify that no held-out key is used for training

    Args:
        train_ids: Keys (sample ids or source images) that appear in training batches
        held_out_ids: Keys of the validation or test split
        held_out_name: Split name for the message
        what: What the keys are, for the message

    Returns:
        ValidationResult listing the intersecting keys
    """
    overlap = sorted(set(train_ids) & set(held_out_ids))
    if overlap:
        logger.error(f"{len(overlap)} {held_out_name} {what} found in training data")
        return ValidationResult(
            valid=False,
            error="DATA_LEAKAGE",
            message=f"{len(overlap)} {held_out_name} {what} appear in training data: {overlap[:5]}",
            offending_ids=overlap,
        )
    return ValidationResult(valid=True)


def check_split_sources(manifest: DatasetManifest, kind: str) -> ValidationResult:
    """
    Leakage check of one record kind: train vs val and train vs test

    Sample ids and source image paths are both compared, so two records cut
    from the same image cannot sit on opposite sides of a split.
    """
    train = manifest.select(kind, "train")
    for split in ("val", "test"):
        held_out = manifest.select(kind, split)
        for what, key in (("sample ids", lambda r: r.sample_id), ("source images", lambda r: r.image)):
            result = check_no_leakage(map(key, train), map(key, held_out), split, what)
            if not result.valid:
                return result
    return ValidationResult(valid=True)
