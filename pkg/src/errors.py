"""
Exception hierarchy for CattleAct
Every error carries a machine-readable code that the CLI reports as an ErrorResponse
"""
from typing import List, Optional


class CattleActError(Exception):
    """Base error with a stable code and a human-readable message"""
    code = "INTERNAL_ERROR"
    exit_code = 1

    def __init__(self, message: str, suggested_files: Optional[List[str]] = None):
        super().__init__(message)
        self.message = message
        self.suggested_files = suggested_files


class UsageError(CattleActError):
    """Configuration or usage problem (CLI exit code 2)"""
    code = "USAGE_ERROR"
    exit_code = 2


# data_model

class MissingFile(UsageError):
    code = "MISSING_FILE"


class SchemaViolation(UsageError):
    code = "SCHEMA_VIOLATION"

    def __init__(self, message: str, record_index: Optional[int] = None, field: Optional[str] = None):
        if record_index is not None:
            location = f"record {record_index}" + (f", field '{field}'" if field else "")
            message = f"{location}: {message}"
        super().__init__(message)
        self.record_index = record_index
        self.field = field


class InvalidSpec(UsageError):
    code = "INVALID_SPEC"


class DegenerateBox(CattleActError):
    code = "DEGENERATE_BOX"


# encoders / checkpoints

class ShapeMismatch(CattleActError):
    code = "SHAPE_MISMATCH"


class DimensionMismatch(CattleActError):
    code = "DIMENSION_MISMATCH"


class CheckpointMismatch(UsageError):
    code = "CHECKPOINT_MISMATCH"


# losses

class EmptyBatch(CattleActError):
    code = "EMPTY_BATCH"


class ZeroNormEmbedding(CattleActError):
    code = "ZERO_NORM_EMBEDDING"


class ZeroCount(CattleActError):
    code = "ZERO_COUNT"


class IndexOutOfRange(CattleActError):
    code = "INDEX_OUT_OF_RANGE"


# training

class InsufficientClassDiversity(UsageError):
    code = "INSUFFICIENT_CLASS_DIVERSITY"


class NonFiniteLoss(CattleActError):
    code = "NON_FINITE_LOSS"

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class StageOrderError(UsageError):
    code = "STAGE_ORDER"


# association

class DegenerateConfiguration(CattleActError):
    code = "DEGENERATE_CONFIGURATION"


class InsufficientPoints(UsageError):
    code = "INSUFFICIENT_POINTS"


class NoTemporalOverlap(CattleActError):
    code = "NO_TEMPORAL_OVERLAP"


# evaluation

class LengthMismatch(CattleActError):
    code = "LENGTH_MISMATCH"


class UnknownLabel(CattleActError):
    code = "UNKNOWN_LABEL"


class PatchLargerThanImage(UsageError):
    code = "PATCH_LARGER_THAN_IMAGE"
