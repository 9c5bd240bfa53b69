"""
CattleAct configuration
Supports overrides via CATTLEACT_* environment variables or config.json
"""
import json
import logging
from pathlib import Path
from typing import Literal, Optional, Type, TypeVar, Union
from pydantic import BaseModel, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import InvalidSpec
from .file_matcher import require_file

logger = logging.getLogger(__name__)


class Config(BaseSettings):
    """Process-wide settings using Pydantic BaseSettings"""

    model_config = SettingsConfigDict(
        env_prefix='CATTLEACT_',
        env_file='.env',
        env_file_encoding='utf-8',
        case_sensitive=False,
        extra='ignore'
    )

    # Reproducibility
    seed: Optional[int] = None  # CATTLEACT_SEED overrides every command config seed
    num_threads: int = 1
    device: Literal["cpu", "cuda"] = "cpu"

    # Logging
    log_level: str = "INFO"
    log_file_name: str = "cattleact.log"

    # Augmentation
    protected_confidence: float = 0.5
    cutout_probability: float = 0.5
    flip_probability: float = 0.5

    # Association
    pairing_gap_threshold: float = 0.1  # fraction of the pair's mean box diagonal
    time_tolerance_s: float = 2.0
    assignment_sentinel: float = 1e9

    # Evaluation
    occlusion_patch_size: int = 16
    occlusion_stride: int = 8
    knn_k: int = 5

    # Output
    png_compress_level: int = 6

    def model_post_init(self, __context) -> None:
        """Load additional config from config.json if exists"""
        config_path = Path(__file__).parent.parent / "config.json"

        if not config_path.exists():
            return

        try:
            with open(config_path, 'r') as f:
                config_data = json.load(f)

            # Update from file (only if not set by environment variables)
            for key, value in config_data.items():
                if hasattr(self, key):
                    field_info = type(self).model_fields.get(key)
                    if field_info and getattr(self, key) == field_info.default:
                        setattr(self, key, value)

        except json.JSONDecodeError as e:
            logger.warning(f"Invalid JSON in config file {config_path}: {e}. Using default values.")
        except Exception as e:
            logger.warning(f"Failed to load config file {config_path}: {e}. Using default values.")


def resolve_seed(seed: int, override: Optional[int] = None) -> int:
    """Seed precedence: explicit override (--seed), then CATTLEACT_SEED, then the command config"""
    if override is not None:
        return override
    return config.seed if config.seed is not None else seed


ModelT = TypeVar("ModelT", bound=BaseModel)


def load_json_model(path: Union[str, Path], model_cls: Type[ModelT], what: str = "Config") -> ModelT:
    """
    Load a command config (scene spec, pretrain/joint config) from a JSON file

    Args:
        path: JSON file path
        model_cls: Pydantic model to validate against
        what: Kind of file for error messages

    Returns:
        Validated model instance
    """
    path = require_file(path, what)

    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InvalidSpec(f"{what} {path} is not valid JSON (line {e.lineno}, column {e.colno}): {e.msg}")

    try:
        return model_cls.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise InvalidSpec(f"{what} {path}: key '{key}': {first['msg']}")


# Global configuration instance
config = Config()
