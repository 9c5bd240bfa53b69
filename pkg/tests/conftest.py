"""
Shared fixtures: a tiny synthetic dataset and a tiny encoder architecture
small enough for CPU training smoke tests.
"""
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.manifest import write_dataset
from src.schemas import ClassMix, EncoderConfig, SyntheticSceneSpec
from src.synthetic import generate_synthetic_dataset


UNIFORM_MIX = {
    "action": {"grazing": 0.25, "standing": 0.25, "lying": 0.25, "riding": 0.25},
    "interaction": {"no_interaction": 0.25, "interest": 0.25, "conflict": 0.25, "mount": 0.25},
}


def tiny_spec(seed: int = 7, **overrides) -> SyntheticSceneSpec:
    """Small balanced scene spec"""
    values = dict(
        seed=seed,
        n_action_samples=48,
        n_interaction_samples=48,
        action_image_size=32,
        interaction_image_size=(64, 48),
        class_mix=ClassMix.model_validate(UNIFORM_MIX),
    )
    values.update(overrides)
    return SyntheticSceneSpec(**values)


def tiny_encoder(**overrides) -> EncoderConfig:
    values = dict(
        input_size=32,
        embedding_dim=16,
        n_attention_heads=2,
        patch_size=8,
        interaction_kernel_size=8,
        width=16,
        depth=1,
    )
    values.update(overrides)
    return EncoderConfig(**values)


@pytest.fixture(scope="session")
def tiny_manifest():
    """In-memory tiny dataset (images held in manifest.images)"""
    return generate_synthetic_dataset(tiny_spec())


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    """Tiny dataset written to disk; returns the directory holding manifest.jsonl"""
    out_dir = tmp_path_factory.mktemp("dataset")
    write_dataset(generate_synthetic_dataset(tiny_spec()), out_dir)
    return out_dir


@pytest.fixture
def encoder_config():
    return tiny_encoder()
