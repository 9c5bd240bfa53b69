"""
Tests for the action/interaction encoders and the fusion block.

Test cases:
1. Encoders map crops of any size to N x D embeddings
2. Fusion output is 3 x D and flattens to 3D; batched fusion matches per-sample fusion
3. Swapping the two action rows swaps the corresponding output rows
4. Large-kernel encoder's first layer sees interaction_kernel_size pixels
5. Same seed → identical parameters; different seed → different
6. Invalid inputs → ShapeMismatch / DimensionMismatch; invalid config → ValidationError
"""
import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.encoders import (
    CattleActModel,
    action_probabilities,
    channel_statistics,
    encode_action,
    encode_interaction,
    interaction_probabilities,
)
from src.errors import DimensionMismatch, ShapeMismatch
from src.manifest import load_samples
from src.schemas import EncoderConfig
from tests.conftest import tiny_encoder


def random_images(n: int, height: int, width: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [rng.uniform(size=(height, width, 3)).astype(np.float32) for _ in range(n)]


class TestEncoders:
    """f_act / f_int"""

    def test_action_embedding_shape(self, encoder_config):
        """5 crops of 20x30 → 5 x 16"""
        model = CattleActModel(encoder_config)
        z = encode_action(model, random_images(5, 20, 30))
        assert z.shape == (5, 16)
        assert np.all(np.isfinite(z))

    def test_interaction_embedding_shape(self, encoder_config):
        """3 union crops of 48x64 → 3 x 16"""
        model = CattleActModel(encoder_config)
        assert encode_interaction(model, random_images(3, 48, 64)).shape == (3, 16)

    def test_conv_action_backbone(self):
        """action_backbone conv → same embedding shape"""
        model = CattleActModel(tiny_encoder(action_backbone="conv"))
        assert encode_action(model, random_images(2, 32, 32)).shape == (2, 16)

    def test_empty_input(self, encoder_config):
        """No images → 0 x D"""
        model = CattleActModel(encoder_config)
        assert encode_action(model, []).shape == (0, 16)

    def test_large_kernel_receptive_field(self):
        """interaction_kernel_size 16 → first conv kernel 16"""
        model = CattleActModel(tiny_encoder(interaction_kernel_size=16))
        assert model.interaction_encoder.first_layer_receptive_field == 16

    def test_probabilities_sum_to_one(self, encoder_config, tiny_manifest):
        """Head softmax rows sum to 1 for actions and interactions"""
        model = CattleActModel(encoder_config)
        actions = action_probabilities(model, load_samples(tiny_manifest, "action")[:4])
        interactions = interaction_probabilities(model, load_samples(tiny_manifest, "interaction")[:4])
        assert actions.shape == (4, 4)
        assert interactions.shape == (4, 4)
        np.testing.assert_allclose(actions.sum(axis=1), 1.0, atol=1e-5)
        np.testing.assert_allclose(interactions.sum(axis=1), 1.0, atol=1e-5)

    def test_preprocess_rejects_grayscale(self, encoder_config):
        """H x W array → ShapeMismatch"""
        model = CattleActModel(encoder_config)
        with pytest.raises(ShapeMismatch):
            model.preprocess([np.zeros((32, 32), dtype=np.float32)])

    def test_wrong_tensor_size(self, encoder_config):
        """N x 3 x 16 x 16 tensor for input_size 32 → ShapeMismatch"""
        model = CattleActModel(encoder_config)
        with pytest.raises(ShapeMismatch):
            model.encode_action(torch.zeros(1, 3, 16, 16))


class TestFusion:
    """Self-attention fusion"""

    def test_fusion_shapes(self):
        """Default D = 256 → z_out 3 x 256, z_flat 768"""
        model = CattleActModel(EncoderConfig()).eval()
        z = torch.randn(256)
        state = model.fuse(z, torch.randn(256), torch.randn(256))
        assert tuple(state.z_in.shape) == (3, 256)
        assert tuple(state.z_out.shape) == (3, 256)
        assert tuple(state.z_flat.shape) == (768,)
        assert tuple(model.classify_interaction(state).shape) == (4,)

    @torch.no_grad()
    def test_swap_members_swaps_rows(self, encoder_config):
        """fuse(i, a, b) rows (0, 1, 2) == fuse(i, b, a) rows (0, 2, 1)"""
        model = CattleActModel(encoder_config).eval()
        gen = torch.Generator().manual_seed(0)
        z_int, z_a, z_b = (torch.randn(16, generator=gen) for _ in range(3))
        forward = model.fuse(z_int, z_a, z_b).z_out
        swapped = model.fuse(z_int, z_b, z_a).z_out
        torch.testing.assert_close(forward[0], swapped[0], rtol=0, atol=1e-6)
        torch.testing.assert_close(forward[1], swapped[2], rtol=0, atol=1e-6)
        torch.testing.assert_close(forward[2], swapped[1], rtol=0, atol=1e-6)

    @torch.no_grad()
    def test_batched_matches_single(self, encoder_config):
        """Row k of a batched fusion == fusion of sample k alone"""
        model = CattleActModel(encoder_config).eval()
        gen = torch.Generator().manual_seed(1)
        z_int, z_a, z_b = (torch.randn(4, 16, generator=gen) for _ in range(3))
        batched = model.fuse(z_int, z_a, z_b).z_flat
        for k in range(4):
            single = model.fuse(z_int[k], z_a[k], z_b[k]).z_flat
            torch.testing.assert_close(batched[k], single, rtol=0, atol=1e-5)

    def test_dimension_mismatch(self, encoder_config):
        """Action latent of dim 8 with D = 16 → DimensionMismatch"""
        model = CattleActModel(encoder_config)
        with pytest.raises(DimensionMismatch):
            model.fuse(torch.randn(16), torch.randn(8), torch.randn(16))

    def test_classify_action_dimension(self, encoder_config):
        """Embedding of dim 10 → DimensionMismatch"""
        model = CattleActModel(encoder_config)
        with pytest.raises(DimensionMismatch):
            model.classify_action(torch.randn(2, 10))


class TestInitialization:
    """Seeded construction"""

    def test_same_seed_same_parameters(self):
        """Two models with seed 3 → identical state dicts"""
        first = CattleActModel(tiny_encoder(seed=3)).state_dict()
        second = CattleActModel(tiny_encoder(seed=3)).state_dict()
        assert all(torch.equal(first[name], second[name]) for name in first)

    def test_different_seed(self):
        """Seeds 3 and 4 → different projection weights"""
        first = CattleActModel(tiny_encoder(seed=3))
        second = CattleActModel(tiny_encoder(seed=4))
        assert not torch.equal(first.action_encoder.proj.weight, second.action_encoder.proj.weight)

    def test_global_rng_untouched(self):
        """Building a model does not advance the global torch generator"""
        torch.manual_seed(123)
        expected = torch.rand(1)
        torch.manual_seed(123)
        CattleActModel(tiny_encoder())
        assert torch.equal(torch.rand(1), expected)


class TestConfig:
    """EncoderConfig validation and normalization stats"""

    def test_heads_must_divide_dim(self):
        """D 10 with 4 heads → ValidationError"""
        with pytest.raises(ValidationError):
            EncoderConfig(embedding_dim=10, n_attention_heads=4)

    def test_patch_larger_than_input(self):
        """patch 64 on input 32 → ValidationError"""
        with pytest.raises(ValidationError):
            EncoderConfig(input_size=32, patch_size=64, interaction_kernel_size=8)

    def test_channel_statistics(self):
        """Constant images → mean = value, std = 0"""
        images = [np.full((8, 8, 3), 0.25, dtype=np.float32)] * 3
        mean, std = channel_statistics(images)
        assert mean == pytest.approx((0.25, 0.25, 0.25))
        assert std == pytest.approx((0.0, 0.0, 0.0))
