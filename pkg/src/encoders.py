"""
Representation stack
Action encoder, large-kernel interaction encoder, multi-head self-attention fusion and classification heads
"""
import logging
import math
from typing import List, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict

from .errors import DimensionMismatch, ShapeMismatch
from .manifest import split_batch
from .schemas import ACTION_CLASSES, INTERACTION_CLASSES, ActionSample, EncoderConfig, InteractionSample

logger = logging.getLogger(__name__)


class FusionState(BaseModel):
    """Stacked latents before and after self-attention; rows are (interaction, member_a, member_b)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    z_in: torch.Tensor
    z_out: torch.Tensor
    z_flat: torch.Tensor


# ============================================================================
# Backbones
# ============================================================================

class PatchAttentionEncoder(nn.Module):
    """Small vision transformer: patch embedding, class token, pre-norm attention blocks"""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        n_patches = (cfg.input_size // cfg.patch_size) ** 2
        self.patch_embed = nn.Conv2d(3, cfg.width, kernel_size=cfg.patch_size, stride=cfg.patch_size)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, cfg.width))
        self.pos_embed = nn.Parameter(torch.randn(1, n_patches + 1, cfg.width) * 0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.width,
            nhead=cfg.n_attention_heads,
            dim_feedforward=2 * cfg.width,
            dropout=0.0,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, num_layers=cfg.depth, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(cfg.width)
        self.proj = nn.Linear(cfg.width, cfg.embedding_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        tokens = self.patch_embed(x).flatten(2).transpose(1, 2)
        cls = self.cls_token.expand(tokens.shape[0], -1, -1)
        tokens = torch.cat([cls, tokens], dim=1) + self.pos_embed
        tokens = self.blocks(tokens)
        return self.proj(self.norm(tokens[:, 0]))


def _conv_block(in_ch: int, out_ch: int, kernel: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=kernel, stride=stride, padding=kernel // 2),
        nn.GroupNorm(math.gcd(8, out_ch), out_ch),
        nn.GELU(),
    )


class ConvEncoder(nn.Module):
    """Small strided CNN with global average pooling"""

    def __init__(self, cfg: EncoderConfig, first_kernel: int = 3):
        super().__init__()
        first_stride = max(2, first_kernel // 4)
        layers = [_conv_block(3, cfg.width, first_kernel, first_stride)]
        for _ in range(cfg.depth):
            layers.append(_conv_block(cfg.width, cfg.width, 3, 2))
        self.features = nn.Sequential(*layers)
        self.proj = nn.Linear(cfg.width, cfg.embedding_dim)
        self.first_kernel = first_kernel

    @property
    def first_layer_receptive_field(self) -> int:
        return self.features[0][0].kernel_size[0]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        features = self.features(x)
        return self.proj(features.mean(dim=(2, 3)))


class LargeKernelConvEncoder(ConvEncoder):
    """CNN whose first layer sees interaction_kernel_size x interaction_kernel_size pixels"""

    def __init__(self, cfg: EncoderConfig):
        super().__init__(cfg, first_kernel=cfg.interaction_kernel_size)


# ============================================================================
# Full model
# ============================================================================

class CattleActModel(nn.Module):
    """
    f_act, f_int, self-attention fusion and the two classification heads

    Images enter as float N x 3 x S x S tensors already resized to input_size;
    per-channel standardization happens inside using the dataset statistics
    stored in the pixel_mean / pixel_std buffers.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.config = cfg
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            if cfg.action_backbone == "patch_attention":
                self.action_encoder = PatchAttentionEncoder(cfg)
            else:
                self.action_encoder = ConvEncoder(cfg)
            self.interaction_encoder = LargeKernelConvEncoder(cfg)
            self.fusion = nn.MultiheadAttention(cfg.embedding_dim, cfg.n_attention_heads, batch_first=True)
            self.interaction_head = nn.Linear(3 * cfg.embedding_dim, len(INTERACTION_CLASSES))
            self.action_head = nn.Linear(cfg.embedding_dim, len(ACTION_CLASSES))
        self.register_buffer("pixel_mean", torch.full((3,), 0.5))
        self.register_buffer("pixel_std", torch.full((3,), 0.25))

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def set_normalization(self, mean: Sequence[float], std: Sequence[float]) -> None:
        """Store dataset channel statistics used to standardize inputs"""
        self.pixel_mean.copy_(torch.as_tensor(mean, dtype=self.pixel_mean.dtype))
        self.pixel_std.copy_(torch.clamp(torch.as_tensor(std, dtype=self.pixel_std.dtype), min=1e-3))

    def preprocess(self, images: Sequence[np.ndarray]) -> torch.Tensor:
        """
        Resize H x W x 3 float images to input_size and stack them

        Args:
            images: Crops with intensities in [0, 1]

        Returns:
            N x 3 x S x S float32 tensor
        """
        size = self.config.input_size
        tensors = []
        for image in images:
            if image.ndim != 3 or image.shape[2] != 3:
                raise ShapeMismatch(f"expected an H x W x 3 image, got shape {image.shape}")
            t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1).unsqueeze(0)
            if t.shape[-2:] != (size, size):
                t = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False, antialias=True)
            tensors.append(t)
        if not tensors:
            return torch.zeros((0, 3, size, size))
        return torch.cat(tensors, dim=0).to(self.pixel_mean.device)

    def _standardize(self, x: torch.Tensor) -> torch.Tensor:
        size = self.config.input_size
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != size or x.shape[3] != size:
            raise ShapeMismatch(f"expected N x 3 x {size} x {size} input, got {tuple(x.shape)}")
        return (x - self.pixel_mean.view(1, 3, 1, 1)) / self.pixel_std.view(1, 3, 1, 1)

    def encode_action(self, x: torch.Tensor) -> torch.Tensor:
        """f_act: N x 3 x S x S -> N x D"""
        return self.action_encoder(self._standardize(x))

    def encode_interaction(self, x: torch.Tensor) -> torch.Tensor:
        """f_int: N x 3 x S x S -> N x D"""
        return self.interaction_encoder(self._standardize(x))

    def fuse(self, z_int: torch.Tensor, z_act1: torch.Tensor, z_act2: torch.Tensor) -> FusionState:
        """
        Self-attention over the stacked (interaction, member_a, member_b) latents

        Accepts single vectors (D,) or batches (N, D). Queries, keys and values
        are all the 3 x D stack; no positional encoding is added.
        """
        squeeze = z_int.ndim == 1
        rows = [z.unsqueeze(0) if z.ndim == 1 else z for z in (z_int, z_act1, z_act2)]
        dims = [r.shape[-1] for r in rows]
        if any(d != self.embedding_dim for d in dims):
            raise DimensionMismatch(f"fusion expects D={self.embedding_dim}, got {dims}")
        if len({r.shape[0] for r in rows}) != 1:
            raise DimensionMismatch(f"fusion inputs have different batch sizes: {[r.shape[0] for r in rows]}")

        z_in = torch.stack(rows, dim=1)
        z_out, _ = self.fusion(z_in, z_in, z_in, need_weights=False)
        z_flat = z_out.reshape(z_out.shape[0], -1)
        if squeeze:
            return FusionState(z_in=z_in[0], z_out=z_out[0], z_flat=z_flat[0])
        return FusionState(z_in=z_in, z_out=z_out, z_flat=z_flat)

    def classify_interaction(self, state: FusionState) -> torch.Tensor:
        """Logits over INTERACTION_CLASSES"""
        if state.z_flat.shape[-1] != 3 * self.embedding_dim:
            raise DimensionMismatch(f"expected a {3 * self.embedding_dim}-dim fused vector, got {state.z_flat.shape[-1]}")
        return self.interaction_head(state.z_flat)

    def classify_action(self, z: torch.Tensor) -> torch.Tensor:
        """Logits over ACTION_CLASSES"""
        if z.shape[-1] != self.embedding_dim:
            raise DimensionMismatch(f"expected a {self.embedding_dim}-dim embedding, got {z.shape[-1]}")
        return self.action_head(z)

    def forward_interaction(self, x_int: torch.Tensor, x_a: torch.Tensor, x_b: torch.Tensor):
        """
        Full interaction path

        Returns:
            (logits, fusion state, z_int, z_a, z_b)
        """
        z_int = self.encode_interaction(x_int)
        z_a = self.encode_action(x_a)
        z_b = self.encode_action(x_b)
        state = self.fuse(z_int, z_a, z_b)
        return self.classify_interaction(state), state, z_int, z_a, z_b


# ============================================================================
# Inference helpers (numpy in, numpy out)
# ============================================================================

def _batches(items: list, batch_size: int):
    for start in range(0, len(items), batch_size):
        yield items[start:start + batch_size]


@torch.no_grad()
def encode_action(model: CattleActModel, images: Sequence[np.ndarray], batch_size: int = 64) -> np.ndarray:
    """Embeddings of action crops, N x D"""
    model.eval()
    out = [model.encode_action(model.preprocess(chunk)).cpu().numpy() for chunk in _batches(list(images), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.embedding_dim), dtype=np.float32)


@torch.no_grad()
def encode_interaction(model: CattleActModel, images: Sequence[np.ndarray], batch_size: int = 64) -> np.ndarray:
    """Embeddings of union crops, N x D"""
    model.eval()
    out = [model.encode_interaction(model.preprocess(chunk)).cpu().numpy()
           for chunk in _batches(list(images), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.embedding_dim), dtype=np.float32)


@torch.no_grad()
def action_probabilities(model: CattleActModel, samples: Sequence[ActionSample], batch_size: int = 64) -> np.ndarray:
    """Softmax over ACTION_CLASSES for each action sample, N x 4"""
    model.eval()
    out = []
    for chunk in _batches(list(samples), batch_size):
        z = model.encode_action(model.preprocess([s.image for s in chunk]))
        out.append(F.softmax(model.classify_action(z), dim=-1).cpu().numpy())
    return np.concatenate(out) if out else np.zeros((0, len(ACTION_CLASSES)), dtype=np.float32)


@torch.no_grad()
def interaction_probabilities(
    model: CattleActModel,
    samples: Sequence[InteractionSample],
    batch_size: int = 32,
) -> np.ndarray:
    """Softmax over INTERACTION_CLASSES for each interaction candidate, N x 4"""
    model.eval()
    out = []
    for chunk in _batches(list(samples), batch_size):
        crops_a, crops_b = split_batch(chunk)
        logits, *_ = model.forward_interaction(
            model.preprocess([s.union_image for s in chunk]),
            model.preprocess([c.image for c in crops_a]),
            model.preprocess([c.image for c in crops_b]),
        )
        out.append(F.softmax(logits, dim=-1).cpu().numpy())
    return np.concatenate(out) if out else np.zeros((0, len(INTERACTION_CLASSES)), dtype=np.float32)


def channel_statistics(images: List[np.ndarray]) -> tuple:
    """Per-channel mean and standard deviation over a set of images"""
    if not images:
        return (0.5, 0.5, 0.5), (0.25, 0.25, 0.25)
    pixels = np.concatenate([img.reshape(-1, 3) for img in images]).astype(np.float64)
    return tuple(float(v) for v in pixels.mean(axis=0)), tuple(float(v) for v in pixels.std(axis=0))


def count_parameters(module: nn.Module, trainable_only: bool = False) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad or not trainable_only)


def describe(model: CattleActModel) -> str:
    """One-line architecture summary for logs"""
    cfg = model.config
    return (
        f"action={cfg.action_backbone} interaction=conv_large_kernel(k={cfg.interaction_kernel_size}) "
        f"D={cfg.embedding_dim} heads={cfg.n_attention_heads} input={cfg.input_size} "
        f"params={count_parameters(model):,}"
    )

