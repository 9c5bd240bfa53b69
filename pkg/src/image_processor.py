"""
Image I/O utilities for CattleAct
Crops live in memory as float H x W x 3 arrays in [0, 1]; on disk as 8-bit RGB PNG
"""
import io
import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from .config import config
from .errors import MissingFile

logger = logging.getLogger(__name__)


def quantize(image: np.ndarray) -> np.ndarray:
    """
    Snap intensities to the 8-bit grid

    Images produced in memory are quantized before use so that a PNG
    save -> load round trip reproduces them exactly.

    Args:
        image: H x W x 3 float array

    Returns:
        float32 array whose values are multiples of 1/255
    """
    return (to_uint8(image).astype(np.float32) / 255.0).astype(np.float32)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Convert a [0, 1] float image to uint8 with rounding"""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def load_png(path: Path) -> np.ndarray:
    """
    Load an 8-bit RGB PNG as float32 in [0, 1]

    Args:
        path: Image file path

    Returns:
        H x W x 3 float32 array
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"Image file not found: {path}")

    with Image.open(path) as img:
        # Convert to RGB if necessary (palette / grayscale / alpha PNGs)
        if img.mode != 'RGB':
            img = img.convert('RGB')
        array = np.asarray(img, dtype=np.uint8)

    return array.astype(np.float32) / 255.0


def encode_png(image: np.ndarray) -> bytes:
    """Encode a float image as PNG bytes (deterministic for identical input)"""
    img = Image.fromarray(to_uint8(image), mode='RGB')
    output = io.BytesIO()
    img.save(output, format='PNG', compress_level=config.png_compress_level)
    img.close()
    return output.getvalue()


def save_png(path: Path, image: np.ndarray) -> None:
    """Write a float image to disk as 8-bit RGB PNG"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_png(image))


def crop(image: np.ndarray, window: Tuple[int, int, int, int]) -> np.ndarray:
    """Copy of image[y0:y1, x0:x1] for an end-exclusive (x0, y0, x1, y1) window"""
    x0, y0, x1, y1 = window
    return np.array(image[y0:y1, x0:x1], copy=True)


def heatmap_to_rgb(grid: np.ndarray, size: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """
    Render a 2-D score grid as a blue -> red RGB image

    Args:
        grid: rows x cols array of finite values
        size: Optional (width, height) to upscale to (nearest neighbour)

    Returns:
        H x W x 3 float array in [0, 1]
    """
    grid = np.asarray(grid, dtype=np.float64)
    lo, hi = float(grid.min()), float(grid.max())
    scaled = (grid - lo) / (hi - lo) if hi > lo else np.zeros_like(grid)

    rgb = np.stack([scaled, 0.2 * np.ones_like(scaled), 1.0 - scaled], axis=-1)

    if size is not None:
        img = Image.fromarray(to_uint8(rgb), mode='RGB').resize(size, Image.Resampling.NEAREST)
        return np.asarray(img, dtype=np.float32) / 255.0
    return rgb.astype(np.float32)


def overlay(image: np.ndarray, heat: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Alpha-blend a heatmap over an image of the same size"""
    return np.clip((1.0 - alpha) * image + alpha * heat, 0.0, 1.0)


def draw_rectangles(
    image: np.ndarray,
    rectangles: Sequence[Tuple[float, float, float, float]],
    circles: Sequence[Tuple[float, float, float]] = (),
) -> np.ndarray:
    """
    Outline mask rectangles (red) and protected discs (green) on a copy of the image

    Args:
        image: H x W x 3 float array
        rectangles: (x0, y0, x1, y1) end-exclusive rectangles
        circles: (cx, cy, radius) discs

    Returns:
        Annotated float copy of the image
    """
    img = Image.fromarray(to_uint8(image), mode='RGB')
    draw = ImageDraw.Draw(img)
    for x0, y0, x1, y1 in rectangles:
        draw.rectangle([x0, y0, x1 - 1, y1 - 1], outline=(255, 0, 0))
    for cx, cy, r in circles:
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], outline=(0, 255, 0))
    return np.asarray(img, dtype=np.float32) / 255.0


def side_by_side(left: np.ndarray, right: np.ndarray, gap: int = 4) -> np.ndarray:
    """Concatenate two images horizontally on a white background"""
    height = max(left.shape[0], right.shape[0])
    canvas = np.ones((height, left.shape[1] + gap + right.shape[1], 3), dtype=np.float32)
    canvas[:left.shape[0], :left.shape[1]] = left
    canvas[:right.shape[0], left.shape[1] + gap:] = right
    return canvas
