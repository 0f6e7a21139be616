"""Binary box masks and their per-stage downscaled pyramid.

A full-resolution mask is 1 exactly where some bounding box covers the
pixel and 0 elsewhere. It is downscaled by max-pooling to the four
backbone stage resolutions (strides 4, 8, 16, 32) so each level matches
the spatial shape of that stage's feature maps. Max-pooling is the
default so that thin boxes survive to stride-32 resolution; area-average
downscaling (fractional targets) is available via ``mode="mean"``.

Masks are training-time constants: nothing here participates in
gradient computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from textrot.core import BoundingBox

STAGE_STRIDES = (4, 8, 16, 32)
VALID_FACTORS = (2, 4, 8, 16, 32)


@dataclass
class FullMask:
    """Full-resolution binary box mask, same spatial size as the image."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        self.data = a.astype(np.float32)


@dataclass
class MaskPyramid:
    """Downscaled masks M_1..M_4 aligned to the stage feature shapes."""

    levels: list[np.ndarray]
    strides: tuple[int, ...] = STAGE_STRIDES

    def level(self, stage: int) -> np.ndarray:
        """Mask for a 1-based stage index."""
        return self.levels[stage - 1]


def rasterize_mask(boxes: Iterable[BoundingBox], h: int, w: int) -> FullMask:
    """Rasterize boxes into an h x w binary mask (union of box interiors)."""
    mask = np.zeros((h, w), dtype=np.float32)
    for box in boxes:
        if not box.inside(h, w):
            raise ValueError(f"box {box.as_tuple()} outside {h}x{w} image")
        mask[box.y0 : box.y1, box.x0 : box.x1] = 1.0
    return FullMask(mask)


def downscale_mask(mask: np.ndarray, factor: int, mode: str = "max") -> np.ndarray:
    """Downscale a mask by pooling over factor x factor blocks.

    ``mode="max"`` keeps a block at 1 if any input pixel is 1 (binary
    output); ``mode="mean"`` returns the block coverage fraction.
    """
    if factor not in VALID_FACTORS:
        raise ValueError(f"factor must be one of {VALID_FACTORS}, got {factor}")
    a = np.asarray(mask, dtype=np.float32)
    h, w = a.shape
    if h % factor or w % factor:
        raise ValueError(f"mask size {h}x{w} not divisible by factor {factor}")
    blocks = a.reshape(h // factor, factor, w // factor, factor)
    if mode == "max":
        return blocks.max(axis=(1, 3))
    if mode == "mean":
        return blocks.mean(axis=(1, 3))
    raise ValueError(f"unknown downscale mode {mode!r}")


def build_pyramid(mask: FullMask, mode: str = "max") -> MaskPyramid:
    """Downscale a full mask to every stage resolution."""
    h, w = mask.data.shape
    if h % 32 or w % 32:
        raise ValueError(f"mask size {h}x{w} not divisible by 32")
    levels = [downscale_mask(mask.data, s, mode=mode) for s in STAGE_STRIDES]
    return MaskPyramid(levels=levels)


def mask_to_image(level: np.ndarray) -> np.ndarray:
    """Render a pyramid level as an 8-bit grayscale image (1 -> 255)."""
    return np.clip(np.asarray(level, dtype=np.float32) * 255.0, 0, 255).astype(np.uint8)
