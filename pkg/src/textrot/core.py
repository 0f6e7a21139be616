"""Domain primitives: rotation angles, rotation classes, boxes and images.

Angles are stored in degrees and normalized to the half-open interval
[-180, 180). The rotation class of a text region depends only on which
angular band its rotation falls into:

    horizontal: [-180, -135] U [-45, 45] U [135, 180)
    vertical:   everything else

Exact band boundaries (+-45, +-135) belong to the horizontal class, so the
horizontal bands are closed and the vertical bands open. Both bands are
invariant under 180-degree shifts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class RotationClass(enum.Enum):
    """Binary rotation category of a text image."""

    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


# Fixed class order used for label indices, confusion matrices and logits.
CLASS_ORDER = (RotationClass.HORIZONTAL, RotationClass.VERTICAL)


def class_index(cls: RotationClass) -> int:
    """Integer label of a rotation class (horizontal=0, vertical=1)."""
    return CLASS_ORDER.index(cls)


@dataclass(frozen=True)
class RotationAngle:
    """An angle in degrees, normalized to [-180, 180)."""

    degrees: float

    def __post_init__(self):
        if not math.isfinite(self.degrees):
            raise ValueError(f"angle must be finite, got {self.degrees!r}")
        if not -180.0 <= self.degrees < 180.0:
            raise ValueError(
                f"angle {self.degrees!r} outside [-180, 180); use normalize_angle"
            )


def normalize_angle(raw_degrees: float) -> RotationAngle:
    """Normalize an angle in degrees to the half-open interval [-180, 180).

    The result is congruent to the input modulo 360 and the operation is
    idempotent. Non-finite input raises ValueError.
    """
    raw = float(raw_degrees)
    if not math.isfinite(raw):
        raise ValueError(f"angle must be finite, got {raw_degrees!r}")
    deg = (raw + 180.0) % 360.0 - 180.0
    # Float rounding near the wrap point can land exactly on +180.
    if deg >= 180.0:
        deg -= 360.0
    return RotationAngle(deg)


def angle_to_class(angle: RotationAngle) -> RotationClass:
    """Map a normalized angle to its rotation class.

    Horizontal iff the angle lies in [-180, -135], [-45, 45] or [135, 180);
    band boundaries count as horizontal.
    """
    d = angle.degrees
    if -45.0 <= d <= 45.0 or d >= 135.0 or d <= -135.0:
        return RotationClass.HORIZONTAL
    return RotationClass.VERTICAL


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box with exclusive right/bottom edges."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(
                f"degenerate box ({self.x0}, {self.y0}, {self.x1}, {self.y1})"
            )

    def inside(self, h: int, w: int) -> bool:
        """Whether the box lies fully inside an h x w image."""
        return self.x1 <= w and self.y1 <= h

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass
class ImageTensor:
    """An h x w x 3 float image with values in [0, 1].

    Both spatial dimensions must be divisible by 32 so that every backbone
    stage stride divides them evenly.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float32)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError(f"expected h x w x 3 image, got shape {a.shape}")
        h, w = a.shape[:2]
        if h % 32 or w % 32:
            raise ValueError(f"image size {h}x{w} not divisible by 32")
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        self.data = a

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]
