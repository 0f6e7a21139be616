"""Text-rotation classification toolkit.

Generates synthetic rotated-text scenes with bounding boxes, trains a
4-stage residual classifier whose intermediate feature maps are
regularized toward downscaled box masks, and evaluates it against a
Hough-transform orientation baseline.
"""

from textrot.core import (
    BoundingBox,
    ImageTensor,
    RotationAngle,
    RotationClass,
    angle_to_class,
    normalize_angle,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "ImageTensor",
    "RotationAngle",
    "RotationClass",
    "angle_to_class",
    "normalize_angle",
    "__version__",
]
