"""Synthetic rotated-text scenes with bounding-box annotations.

Each sample is a procedural scene: one or more "text" regions drawn as
high-contrast stripe gratings inside rectangles (the stripes run along
the text direction, like lines of text seen from afar), all rotated by
the sample's angle, over a cluttered background. Background clutter --
colored blobs, weaker stripe gratings at random orientations, and pixel
speckle -- scales with ``noise_level``; the oriented distractor gratings
are what make the rotation task genuinely confusable at high noise.

Boxes are the axis-aligned bounds of each region's rendered ink, so a
box encloses its region exactly by construction.

On-disk layout (all images lossless PNG):

    <dir>/manifest.json
    <dir>/<split>/images/<id>.png
    <dir>/<split>/annotations.jsonl   # {"id", "angle_deg", "class", "boxes"}
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from textrot.core import (
    BoundingBox,
    ImageTensor,
    RotationAngle,
    RotationClass,
    angle_to_class,
    normalize_angle,
)

SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.8, 0.1, 0.1)

_MASK63 = (1 << 63) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class GenerationError(Exception):
    """A scene could not be rendered (e.g. a text region does not fit)."""


class DatasetParseError(Exception):
    """An annotation file is missing, empty or has a corrupt row."""


class DatasetValidationError(Exception):
    """A loaded sample violates a dataset invariant."""


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to render one scene deterministically."""

    image_size: tuple[int, int]
    num_text_regions: int
    noise_level: float
    angle: RotationAngle
    seed: int

    def __post_init__(self):
        h, w = self.image_size
        if h % 32 or w % 32:
            raise ValueError(f"image size {h}x{w} not divisible by 32")
        if self.num_text_regions < 1:
            raise ValueError("need at least one text region")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValueError(f"noise_level must be in [0, 1], got {self.noise_level}")


@dataclass
class AnnotatedSample:
    """One labeled scene: image, rotation angle, class and text boxes."""

    image: ImageTensor
    angle: RotationAngle
    cls: RotationClass
    boxes: list[BoundingBox]
    sample_id: str = ""


@dataclass
class DatasetManifest:
    """Per-split counts plus the generator settings that produced them."""

    root: Path
    counts: dict[str, int]
    seed: int
    noise_level: float
    image_size: tuple[int, int]

    def split_dir(self, split: str) -> Path:
        return self.root / split

    def annotations_path(self, split: str) -> Path:
        return self.root / split / "annotations.jsonl"

    def to_dict(self) -> dict:
        return {
            "counts": dict(self.counts),
            "seed": self.seed,
            "noise_level": self.noise_level,
            "image_size": list(self.image_size),
            "splits": {
                s: {
                    "annotations": f"{s}/annotations.jsonl",
                    "images_dir": f"{s}/images",
                    "count": self.counts[s],
                }
                for s in SPLITS
            },
        }


@functools.lru_cache(maxsize=4)
def _pixel_centers(h: int, w: int):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    yy += 0.5
    xx += 0.5
    yy.setflags(write=False)
    xx.setflags(write=False)
    return yy, xx


def _stripe_field(h, w, cx, cy, angle_deg, length, width, period, phase=0.0):
    """Rotated-rectangle membership plus the stripe parity inside it."""
    yy, xx = _pixel_centers(h, w)
    theta = math.radians(angle_deg)
    dx = xx - cx
    dy = yy - cy
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    inside = (np.abs(u) <= length / 2) & (np.abs(v) <= width / 2)
    parity = np.floor((v + width / 2 + phase) / period).astype(np.int64) % 2
    return inside, parity


def _overlaps(a, b, gap=2.0):
    return not (
        a[2] + gap <= b[0] or b[2] + gap <= a[0] or a[3] + gap <= b[1] or b[3] + gap <= a[1]
    )


def _paint_text_region(img, rng, h, w, angle_deg, base, occupied):
    """Place and draw one striped text rectangle; returns its ink box."""
    length = rng.uniform(0.40, 0.68) * min(h, w)
    width = length / rng.uniform(2.6, 4.4)
    n_lines = int(rng.integers(2, 5))
    theta = math.radians(angle_deg)
    margin = 2.0
    for attempt in range(60):
        if attempt and attempt % 12 == 0:
            length *= 0.9
            width *= 0.9
        ex = (length * abs(math.cos(theta)) + width * abs(math.sin(theta))) / 2
        ey = (length * abs(math.sin(theta)) + width * abs(math.cos(theta))) / 2
        if ex + margin >= w - ex - margin or ey + margin >= h - ey - margin:
            continue
        cx = rng.uniform(ex + margin, w - ex - margin)
        cy = rng.uniform(ey + margin, h - ey - margin)
        aabb = (cx - ex, cy - ey, cx + ex, cy + ey)
        if not any(_overlaps(aabb, other) for other in occupied):
            break
    else:
        raise GenerationError("could not place a text region inside the image")

    bright = min(1.0, base + rng.uniform(0.38, 0.48))
    dark = max(0.0, base - rng.uniform(0.32, 0.42))
    period = width / n_lines
    inside, parity = _stripe_field(h, w, cx, cy, angle_deg, length, width, period)
    if not inside.any():
        raise GenerationError("text region degenerated to zero pixels")
    values = np.where(parity == 0, bright, dark).astype(np.float32)
    img[inside] = values[inside, None]

    occupied.append(aabb)
    ys, xs = np.nonzero(inside)
    return BoundingBox(
        int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1
    )


def _paint_background(img, rng, h, w, noise, base):
    """Clutter: colored blobs, oriented distractor gratings, speckle."""
    if noise <= 0.0:
        return
    yy, xx = _pixel_centers(h, w)
    for _ in range(round(8 * noise)):
        cx = rng.uniform(0, w)
        cy = rng.uniform(0, h)
        rx = rng.uniform(0.04, 0.18) * w
        ry = rng.uniform(0.04, 0.18) * h
        color = np.clip(base + noise * rng.uniform(-0.35, 0.35, size=3), 0, 1)
        blob = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        img[blob] = color.astype(np.float32)
    # stripe gratings at random orientations: the rotation decoys
    for _ in range(round(4 * noise)):
        length = rng.uniform(0.20, 0.45) * min(h, w)
        width = length / rng.uniform(1.5, 3.5)
        cx = rng.uniform(0, w)
        cy = rng.uniform(0, h)
        phi = rng.uniform(0.0, 180.0)
        period = rng.uniform(3.0, 9.0)
        amp = noise * rng.uniform(0.28, 0.40)
        inside, parity = _stripe_field(
            h, w, cx, cy, phi, length, width, period, phase=rng.uniform(0, period)
        )
        values = np.where(parity == 0, base + amp, base - amp).astype(np.float32)
        img[inside] = np.clip(values[inside, None], 0, 1)
    img += rng.normal(0.0, 0.05 * noise, size=img.shape).astype(np.float32)
    np.clip(img, 0.0, 1.0, out=img)


def render_sample(spec: SceneSpec) -> AnnotatedSample:
    """Render one scene; deterministic for a fixed spec (seed included)."""
    h, w = spec.image_size
    rng = np.random.default_rng(spec.seed)
    base = float(rng.uniform(0.35, 0.60))
    img = np.full((h, w, 3), base, dtype=np.float32)
    _paint_background(img, rng, h, w, spec.noise_level, base)
    occupied: list[tuple] = []
    boxes = [
        _paint_text_region(img, rng, h, w, spec.angle.degrees, base, occupied)
        for _ in range(spec.num_text_regions)
    ]
    # quantize to the 8-bit grid so PNG round-trips are exact
    np.round(img * 255.0, out=img)
    img /= 255.0
    return AnnotatedSample(
        image=ImageTensor(img),
        angle=spec.angle,
        cls=angle_to_class(spec.angle),
        boxes=boxes,
    )


def validate_sample(sample: AnnotatedSample, source: str = "sample"):
    """Check the invariants every stored sample must satisfy."""
    if not sample.boxes:
        raise DatasetValidationError(f"{source}: sample has no boxes")
    h, w = sample.image.h, sample.image.w
    for box in sample.boxes:
        if not box.inside(h, w):
            raise DatasetValidationError(
                f"{source}: box {box.as_tuple()} outside {h}x{w} image"
            )
    if sample.cls is not angle_to_class(sample.angle):
        raise DatasetValidationError(
            f"{source}: class {sample.cls.value} does not match angle "
            f"{sample.angle.degrees}"
        )


def split_counts(count: int, ratios: Sequence[float]) -> dict[str, int]:
    """Apportion ``count`` over train/val/test by largest remainder."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"need three positive ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    raw = [count * r for r in ratios]
    floors = [int(math.floor(x)) for x in raw]
    leftover = count - sum(floors)
    order = sorted(range(3), key=lambda i: raw[i] - floors[i], reverse=True)
    for i in order[:leftover]:
        floors[i] += 1
    return dict(zip(SPLITS, floors))


def _sample_angle(rng, target: RotationClass) -> RotationAngle:
    # rejection-sample uniform angles until the class matches; each class
    # covers exactly half the circle so this terminates fast
    while True:
        angle = normalize_angle(float(rng.uniform(-180.0, 180.0)))
        if angle_to_class(angle) is target:
            return angle


def generate_dataset(
    count: int,
    split_ratios: Sequence[float] = DEFAULT_RATIOS,
    noise_level: float = 0.5,
    seed: int = 0,
    out_dir: str | Path = "data",
    image_size: tuple[int, int] = (128, 128),
    regions: tuple[int, int] = (1, 3),
    max_retries: int = 20,
) -> DatasetManifest:
    """Generate a dataset on disk and return its manifest.

    Deterministic for fixed arguments. Classes alternate per sample so
    every split is as balanced as its size allows; each sample gets a
    unique render seed (no seed is shared across splits).
    """
    if count < 10:
        raise ValueError(f"count must be >= 10, got {count}")
    if not 0.0 <= noise_level <= 1.0:
        raise ValueError(f"noise_level must be in [0, 1], got {noise_level}")
    if regions[0] < 1 or regions[1] < regions[0]:
        raise ValueError(f"bad region range {regions}")
    counts = split_counts(count, split_ratios)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    master = np.random.default_rng(seed)
    sample_seeds = np.random.SeedSequence(seed).generate_state(count, np.uint64)
    if len(np.unique(sample_seeds)) != count:
        raise GenerationError("sample seed collision; choose another master seed")

    global_idx = 0
    for split in SPLITS:
        split_root = root / split
        (split_root / "images").mkdir(parents=True, exist_ok=True)
        rows = []
        for i in range(counts[split]):
            target = (
                RotationClass.HORIZONTAL if global_idx % 2 == 0 else RotationClass.VERTICAL
            )
            angle = _sample_angle(master, target)
            n_regions = int(master.integers(regions[0], regions[1] + 1))
            render_seed = int(sample_seeds[global_idx])
            sample = None
            for attempt in range(max_retries):
                spec = SceneSpec(
                    image_size=image_size,
                    num_text_regions=n_regions,
                    noise_level=noise_level,
                    angle=angle,
                    seed=(render_seed + attempt * _GOLDEN) & _MASK63,
                )
                try:
                    sample = render_sample(spec)
                    break
                except GenerationError:
                    continue
            if sample is None:
                raise GenerationError(
                    f"failed to render sample {global_idx} after {max_retries} retries"
                )
            sample_id = f"{split}_{i:05d}"
            sample.sample_id = sample_id
            validate_sample(sample, source=sample_id)
            save_image(sample.image, split_root / "images" / f"{sample_id}.png")
            rows.append(
                {
                    "id": sample_id,
                    "angle_deg": sample.angle.degrees,
                    "class": sample.cls.value,
                    "boxes": [list(b.as_tuple()) for b in sample.boxes],
                }
            )
            global_idx += 1
        with open(split_root / "annotations.jsonl", "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")

    manifest = DatasetManifest(
        root=root,
        counts=counts,
        seed=int(seed),
        noise_level=float(noise_level),
        image_size=tuple(image_size),
    )
    with open(root / "manifest.json", "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def save_image(image: ImageTensor, path: str | Path):
    """Write an image tensor as an 8-bit RGB PNG (lossless)."""
    arr = np.round(image.data * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_image(path: str | Path) -> ImageTensor:
    """Read a PNG written by save_image back into a float image tensor."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return ImageTensor(arr)


def read_manifest(dir: str | Path) -> DatasetManifest:
    root = Path(dir)
    path = root / "manifest.json"
    if not path.exists():
        raise DatasetParseError(f"{path}: manifest not found")
    with open(path) as fh:
        raw = json.load(fh)
    return DatasetManifest(
        root=root,
        counts=dict(raw["counts"]),
        seed=int(raw["seed"]),
        noise_level=float(raw["noise_level"]),
        image_size=tuple(raw["image_size"]),
    )


def iter_dataset(dir: str | Path, split: str) -> Iterator[AnnotatedSample]:
    """Yield samples of one split in annotation order, validating each."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    root = Path(dir) / split
    ann = root / "annotations.jsonl"
    if not ann.exists():
        raise DatasetParseError(f"{ann}: annotation file not found")
    with open(ann) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetParseError(f"{ann}: annotation file is empty")
    for lineno, line in enumerate(lines, start=1):
        try:
            row = json.loads(line)
            sample_id = str(row["id"])
            angle = normalize_angle(float(row["angle_deg"]))
            cls = RotationClass(row["class"])
            raw_boxes = row["boxes"]
            if not isinstance(raw_boxes, list):
                raise ValueError("boxes must be a list")
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetParseError(f"{ann}: bad row {lineno}: {exc}") from exc
        try:
            # degenerate coordinates are an invariant violation, not a
            # malformed file
            boxes = [BoundingBox(*(int(v) for v in b)) for b in raw_boxes]
        except (TypeError, ValueError) as exc:
            raise DatasetValidationError(f"{ann}: row {lineno}: {exc}") from exc
        img_path = root / "images" / f"{sample_id}.png"
        if not img_path.exists():
            raise DatasetParseError(f"{ann}: row {lineno}: missing image {img_path}")
        sample = AnnotatedSample(
            image=load_image(img_path),
            angle=angle,
            cls=cls,
            boxes=boxes,
            sample_id=sample_id,
        )
        validate_sample(sample, source=f"{ann}: row {lineno}")
        yield sample


def load_dataset(dir: str | Path, split: str) -> list[AnnotatedSample]:
    """Load a whole split into memory (annotation order)."""
    return list(iter_dataset(dir, split))
