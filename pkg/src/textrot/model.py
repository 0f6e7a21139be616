"""Fully-convolutional 4-stage residual classifier.

The network is a ResNet-18-style backbone with batch normalization: a
stride-2 conv stem plus stride-2 pool, then four residual stages whose
outputs sit at cumulative strides 4, 8, 16, 32 relative to the input.
Those per-stage feature maps are exposed to callers so they can be
regularized against downscaled box masks. The head is global average
pooling, dropout (train mode only), a linear layer and softmax.

All randomness (parameter init, dropout) is drawn from dedicated
torch.Generator objects, never the global RNG, so models are
reproducible for a fixed seed regardless of what else the process runs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

CKPT_MAGIC = "mbsr-ckpt-v1"

DESK_CHANNELS = (16, 32, 64, 128)
PAPER_CHANNELS = (64, 128, 256, 512)


@dataclass(frozen=True)
class BackboneConfig:
    """Architecture hyperparameters.

    ``stage_channels`` defaults to quarter-width ResNet-18 so training is
    CPU-friendly; ``PAPER_CHANNELS`` gives the full ResNet-18 widths.
    """

    stage_channels: tuple[int, int, int, int] = DESK_CHANNELS
    blocks_per_stage: tuple[int, int, int, int] = (2, 2, 2, 2)
    dropout_prob: float = 0.1
    num_classes: int = 2
    zero_init_residual: bool = False

    def __post_init__(self):
        if len(self.stage_channels) != 4 or any(c < 1 for c in self.stage_channels):
            raise ValueError(f"need 4 positive stage channels, got {self.stage_channels}")
        if len(self.blocks_per_stage) != 4 or any(b < 1 for b in self.blocks_per_stage):
            raise ValueError(f"need 4 positive block counts, got {self.blocks_per_stage}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")
        if self.num_classes != 2:
            raise ValueError("this is a binary classifier; num_classes must be 2")


@dataclass
class StageFeatures:
    """One forward pass: per-stage feature maps plus class outputs.

    f1..f4 have shapes (N, C_i, h/4, w/4) .. (N, C_4, h/32, w/32); logits
    and probs are (N, 2) with probs rows on the simplex.
    """

    f1: torch.Tensor
    f2: torch.Tensor
    f3: torch.Tensor
    f4: torch.Tensor
    logits: torch.Tensor
    probs: torch.Tensor

    def stage(self, i: int) -> torch.Tensor:
        """Feature map for a 1-based stage index."""
        return (self.f1, self.f2, self.f3, self.f4)[i - 1]


class SeededDropout(nn.Module):
    """Dropout drawing its mask from a private generator.

    Keeps training reproducible even when several models train
    concurrently in one process (the global RNG is never touched).
    """

    def __init__(self, p: float, seed: int = 0):
        super().__init__()
        self.p = float(p)
        self.generator = torch.Generator()
        self.reseed(seed)

    def reseed(self, seed: int):
        self.generator.manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if not self.training or self.p == 0.0:
            return x
        keep = torch.rand(x.shape, generator=self.generator, dtype=x.dtype) >= self.p
        return x * keep / (1.0 - self.p)


class BasicBlock(nn.Module):
    """Two 3x3 conv-BN pairs with an additive skip connection."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.downsample = None

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + identity)


class RotationBackbone(nn.Module):
    """4-stage residual classifier exposing intermediate feature maps."""

    def __init__(self, config: BackboneConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.init_seed = int(seed)
        self.training_seed: int | None = None
        c1, c2, c3, c4 = config.stage_channels
        self.stem_conv = nn.Conv2d(3, c1, 3, stride=2, padding=1, bias=False)
        self.stem_bn = nn.BatchNorm2d(c1)
        self.stem_pool = nn.MaxPool2d(kernel_size=3, stride=2, padding=1)
        self.stage1 = self._make_stage(c1, c1, config.blocks_per_stage[0], stride=1)
        self.stage2 = self._make_stage(c1, c2, config.blocks_per_stage[1], stride=2)
        self.stage3 = self._make_stage(c2, c3, config.blocks_per_stage[2], stride=2)
        self.stage4 = self._make_stage(c3, c4, config.blocks_per_stage[3], stride=2)
        self.dropout = SeededDropout(config.dropout_prob, seed=seed)
        self.head = nn.Linear(c4, config.num_classes)
        self._init_parameters(seed)

    @staticmethod
    def _make_stage(in_ch, out_ch, blocks, stride):
        layers = [BasicBlock(in_ch, out_ch, stride=stride)]
        layers += [BasicBlock(out_ch, out_ch) for _ in range(blocks - 1)]
        return nn.Sequential(*layers)

    def _init_parameters(self, seed: int):
        gen = torch.Generator()
        gen.manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(
                    m.weight, mode="fan_in", nonlinearity="relu", generator=gen
                )
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
            elif isinstance(m, nn.Linear):
                bound = 1.0 / math.sqrt(m.in_features)
                nn.init.uniform_(m.weight, -bound, bound, generator=gen)
                nn.init.uniform_(m.bias, -bound, bound, generator=gen)
        if self.config.zero_init_residual:
            # Residual branches start as identity; note this leaves the
            # branch convs without gradient until the BN scale moves.
            for m in self.modules():
                if isinstance(m, BasicBlock):
                    nn.init.zeros_(m.bn2.weight)

    def forward(self, x: torch.Tensor) -> StageFeatures:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (N, 3, h, w) input, got {tuple(x.shape)}")
        n, _, h, w = x.shape
        if n < 1:
            raise ValueError("batch must contain at least one image")
        if h % 32 or w % 32:
            raise ValueError(f"input size {h}x{w} not divisible by 32")
        x = self.stem_pool(F.relu(self.stem_bn(self.stem_conv(x))))
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        pooled = f4.mean(dim=(2, 3))
        logits = self.head(self.dropout(pooled))
        probs = F.softmax(logits, dim=1)
        return StageFeatures(f1=f1, f2=f2, f3=f3, f4=f4, logits=logits, probs=probs)


def init_model(config: BackboneConfig, seed: int) -> RotationBackbone:
    """Build a backbone with deterministic parameters for the given seed."""
    return RotationBackbone(config, seed=seed)


def batch_to_tensor(batch: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """Convert an (N, h, w, 3) channel-last image array to (N, 3, h, w)."""
    a = np.asarray(batch)
    if a.ndim != 4 or a.shape[3] != 3:
        raise ValueError(f"expected (N, h, w, 3) batch, got shape {a.shape}")
    return torch.from_numpy(np.ascontiguousarray(a)).permute(0, 3, 1, 2).to(dtype)


def forward(model: RotationBackbone, batch, mode: str = "eval") -> StageFeatures:
    """Run a batch of channel-last images through the model.

    ``mode="train"`` uses batch statistics and dropout; ``mode="eval"``
    uses running statistics, disables dropout and is deterministic.
    Gradients are only tracked in train mode.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if isinstance(batch, torch.Tensor):
        x = batch
    else:
        x = batch_to_tensor(batch, dtype=next(model.parameters()).dtype)
    if mode == "train":
        model.train()
        return model(x)
    model.eval()
    with torch.no_grad():
        return model(x)


def save_checkpoint(model: RotationBackbone, path, training_seed: int | None = None):
    """Write a versioned archive of config, parameters and BN statistics."""
    payload = {
        "format": CKPT_MAGIC,
        "config": asdict(model.config),
        "init_seed": model.init_seed,
        "training_seed": (
            training_seed if training_seed is not None else model.training_seed
        ),
        "state_dict": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> RotationBackbone:
    """Restore a model saved by save_checkpoint; validates the magic string."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != CKPT_MAGIC:
        raise ValueError(f"{path}: not a {CKPT_MAGIC} checkpoint")
    cfg_dict = dict(payload["config"])
    cfg_dict["stage_channels"] = tuple(cfg_dict["stage_channels"])
    cfg_dict["blocks_per_stage"] = tuple(cfg_dict["blocks_per_stage"])
    config = BackboneConfig(**cfg_dict)
    model = RotationBackbone(config, seed=payload["init_seed"])
    model.load_state_dict(payload["state_dict"])
    model.training_seed = payload.get("training_seed")
    model.eval()
    return model
