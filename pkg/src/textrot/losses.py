"""Training objective: classification loss plus per-stage mask MSE terms.

The total loss is the classification term plus an MSE regularizer per
selected stage, each pulling that stage's feature maps toward the mask
downscaled to its resolution:

    total = l_cls + mse_weight * sum_{i in selection} mse_i

Masks enter as constants; no gradient flows into them. Three published
ambiguities are config-exposed rather than guessed:

* ``form``: "cross_entropy" (default, -mean log p(correct)) or
  "literal_probability" (1 - mean p(correct); same gradients as the
  unshifted negative mean probability, but bounded below by 0).
* ``mse_reduction``: "mean" (default; resolution-independent magnitude)
  or "sum" (per-sample summed squared error, then batch-averaged).
* ``channel_mode``: "broadcast" (default; every channel regularized
  toward the mask) or "mean" (channel-averaged features vs the mask).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

PROB_FLOOR = 1e-12

LOSS_FORMS = ("cross_entropy", "literal_probability")
MSE_REDUCTIONS = ("mean", "sum")
CHANNEL_MODES = ("broadcast", "mean")


@dataclass(frozen=True)
class StageSelection:
    """The subset of stages {1..4} whose features are regularized."""

    stages: tuple[int, ...] = ()

    def __post_init__(self):
        stages = tuple(sorted(set(int(s) for s in self.stages)))
        if any(s < 1 or s > 4 for s in stages):
            raise ValueError(f"stages must lie in 1..4, got {self.stages}")
        object.__setattr__(self, "stages", stages)

    @classmethod
    def from_string(cls, text: str) -> "StageSelection":
        """Parse a comma-separated stage list; empty string means no stages."""
        text = text.strip()
        if not text:
            return cls(())
        try:
            return cls(tuple(int(tok) for tok in text.split(",")))
        except ValueError as exc:
            raise ValueError(f"bad stage selection {text!r}") from exc

    def __str__(self) -> str:
        return ",".join(str(s) for s in self.stages)

    def __contains__(self, stage: int) -> bool:
        return stage in self.stages

    def __bool__(self) -> bool:
        return bool(self.stages)


@dataclass(frozen=True)
class LossConfig:
    """Resolution of the objective's config-exposed ambiguities."""

    form: str = "cross_entropy"
    mse_reduction: str = "mean"
    channel_mode: str = "broadcast"

    def __post_init__(self):
        if self.form not in LOSS_FORMS:
            raise ValueError(f"form must be one of {LOSS_FORMS}, got {self.form!r}")
        if self.mse_reduction not in MSE_REDUCTIONS:
            raise ValueError(
                f"mse_reduction must be one of {MSE_REDUCTIONS}, got {self.mse_reduction!r}"
            )
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(
                f"channel_mode must be one of {CHANNEL_MODES}, got {self.channel_mode!r}"
            )


@dataclass
class LossBreakdown:
    """Scalar loss components; tensors stay attached to the graph."""

    l_cls: torch.Tensor
    l_mse_per_stage: dict[int, torch.Tensor] = field(default_factory=dict)
    total: torch.Tensor = None

    def as_floats(self) -> dict:
        return {
            "l_cls": float(self.l_cls),
            "l_mse_per_stage": {k: float(v) for k, v in self.l_mse_per_stage.items()},
            "total": float(self.total),
        }


def classification_loss(
    probs: torch.Tensor, labels: torch.Tensor, form: str = "cross_entropy"
) -> torch.Tensor:
    """Classification loss over softmax probabilities.

    cross_entropy: -(1/N) sum log p_i(y_i), probabilities floored at
    1e-12 before the log. literal_probability: 1 - (1/N) sum p_i(y_i).
    """
    if form not in LOSS_FORMS:
        raise ValueError(f"form must be one of {LOSS_FORMS}, got {form!r}")
    if probs.ndim != 2 or probs.shape[1] != 2:
        raise ValueError(f"expected (N, 2) probabilities, got {tuple(probs.shape)}")
    if labels.ndim != 1 or labels.shape[0] != probs.shape[0]:
        raise ValueError(
            f"labels shape {tuple(labels.shape)} does not match probs {tuple(probs.shape)}"
        )
    correct = probs[torch.arange(probs.shape[0]), labels]
    if form == "cross_entropy":
        return -correct.clamp_min(PROB_FLOOR).log().mean()
    return 1.0 - correct.mean()


def stage_mse_loss(
    features: torch.Tensor,
    mask_level: torch.Tensor,
    reduction: str = "mean",
    channel_mode: str = "broadcast",
) -> torch.Tensor:
    """Squared distance between stage features and the stage-aligned mask.

    Accepts batched (N, C, H, W) features with (N, H, W) masks, or a
    single sample as (C, H, W) with (H, W). The mask is detached so it
    acts as a constant target.
    """
    if features.ndim == 3 and mask_level.ndim == 2:
        features = features.unsqueeze(0)
        mask_level = mask_level.unsqueeze(0)
    if features.ndim != 4 or mask_level.ndim != 3:
        raise ValueError(
            f"expected (N,C,H,W) features with (N,H,W) masks, got "
            f"{tuple(features.shape)} and {tuple(mask_level.shape)}"
        )
    if features.shape[2:] != mask_level.shape[1:] or features.shape[0] != mask_level.shape[0]:
        raise ValueError(
            f"feature maps {tuple(features.shape)} and mask {tuple(mask_level.shape)} "
            "are not spatially aligned"
        )
    target = mask_level.detach().to(features.dtype).unsqueeze(1)
    if channel_mode == "mean":
        features = features.mean(dim=1, keepdim=True)
    elif channel_mode != "broadcast":
        raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}, got {channel_mode!r}")
    sq = (features - target) ** 2
    if reduction == "mean":
        return sq.mean()
    if reduction == "sum":
        # per-sample summed squared error, averaged over the batch
        return sq.sum(dim=(1, 2, 3)).mean()
    raise ValueError(f"reduction must be one of {MSE_REDUCTIONS}, got {reduction!r}")


def total_loss(
    probs: torch.Tensor,
    labels: torch.Tensor,
    stage_features: dict[int, torch.Tensor],
    mask_levels: dict[int, torch.Tensor],
    selection: StageSelection,
    config: LossConfig = LossConfig(),
    mse_weight: float = 1.0,
) -> LossBreakdown:
    """Combine the classification loss with the selected stage MSE terms.

    ``l_mse_per_stage`` holds the weighted contributions, so the
    breakdown always satisfies total = l_cls + sum of the stage terms.
    An empty selection reduces exactly to the classification loss.
    """
    if mse_weight < 0:
        raise ValueError(f"mse_weight must be >= 0, got {mse_weight}")
    l_cls = classification_loss(probs, labels, form=config.form)
    per_stage = {}
    # accumulate in double so the breakdown identity holds to ~1e-16
    total = l_cls.to(torch.float64)
    for stage in selection.stages:
        if stage not in stage_features:
            raise ValueError(f"no features supplied for selected stage {stage}")
        if stage not in mask_levels:
            raise ValueError(f"no mask level supplied for selected stage {stage}")
        term = mse_weight * stage_mse_loss(
            stage_features[stage],
            mask_levels[stage],
            reduction=config.mse_reduction,
            channel_mode=config.channel_mode,
        )
        per_stage[stage] = term
        total = total + term.to(torch.float64)
    return LossBreakdown(l_cls=l_cls, l_mse_per_stage=per_stage, total=total)
