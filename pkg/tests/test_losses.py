import math

import pytest
import torch

from textrot.losses import (
    LossConfig,
    StageSelection,
    classification_loss,
    stage_mse_loss,
    total_loss,
)


class TestStageSelection:
    def test_parse(self):
        assert StageSelection.from_string("2,3").stages == (2, 3)
        assert StageSelection.from_string("").stages == ()
        assert StageSelection.from_string("3,2,2").stages == (2, 3)

    def test_invalid(self):
        with pytest.raises(ValueError):
            StageSelection((0, 2))
        with pytest.raises(ValueError):
            StageSelection.from_string("2,five")

    def test_membership_and_truthiness(self):
        sel = StageSelection((2, 3))
        assert 2 in sel and 4 not in sel
        assert sel and not StageSelection(())
        assert str(sel) == "2,3"


class TestClassificationLoss:
    def test_perfect_cross_entropy_zero(self):
        probs = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        labels = torch.tensor([0, 1])
        assert float(classification_loss(probs, labels)) == pytest.approx(0.0)

    def test_uniform_is_log2(self):
        probs = torch.full((5, 2), 0.5)
        labels = torch.tensor([0, 1, 0, 1, 0])
        # closed form: -log 0.5 = log 2
        assert float(classification_loss(probs, labels)) == pytest.approx(
            math.log(2.0), rel=1e-6
        )

    def test_perfect_literal_zero(self):
        probs = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        labels = torch.tensor([0, 1])
        loss = classification_loss(probs, labels, form="literal_probability")
        assert float(loss) == pytest.approx(0.0)

    def test_literal_is_one_minus_mean_prob(self):
        probs = torch.tensor([[0.8, 0.2], [0.4, 0.6]])
        labels = torch.tensor([0, 1])
        loss = classification_loss(probs, labels, form="literal_probability")
        assert float(loss) == pytest.approx(1.0 - (0.8 + 0.6) / 2)

    def test_zero_prob_floored(self):
        probs = torch.tensor([[0.0, 1.0]])
        labels = torch.tensor([0])
        loss = float(classification_loss(probs, labels))
        assert math.isfinite(loss)
        assert loss == pytest.approx(-math.log(1e-12))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            classification_loss(torch.zeros(3, 2), torch.zeros(4, dtype=torch.long))
        with pytest.raises(ValueError):
            classification_loss(torch.zeros(3, 3), torch.zeros(3, dtype=torch.long))

    def test_unknown_form(self):
        with pytest.raises(ValueError):
            classification_loss(
                torch.full((1, 2), 0.5), torch.tensor([0]), form="hinge"
            )


class TestStageMse:
    def test_zero_residual(self):
        mask = (torch.rand(2, 8, 8) < 0.5).float()
        features = mask.unsqueeze(1).expand(2, 3, 8, 8).clone()
        assert float(stage_mse_loss(features, mask)) == pytest.approx(0.0)

    def test_unit_residual(self):
        features = torch.zeros(1, 4, 4, 4)
        mask = torch.ones(1, 4, 4)
        assert float(stage_mse_loss(features, mask)) == pytest.approx(1.0)

    def test_half_mask_quarter(self):
        # F = 0.5 everywhere, M half zeros half ones -> (0.5)^2 everywhere
        features = torch.full((1, 2, 2, 2), 0.5)
        mask = torch.tensor([[[0.0, 1.0], [1.0, 0.0]]])
        assert float(stage_mse_loss(features, mask)) == pytest.approx(0.25)

    def test_single_sample_shapes(self):
        loss = stage_mse_loss(torch.zeros(3, 4, 4), torch.ones(4, 4))
        assert float(loss) == pytest.approx(1.0)

    def test_spatial_mismatch_rejected(self):
        with pytest.raises(ValueError):
            stage_mse_loss(torch.zeros(1, 2, 8, 8), torch.zeros(1, 4, 4))

    def test_sum_reduction(self):
        features = torch.zeros(2, 3, 2, 2)
        mask = torch.ones(2, 2, 2)
        # per sample: 3*2*2 unit residuals = 12, batch mean = 12
        loss = stage_mse_loss(features, mask, reduction="sum")
        assert float(loss) == pytest.approx(12.0)

    def test_channel_mean_mode(self):
        features = torch.stack(
            [torch.zeros(2, 2), torch.ones(2, 2)], dim=0
        ).unsqueeze(0)
        mask = torch.full((1, 2, 2), 0.5)
        loss = stage_mse_loss(features, mask, channel_mode="mean")
        assert float(loss) == pytest.approx(0.0)

    def test_mask_gets_no_gradient(self):
        features = torch.rand(1, 2, 4, 4, requires_grad=True)
        mask = torch.rand(1, 4, 4, requires_grad=True)
        loss = stage_mse_loss(features, mask)
        loss.backward()
        assert features.grad is not None and features.grad.abs().sum() > 0
        assert mask.grad is None

    def test_mask_value_still_changes_loss(self):
        features = torch.full((1, 1, 2, 2), 0.5)
        low = stage_mse_loss(features, torch.zeros(1, 2, 2))
        high = stage_mse_loss(features, torch.ones(1, 2, 2) * 2)
        assert float(high) > float(low)


def _fixture(batch=3):
    torch.manual_seed(0)
    probs = torch.softmax(torch.randn(batch, 2), dim=1)
    labels = torch.randint(0, 2, (batch,))
    features = {i: torch.rand(batch, 4, 32 // 2**i, 32 // 2**i) for i in range(1, 5)}
    masks = {
        i: (torch.rand(batch, 32 // 2**i, 32 // 2**i) < 0.4).float()
        for i in range(1, 5)
    }
    return probs, labels, features, masks


class TestTotalLoss:
    def test_empty_selection_reduces_to_cls(self):
        probs, labels, features, masks = _fixture()
        out = total_loss(probs, labels, features, masks, StageSelection(()))
        assert torch.equal(out.total, out.l_cls)
        assert out.l_mse_per_stage == {}

    def test_selection_two_terms(self):
        probs, labels, features, masks = _fixture()
        out = total_loss(probs, labels, features, masks, StageSelection((2, 3)))
        assert set(out.l_mse_per_stage) == {2, 3}

    def test_zero_weight(self):
        probs, labels, features, masks = _fixture()
        out = total_loss(
            probs, labels, features, masks, StageSelection((1, 2, 3, 4)), mse_weight=0.0
        )
        assert float(out.total) == pytest.approx(float(out.l_cls))

    def test_additivity(self):
        probs, labels, features, masks = _fixture()
        out = total_loss(
            probs, labels, features, masks, StageSelection((1, 2, 3, 4)), mse_weight=0.7
        )
        parts = float(out.l_cls) + sum(float(v) for v in out.l_mse_per_stage.values())
        assert float(out.total) == pytest.approx(parts, rel=1e-9)

    def test_all_components_nonnegative(self):
        probs, labels, features, masks = _fixture()
        for form in ("cross_entropy", "literal_probability"):
            out = total_loss(
                probs,
                labels,
                features,
                masks,
                StageSelection((1, 4)),
                config=LossConfig(form=form),
            )
            assert float(out.l_cls) >= 0
            assert all(float(v) >= 0 for v in out.l_mse_per_stage.values())
            assert float(out.total) >= 0

    def test_monotone_in_selection(self):
        probs, labels, features, masks = _fixture()
        totals = {}
        for sel in [(), (2,), (2, 3), (1, 2, 3), (1, 2, 3, 4)]:
            out = total_loss(probs, labels, features, masks, StageSelection(sel))
            totals[sel] = float(out.total)
        ordered = [totals[s] for s in [(), (2,), (2, 3), (1, 2, 3), (1, 2, 3, 4)]]
        assert ordered == sorted(ordered)

    def test_missing_stage_rejected(self):
        probs, labels, features, masks = _fixture()
        del masks[3]
        with pytest.raises(ValueError):
            total_loss(probs, labels, features, masks, StageSelection((3,)))

    def test_negative_weight_rejected(self):
        probs, labels, features, masks = _fixture()
        with pytest.raises(ValueError):
            total_loss(
                probs, labels, features, masks, StageSelection(()), mse_weight=-1.0
            )

    def test_breakdown_floats(self):
        probs, labels, features, masks = _fixture()
        out = total_loss(probs, labels, features, masks, StageSelection((2,)))
        d = out.as_floats()
        assert set(d) == {"l_cls", "l_mse_per_stage", "total"}
        assert d["total"] == pytest.approx(
            d["l_cls"] + sum(d["l_mse_per_stage"].values())
        )
