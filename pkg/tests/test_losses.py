"""
Tests for the objective functions.

Test cases:
1. Triplet loss on hand-computed distances; hinge at zero
2. Zero-mean regularizer; empty batch → EmptyBatch
3. InfoNCE: aligned positive → small loss; zero-norm → ZeroNormEmbedding; no negatives → EmptyBatch
4. LDAM margins on the reference counts; zero margins reduce to cross-entropy
5. LDAM input errors (zero count, bad index, wrong margin length)
6. Gradients of every loss match finite differences (float64)
7. lambda2 schedule and joint weights
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest
import torch
import torch.nn.functional as F

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import DimensionMismatch, EmptyBatch, IndexOutOfRange, ZeroCount, ZeroNormEmbedding
from src.losses import (
    AlignmentBatch,
    alignment_loss,
    infonce_alignment_loss,
    joint_loss_weights,
    lambda2_at,
    ldam_loss,
    ldam_margins,
    total_joint_loss,
    triplet_loss,
    zero_mean_reg,
)
from src.schemas import REFERENCE_INTERACTION_COUNTS, Lambda2Schedule, LossWeights


def t(*values) -> torch.Tensor:
    return torch.tensor(values, dtype=torch.float64)


class TestTripletLoss:
    """triplet_loss"""

    def test_hand_computed(self):
        """d(a,p)=1, d(a,n)=1.2, alpha 0.5 → 0.3"""
        loss = triplet_loss(t(0.0, 0.0), t(1.0, 0.0), t(0.0, 1.2), alpha=0.5)
        assert loss.item() == pytest.approx(0.3)

    def test_satisfied_margin(self):
        """Negative far away → 0"""
        loss = triplet_loss(t(0.0, 0.0), t(0.1, 0.0), t(5.0, 0.0), alpha=0.5)
        assert loss.item() == 0.0

    def test_batch_mean(self):
        """Rows with losses 0.3 and 0 → 0.15"""
        a = torch.stack([t(0.0, 0.0), t(0.0, 0.0)])
        p = torch.stack([t(1.0, 0.0), t(0.1, 0.0)])
        n = torch.stack([t(0.0, 1.2), t(5.0, 0.0)])
        assert triplet_loss(a, p, n, alpha=0.5).item() == pytest.approx(0.15)

    def test_shape_mismatch(self):
        """(2,) anchor with (3,) positive → DimensionMismatch"""
        with pytest.raises(DimensionMismatch):
            triplet_loss(t(0.0, 0.0), t(1.0, 0.0, 0.0), t(0.0, 1.0), alpha=0.5)


class TestZeroMean:
    """zero_mean_reg"""

    def test_symmetric_batch(self):
        """Rows x and -x → 0"""
        batch = torch.stack([t(1.0, 2.0), t(-1.0, -2.0)])
        assert zero_mean_reg(batch).item() == 0.0

    def test_value(self):
        """Rows (1, 0) and (3, 0) → mean (2, 0) → 4"""
        assert zero_mean_reg([t(1.0, 0.0), t(3.0, 0.0)]).item() == pytest.approx(4.0)

    def test_empty(self):
        """Empty list → EmptyBatch"""
        with pytest.raises(EmptyBatch):
            zero_mean_reg([])


class TestInfoNce:
    """infonce_alignment_loss / alignment_loss"""

    def test_aligned_positive_small_loss(self):
        """Positive parallel to anchor, negatives orthogonal → loss < 1e-6 at tau 0.03"""
        batch = AlignmentBatch(
            z_int=t(1.0, 0.0, 0.0),
            z_act_pos=[t(2.0, 0.0, 0.0)],
            z_int_negs=torch.stack([t(0.0, 1.0, 0.0), t(0.0, 0.0, 1.0)]),
        )
        assert infonce_alignment_loss(batch, tau=0.03).item() < 1e-6

    def test_hand_computed(self):
        """s+ = 0, one negative s- = 0 → log 2"""
        batch = AlignmentBatch(z_int=t(1.0, 0.0), z_act_pos=[t(0.0, 1.0)], z_int_negs=torch.stack([t(0.0, -1.0)]))
        assert infonce_alignment_loss(batch, tau=0.5).item() == pytest.approx(math.log(2.0))

    def test_two_positives_averaged(self):
        """Loss with positives p1, p2 = mean of the single-positive losses"""
        negs = torch.stack([t(0.0, 1.0), t(-1.0, 0.2)])
        p1, p2 = t(1.0, 0.3), t(0.5, -0.5)
        both = infonce_alignment_loss(AlignmentBatch(z_int=t(1.0, 0.0), z_act_pos=[p1, p2], z_int_negs=negs), 0.1)
        one = infonce_alignment_loss(AlignmentBatch(z_int=t(1.0, 0.0), z_act_pos=[p1], z_int_negs=negs), 0.1)
        two = infonce_alignment_loss(AlignmentBatch(z_int=t(1.0, 0.0), z_act_pos=[p2], z_int_negs=negs), 0.1)
        assert both.item() == pytest.approx((one.item() + two.item()) / 2)

    def test_zero_norm_anchor(self):
        """Zero anchor → ZeroNormEmbedding"""
        batch = AlignmentBatch(z_int=t(0.0, 0.0), z_act_pos=[t(1.0, 0.0)], z_int_negs=torch.stack([t(0.0, 1.0)]))
        with pytest.raises(ZeroNormEmbedding):
            infonce_alignment_loss(batch, tau=0.03)

    def test_no_negatives(self):
        """M = 0 → EmptyBatch"""
        batch = AlignmentBatch(z_int=t(1.0, 0.0), z_act_pos=[t(1.0, 0.0)], z_int_negs=torch.zeros((0, 2)))
        with pytest.raises(EmptyBatch):
            infonce_alignment_loss(batch, tau=0.03)

    def test_dimension_mismatch(self):
        """Positive of dim 3 against anchor of dim 2 → DimensionMismatch"""
        batch = AlignmentBatch(z_int=t(1.0, 0.0), z_act_pos=[t(1.0, 0.0, 0.0)], z_int_negs=torch.stack([t(0.0, 1.0)]))
        with pytest.raises(DimensionMismatch):
            infonce_alignment_loss(batch, tau=0.03)

    def test_no_anchors_gives_zero(self):
        """Empty anchor list → 0"""
        assert alignment_loss([], tau=0.03).item() == 0.0


class TestLdam:
    """ldam_margins / ldam_loss"""

    def test_reference_margins(self):
        """Counts {3637, 1379, 178, 117}, C = 4 → {0.515, 0.656, 1.095, 1.216}"""
        margins = ldam_margins(REFERENCE_INTERACTION_COUNTS, scale=4.0)
        np.testing.assert_allclose(margins, [0.515, 0.656, 1.095, 1.216], atol=1e-3)

    def test_rarer_class_larger_margin(self):
        """Margins increase as counts decrease"""
        margins = ldam_margins([1000, 100, 10, 1], scale=1.0)
        assert np.all(np.diff(margins) > 0)

    def test_zero_margins_equal_cross_entropy(self):
        """Delta = 0 → F.cross_entropy"""
        logits = torch.randn(6, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        target = torch.tensor([0, 1, 2, 3, 1, 0])
        assert ldam_loss(logits, target, np.zeros(4)).item() == pytest.approx(F.cross_entropy(logits, target).item())

    def test_margin_increases_loss(self):
        """Positive margin on the true class → larger loss than plain CE"""
        logits = t(2.0, 0.5, 0.1, -1.0)
        plain = ldam_loss(logits, 0, np.zeros(4))
        margin = ldam_loss(logits, 0, np.array([0.5, 0.5, 0.5, 0.5]))
        assert margin.item() > plain.item()

    def test_hand_computed(self):
        """Logits (1, 0), y 0, margins (1, 0) → log 2"""
        assert ldam_loss(t(1.0, 0.0), 0, [1.0, 0.0]).item() == pytest.approx(math.log(2.0))

    def test_zero_count(self):
        """A class with 0 samples → ZeroCount"""
        with pytest.raises(ZeroCount):
            ldam_margins({"no_interaction": 10, "interest": 5, "conflict": 0, "mount": 2}, scale=4.0)

    def test_index_out_of_range(self):
        """y = 4 with C = 4 → IndexOutOfRange"""
        with pytest.raises(IndexOutOfRange):
            ldam_loss(t(1.0, 0.0, 0.0, 0.0), 4, np.zeros(4))

    def test_wrong_margin_length(self):
        """3 margins for 4 classes → DimensionMismatch"""
        with pytest.raises(DimensionMismatch):
            ldam_loss(t(1.0, 0.0, 0.0, 0.0), 0, np.zeros(3))


class TestGradients:
    """Analytic gradients against finite differences"""

    def test_triplet_gradient(self):
        """gradcheck away from the hinge kink"""
        gen = torch.Generator().manual_seed(1)
        a, p, n = (torch.randn(3, 5, dtype=torch.float64, generator=gen, requires_grad=True) for _ in range(3))
        assert torch.autograd.gradcheck(lambda a, p, n: triplet_loss(a, p, n, alpha=10.0), (a, p, n))

    def test_zero_mean_gradient(self):
        """gradcheck of the squared mean norm"""
        z = torch.randn(4, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(2), requires_grad=True)
        assert torch.autograd.gradcheck(zero_mean_reg, (z,))

    def test_infonce_gradient(self):
        """gradcheck through normalization and logsumexp"""
        gen = torch.Generator().manual_seed(3)
        anchor = torch.randn(6, dtype=torch.float64, generator=gen, requires_grad=True)
        positive = torch.randn(6, dtype=torch.float64, generator=gen, requires_grad=True)
        negatives = torch.randn(3, 6, dtype=torch.float64, generator=gen, requires_grad=True)

        def fn(a, p, n):
            return infonce_alignment_loss(AlignmentBatch(z_int=a, z_act_pos=[p], z_int_negs=n), tau=0.5)

        assert torch.autograd.gradcheck(fn, (anchor, positive, negatives))

    def test_ldam_gradient(self):
        """gradcheck of margin-shifted cross-entropy"""
        logits = torch.randn(5, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(4), requires_grad=True)
        target = torch.tensor([0, 3, 1, 2, 0])
        margins = ldam_margins([50, 20, 5, 2], scale=1.0)
        assert torch.autograd.gradcheck(lambda x: ldam_loss(x, target, margins), (logits,))


class TestSchedule:
    """lambda2_at / joint_loss_weights / total_joint_loss"""

    def test_linear_decay(self):
        """0.1 → 0 over 100 steps: step 50 → 0.05, beyond horizon → 0"""
        schedule = Lambda2Schedule(start=0.1, end=0.0, total_steps=100)
        assert lambda2_at(0, schedule) == pytest.approx(0.1)
        assert lambda2_at(50, schedule) == pytest.approx(0.05)
        assert lambda2_at(500, schedule) == pytest.approx(0.0)

    def test_no_horizon_is_constant(self):
        """total_steps unset and none given → start value"""
        assert lambda2_at(1000, Lambda2Schedule(start=0.3)) == 0.3

    def test_classification_decay_weights(self):
        """decay_target classification → (lambda1, lambda2, lambda2)"""
        weights = LossWeights(lambda1=1.0, lambda2_schedule=Lambda2Schedule(start=0.1, end=0.0, total_steps=10))
        assert joint_loss_weights(0, weights) == pytest.approx((1.0, 0.1, 0.1))

    def test_alignment_decay_weights(self):
        """decay_target alignment → roles swap"""
        schedule = Lambda2Schedule(start=0.1, end=0.0, total_steps=10, decay_target="alignment")
        weights = LossWeights(lambda1=1.0, lambda2_schedule=schedule)
        assert joint_loss_weights(0, weights) == pytest.approx((0.1, 1.0, 0.1))

    def test_total(self):
        """aln 2, cls 3, weights (1, 0.1) → 2.3"""
        weights = LossWeights(lambda1=1.0, lambda2_schedule=Lambda2Schedule(start=0.1, end=0.1))
        total = total_joint_loss(t(2.0)[0], t(3.0)[0], step=0, weights=weights, total_steps=10)
        assert total.item() == pytest.approx(2.3)
