"""Composite objective: localization, classification, and their combination."""

import numpy as np
import pytest

from podcount import LossConfig, Tensor, cls_loss, gradient_check, loc_loss, total_loss


class TestLocLoss:
    def test_perfect_matches_zero(self):
        gt = np.array([[3.0, 4.0], [10.0, 1.0]])
        assert loc_loss(gt, Tensor(gt.copy())).item() == 0.0

    def test_single_pair_squared_distance(self):
        out = loc_loss(np.array([[0.0, 0.0]]), Tensor(np.array([[3.0, 4.0]])))
        assert out.item() == pytest.approx(25.0)

    def test_mean_over_pairs(self):
        gt = np.array([[0.0, 0.0], [0.0, 0.0]])
        pred = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert loc_loss(gt, Tensor(pred)).item() == pytest.approx(12.5)

    def test_empty_contributes_zero(self):
        assert loc_loss(np.empty((0, 2)), None).item() == 0.0

    def test_shrinking_one_pair_strictly_decreases(self):
        gt = np.array([[0.0, 0.0], [10.0, 10.0]])
        far = np.array([[5.0, 0.0], [11.0, 10.0]])
        near = np.array([[4.0, 0.0], [11.0, 10.0]])
        assert loc_loss(gt, Tensor(near)).item() < loc_loss(gt, Tensor(far)).item()

    def test_nonnegative(self, rng):
        for _ in range(20):
            gt = rng.uniform(0, 100, (5, 2))
            pred = rng.uniform(0, 100, (5, 2))
            assert loc_loss(gt, Tensor(pred)).item() >= 0.0


class TestClsLoss:
    def test_saturated_optimum_is_near_zero(self):
        confs = np.array([1.0 - 1e-7, 1.0 - 1e-7, 1e-7, 1e-7])
        out = cls_loss(Tensor(confs), [0, 1], LossConfig(lambda1=1.0))
        assert out.item() == pytest.approx(0.0, abs=1e-6)

    def test_hand_case_half_confidences(self):
        confs = np.array([0.5, 0.5])
        out = cls_loss(Tensor(confs), [0], LossConfig(lambda1=1.0))
        assert out.item() == pytest.approx(np.log(2.0), abs=1e-9)

    def test_zero_negative_weight_ignores_negatives(self, rng):
        pos_conf = 0.73
        for neg in (0.01, 0.5, 0.99):
            confs = np.array([pos_conf, neg])
            out = cls_loss(Tensor(confs), [0], LossConfig(lambda1=0.0))
            assert out.item() == pytest.approx(-np.log(pos_conf) / 2.0, abs=1e-9)

    def test_clamp_keeps_saturated_confidences_finite(self):
        confs = np.array([1.0, 0.0])  # would be log(0) without clamping
        out = cls_loss(Tensor(confs), [1], LossConfig(lambda1=1.0))
        assert np.isfinite(out.item())

    def test_no_positives_all_background(self):
        confs = np.array([0.2, 0.4, 0.6])
        out = cls_loss(Tensor(confs), [], LossConfig(lambda1=1.0))
        expected = -np.log([0.8, 0.6, 0.4]).sum() / 3.0
        assert out.item() == pytest.approx(expected, abs=1e-9)

    def test_nonnegative_after_clamp(self, rng):
        for _ in range(30):
            m = int(rng.integers(1, 12))
            confs = rng.uniform(0, 1, m)
            n_pos = int(rng.integers(0, m + 1))
            pos = rng.choice(m, size=n_pos, replace=False)
            val = cls_loss(Tensor(np.clip(confs, 1e-9, 1 - 1e-9)), pos,
                           LossConfig(lambda1=float(rng.uniform(0, 2)))).item()
            assert val >= 0.0


class TestTotalLoss:
    def test_weighted_combination(self):
        cfg = LossConfig(lambda2=0.5)
        out = total_loss(25.0, float(np.log(2.0)), cfg)
        assert out.item() == pytest.approx(25.0 + 0.5 * np.log(2.0), abs=1e-9)

    def test_zero_weight_drops_classification(self):
        assert total_loss(7.0, 123.0, LossConfig(lambda2=0.0)).item() == 7.0

    def test_zero_losses(self):
        assert total_loss(0.0, 0.0, LossConfig()).item() == 0.0

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            LossConfig(lambda1=-0.1)
        with pytest.raises(ValueError):
            LossConfig(lambda2=-1.0)


class TestLossGradients:
    def test_gradcheck_through_both_terms(self, rng):
        gt = rng.uniform(0, 30, (3, 2))
        cfg = LossConfig(lambda1=0.5, lambda2=0.5)
        params = {
            "pts": Tensor(rng.uniform(0, 30, (3, 2)), requires_grad=True),
            "confs": Tensor(rng.uniform(0.2, 0.8, 7), requires_grad=True),
        }

        def f(p):
            return total_loss(loc_loss(gt, p["pts"]),
                              cls_loss(p["confs"], [0, 3, 5], cfg), cfg)

        assert gradient_check(f, params) < 1e-6
