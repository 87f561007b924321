import math

import numpy as np
import pytest

from app.core.exceptions import LossError, ShapeError, ValidationException
from app.models.pose import Keypoint, LossWeights, PersonInstance, PoseSet
from app.pose.codec import (
    compute_losses,
    heatmap_loss,
    loss_gradients,
    render_ground_truth,
    tag_loss,
    total_loss,
)
from app.pose.gradcheck import central_difference, relative_error, run_gradient_suite


def _person(points, tag=None, num_keypoints=None):
    """points: lista de (x, y) o None por tipo."""
    keypoints = [
        None if p is None else Keypoint(x=p[0], y=p[1], tag=tag, type_index=k)
        for k, p in enumerate(points)
    ]
    if num_keypoints:
        keypoints += [None] * (num_keypoints - len(keypoints))
    return PersonInstance(keypoints=keypoints)


def _poses(*persons, num_keypoints=1):
    return PoseSet(num_keypoints=num_keypoints, instances=list(persons))


def _uniform_tagmaps(poses, values, extents):
    """Tagmaps con el valor de cada persona en sus píxeles etiquetados."""
    tags = np.zeros((poses.num_keypoints, *extents))
    for instance, value in zip(poses.instances, values):
        for kp in instance.labeled():
            row, col = kp.pixel()
            tags[kp.type_index, row, col] = value
    return tags


class TestRenderGroundTruth:
    """Pruebas del renderizado de heatmaps"""

    def test_peak_value_and_falloff(self):
        heatmaps, tagmaps, mask = render_ground_truth(_poses(_person([(5, 5)], tag=0.7)), (11, 11), sigma=2.0)
        assert heatmaps.shape == (1, 11, 11)
        assert heatmaps[0, 5, 5] == 1.0
        assert heatmaps[0, 5, 7] == pytest.approx(math.exp(-1), rel=1e-6)
        assert heatmaps[0, 7, 5] == pytest.approx(0.36788, abs=1e-5)
        assert tagmaps[0, 5, 5] == pytest.approx(0.7)
        assert mask.tolist() == [[True]]

    def test_persons_combine_by_max(self):
        poses = _poses(_person([(0, 0)], tag=1.0), _person([(4, 0)], tag=2.0))
        heatmaps, tagmaps, _ = render_ground_truth(poses, (1, 5), sigma=2.0)
        assert heatmaps[0, 0, 1] == pytest.approx(math.exp(-1 / 4), rel=1e-6)
        assert heatmaps[0, 0, 3] == pytest.approx(math.exp(-1 / 4), rel=1e-6)
        assert tagmaps[0, 0, 1] == 1.0
        assert tagmaps[0, 0, 3] == 2.0

    def test_unlabeled_keypoints_are_masked(self):
        poses = _poses(_person([(1, 1), None]), num_keypoints=2)
        heatmaps, _, mask = render_ground_truth(poses, (4, 4))
        assert mask.tolist() == [[True, False]]
        assert not heatmaps[1].any()

    def test_out_of_bounds(self):
        with pytest.raises(ValidationException):
            render_ground_truth(_poses(_person([(4, 0)])), (4, 4))


class TestLosses:
    """Pruebas de las pérdidas"""

    def test_heatmap_loss_zero_and_single_pixel(self, rng):
        gt = rng.uniform(0, 1, (2, 3, 3))
        assert heatmap_loss(gt, gt) == 0.0
        pred = gt.copy()
        pred[1, 2, 0] += 1.0
        assert heatmap_loss(pred, gt) == pytest.approx(1 / 18)

    def test_heatmap_loss_matches_direct_sum(self, rng):
        pred, gt = rng.uniform(0, 1, (2, 4, 4)), rng.uniform(0, 1, (2, 4, 4))
        expected = 0.0
        for k in range(2):
            for r in range(4):
                for c in range(4):
                    expected += (pred[k, r, c] - gt[k, r, c]) ** 2
        assert heatmap_loss(pred, gt) == pytest.approx(expected / 32, abs=1e-6)

    def test_heatmap_loss_channel_permutation_invariance(self, rng):
        pred, gt = rng.uniform(0, 1, (3, 5, 5)), rng.uniform(0, 1, (3, 5, 5))
        perm = [2, 0, 1]
        assert heatmap_loss(pred[perm], gt[perm]) == pytest.approx(heatmap_loss(pred, gt))

    def test_heatmap_loss_accepts_batch_and_rejects_mismatch(self, rng):
        gt = rng.uniform(0, 1, (2, 3, 3))
        assert heatmap_loss(gt[None], gt) == 0.0
        with pytest.raises(ShapeError):
            heatmap_loss(gt, gt[:1])

    def test_single_uniform_person_has_zero_tag_loss(self):
        poses = _poses(_person([(0, 0), (2, 1), (3, 3)]), num_keypoints=3)
        assert tag_loss(_uniform_tagmaps(poses, [0.4], (4, 4)), poses) == pytest.approx(0.0, abs=1e-20)

    def test_two_persons_with_equal_tags_push_half(self):
        poses = _poses(_person([(0, 0), (1, 1)]), _person([(3, 3), (2, 2)]), num_keypoints=2)
        tags = _uniform_tagmaps(poses, [0.3, 0.3], (4, 4))
        losses = compute_losses(np.zeros((2, 4, 4)), tags, np.zeros((2, 4, 4)), poses)
        assert losses.pull == pytest.approx(0.0, abs=1e-20)
        assert losses.push == pytest.approx(0.5)

    def test_far_apart_tags_vanish(self):
        poses = _poses(_person([(0, 0)]), _person([(3, 3)]))
        assert tag_loss(_uniform_tagmaps(poses, [0.0, 13.0], (4, 4)), poses) < 1e-12

    def test_pull_term_by_hand(self):
        poses = _poses(_person([(0, 0), (1, 0)]), num_keypoints=2)
        tags = np.zeros((2, 1, 2))
        tags[0, 0, 0], tags[1, 0, 1] = 1.0, 3.0
        # media 2, desvíos ±1, N = 1
        assert tag_loss(tags, poses) == pytest.approx(2.0)

    def test_tags_are_sampled_at_rounded_positions(self):
        poses = _poses(_person([(1.5, 0.4)]), _person([(0, 1)]))
        assert poses.instances[0].keypoints[0].pixel() == (0, 2)
        tags = np.zeros((1, 2, 3))
        tags[0, 0, 2] = 5.0
        assert tag_loss(tags, poses) == pytest.approx(0.5 * math.exp(-12.5))

    def test_no_labeled_persons_is_an_error(self):
        with pytest.raises(LossError):
            tag_loss(np.zeros((1, 2, 2)), _poses())
        with pytest.raises(LossError):
            tag_loss(np.zeros((2, 2, 2)), _poses(_person([None, None]), num_keypoints=2))

    def test_tag_loss_rejects_type_mismatch(self):
        with pytest.raises(ShapeError):
            tag_loss(np.zeros((3, 2, 2)), _poses(_person([(0, 0)])))

    def test_total_loss(self):
        assert total_loss(1.0, 0.0) == pytest.approx(0.99)
        assert total_loss(0.0, 0.0) == 0.0
        assert total_loss(2.0, 0.5) - total_loss(1.0, 0.5) == pytest.approx(0.99)
        assert total_loss(1.0, 1.0, LossWeights(alpha=0.5, beta=2.0)) == pytest.approx(2.5)

    def test_tag_loss_is_non_negative(self, rng):
        for _ in range(20):
            poses = _poses(_person([(0, 0), (1, 1)]), _person([(2, 2), (3, 0)]), num_keypoints=2)
            assert tag_loss(rng.normal(0, 2, (2, 4, 4)), poses) >= 0.0


class TestGradients:
    """Pruebas de los gradientes analíticos"""

    def test_optimum_has_zero_heatmap_and_pull_gradient(self):
        poses = _poses(_person([(0, 0), (1, 1)]), _person([(3, 3), (2, 2)]), num_keypoints=2)
        gt, _, _ = render_ground_truth(poses, (4, 4))
        tags = _uniform_tagmaps(poses, [0.0, 20.0], (4, 4))
        grad_h, grad_t = loss_gradients(gt, tags, gt, poses)
        assert not grad_h.any()
        np.testing.assert_allclose(grad_t, 0.0, atol=1e-12)

    def test_push_separates_mean_tags(self):
        poses = _poses(_person([(0, 0)]), _person([(2, 0)]))
        tags = _uniform_tagmaps(poses, [0.0, 0.5], (1, 3))
        _, grad_t = loss_gradients(np.zeros((1, 1, 3)), tags, np.zeros((1, 1, 3)), poses)
        # el descenso baja el tag menor y sube el mayor
        assert grad_t[0, 0, 0] > 0
        assert grad_t[0, 0, 2] < 0
        assert grad_t[0, 0, 1] == 0

    def test_heatmap_gradient_formula(self, rng):
        pred, gt = rng.uniform(0, 1, (2, 3, 3)), rng.uniform(0, 1, (2, 3, 3))
        poses = _poses(_person([(0, 0)], num_keypoints=2), num_keypoints=2)
        grad_h, _ = loss_gradients(pred, np.zeros((2, 3, 3)), gt, poses)
        np.testing.assert_allclose(grad_h, 0.99 * 2 * (pred - gt) / 18)

    def test_matches_finite_differences_on_one_instance(self, rng):
        poses = _poses(_person([(0, 0), (2, 1)]), _person([(3, 2), (1, 3)]), num_keypoints=2)
        pred_h, gt_h = rng.uniform(0, 1, (2, 4, 4)), rng.uniform(0, 1, (2, 4, 4))
        pred_t = rng.normal(0, 1, (2, 4, 4))
        _, grad_t = loss_gradients(pred_h, pred_t, gt_h, poses)

        def loss_of_t(t):
            return compute_losses(pred_h, t, gt_h, poses).total

        for index in [(0, 0, 0), (1, 1, 2), (0, 2, 3), (1, 3, 1), (0, 3, 3)]:
            numeric = central_difference(loss_of_t, pred_t, index, 1e-4)
            assert relative_error(float(grad_t[index]), numeric) < 1e-4

    def test_suite_passes(self):
        report = run_gradient_suite(seed=7, trials=20)
        assert report.trials == 20
        assert report.passed
        assert report.max_relative_error < 1e-4
