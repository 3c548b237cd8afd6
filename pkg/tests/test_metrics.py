import numpy as np
import pytest

from sstrack.boxes import BBox
from sstrack.evaluate import (ao_sr, center_error, norm_center_error,
                              norm_precision, precision, sequence_scores,
                              success_auc, success_curve)


class TestSuccessAuc:
    def test_perfect_tracking_is_one(self):
        assert success_auc([1.0] * 10) == 1.0

    def test_all_miss_is_zero(self):
        assert success_auc([0.0] * 10) == 0.0

    def test_strict_inequality_inside_grid(self):
        # iou exactly at a threshold does not count for that threshold
        assert success_curve([0.5])[50] == 0.0
        assert success_curve([0.5])[49] == 1.0

    def test_matches_brute_force_count(self, rng):
        ious = rng.uniform(0, 1, 500)
        thresholds = np.linspace(0, 1, 101)
        brute = np.mean([(ious > t).mean() for t in thresholds[:-1]]
                        + [(ious >= 1.0).mean()])
        assert abs(success_auc(ious) - brute) < 1e-9

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            success_auc([])


class TestPrecision:
    def test_perfect(self):
        assert precision([0.0, 0.0]) == 1.0

    def test_threshold_strict(self):
        assert precision([19.999, 20.0, 25.0]) == pytest.approx(1 / 3)

    def test_norm_precision_perfect(self):
        assert norm_precision([0.0, 0.0]) == 1.0

    def test_norm_precision_all_far(self):
        assert norm_precision([0.9, 2.0]) == 0.0

    def test_norm_precision_intermediate(self):
        # error 0.25 passes thresholds > 0.25: 50 of 101 bins
        assert norm_precision([0.25]) == pytest.approx(50 / 101)


class TestAoSr:
    def test_worked_example(self):
        ao, sr50, sr75 = ao_sr([0.6, 0.4])
        assert ao == 0.5
        assert sr50 == 0.5
        assert sr75 == 0.0

    def test_perfect(self):
        assert ao_sr([1.0, 1.0]) == (1.0, 1.0, 1.0)

    def test_sr_strict(self):
        _, sr50, sr75 = ao_sr([0.5, 0.75])
        assert sr50 == 0.5  # 0.75 > 0.5, but 0.5 > 0.5 is false
        assert sr75 == 0.0


class TestErrors:
    def test_center_error(self):
        assert center_error(BBox(0, 0, 2, 2), BBox(3, 4, 2, 2)) == 5.0

    def test_norm_center_error_uses_gt_size(self):
        pred = BBox(12, 10, 2, 2)
        gt = BBox(10, 10, 4, 8)
        assert norm_center_error(pred, gt) == pytest.approx(0.5)

    def test_sequence_scores_skips_frame_one(self):
        gt = [BBox(0, 0, 2, 2), BBox(1, 0, 2, 2), BBox(2, 0, 2, 2)]
        pred = [BBox(1, 0, 2, 2), BBox(2, 0, 2, 2)]
        ious, errs, nerrs = sequence_scores(pred, gt)
        assert len(ious) == len(errs) == len(nerrs) == 2
        assert ious == [1.0, 1.0]
