import numpy as np
import pytest

from posecount import evaluation
from posecount.data import GroundTruthCount
from posecount.errors import DataError, ValidationError


class TestObo:
    def test_worked_example(self):
        assert evaluation.obo([5, 10], [6, 15]) == 0.5

    def test_exact_match(self):
        assert evaluation.obo([3, 7, 2], [3, 7, 2]) == 1.0

    def test_miss_by_two(self):
        assert evaluation.obo([3], [5]) == 0.0

    def test_within_one_counts(self):
        assert evaluation.obo([4], [5]) == 1.0
        assert evaluation.obo([4], [3]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            evaluation.obo([1, 2], [1])

    def test_empty(self):
        with pytest.raises(ValidationError):
            evaluation.obo([], [])


class TestMae:
    def test_worked_example(self):
        assert evaluation.mae([5, 10], [6, 15]) == pytest.approx(0.35, abs=1e-12)

    def test_exact_match(self):
        assert evaluation.mae([5, 10], [5, 10]) == 0.0

    def test_complete_miss(self):
        assert evaluation.mae([4], [0]) == 1.0

    def test_zero_ground_truth_rejected(self):
        with pytest.raises(ValidationError, match="0"):
            evaluation.mae([0], [1])


class TestMetricProperties:
    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        gt = rng.integers(1, 20, 30)
        pred = rng.integers(0, 20, 30)
        perm = rng.permutation(30)
        assert evaluation.obo(gt, pred) == evaluation.obo(gt[perm], pred[perm])
        assert evaluation.mae(gt, pred) == pytest.approx(
            evaluation.mae(gt[perm], pred[perm]), abs=1e-12
        )

    def test_error_growth_monotone(self):
        gt = [10, 10, 10]
        near = [10, 11, 10]
        far = [10, 15, 10]
        assert evaluation.obo(gt, far) <= evaluation.obo(gt, near)
        assert evaluation.mae(gt, far) > evaluation.mae(gt, near)

    def test_ranges(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(1, 20))
            gt = rng.integers(1, 30, n)
            pred = rng.integers(0, 30, n)
            assert 0.0 <= evaluation.obo(gt, pred) <= 1.0
            assert evaluation.mae(gt, pred) >= 0.0


class TestEvaluate:
    def test_single_exact_match(self):
        gt = [GroundTruthCount("v1", "squat", 4)]
        pred = [GroundTruthCount("v1", "squat", 4)]
        result = evaluation.evaluate(gt, pred)
        assert result.mae == 0.0
        assert result.obo == 1.0
        assert len(result.per_video) == 1

    def test_missing_prediction(self):
        gt = [GroundTruthCount("v1", "squat", 4)]
        pred = [GroundTruthCount("v2", "squat", 4)]
        with pytest.raises(DataError, match="v1"):
            evaluation.evaluate(gt, pred)

    def test_empty_ground_truth(self):
        with pytest.raises(DataError):
            evaluation.evaluate([], [])

    def test_join_on_video_and_class(self):
        gt = [
            GroundTruthCount("v1", "squat", 4),
            GroundTruthCount("v1", "pull_up", 8),
        ]
        pred = [
            GroundTruthCount("v1", "pull_up", 9),
            GroundTruthCount("v1", "squat", 4),
            GroundTruthCount("v9", "squat", 2),  # extra prediction is ignored
        ]
        result = evaluation.evaluate(gt, pred)
        assert result.obo == 1.0
        assert result.mae == pytest.approx((1 / 8 + 0) / 2, abs=1e-12)

    def test_summary_json(self):
        gt = [GroundTruthCount("v1", "squat", 5), GroundTruthCount("v2", "squat", 10)]
        pred = [GroundTruthCount("v1", "squat", 6), GroundTruthCount("v2", "squat", 15)]
        result = evaluation.evaluate(gt, pred)
        assert evaluation.summary_json(result) == '{"mae": 0.35, "obo": 0.5, "n": 2}'

    def test_per_video_csv(self):
        gt = [GroundTruthCount("v1", "squat", 5)]
        pred = [GroundTruthCount("v1", "squat", 6)]
        text = evaluation.per_video_csv(evaluation.evaluate(gt, pred))
        lines = text.splitlines()
        assert lines[0].startswith("video_id,")
        assert lines[1] == "v1,squat,5,6,1,0.2"
