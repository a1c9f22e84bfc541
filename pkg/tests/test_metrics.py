"""Tests for depth accuracy metrics."""

import numpy as np
import pytest

from xmaps_depth.errors import DimensionMismatchError, MetricsError
from xmaps_depth.metrics import (
    evaluate,
    fill_rate,
    median_quantization_bound,
    plane_fit_rmse,
    quantization_bound,
    rmse,
)
from xmaps_depth.models import DiscardReason


class TestRmse:
    """Test cases for rmse."""

    def test_reports_centimeters(self):
        est = np.array([[1.01, 0.98, np.nan]])
        ref = np.array([[1.0, 1.0, 1.0]])

        assert rmse(est, ref) == pytest.approx(np.sqrt((1.0 + 4.0) / 2))

    def test_no_shared_cell(self):
        with pytest.raises(MetricsError):
            rmse(np.array([[np.nan, 1.0]]), np.array([[1.0, np.nan]]))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            rmse(np.ones((2, 2)), np.ones((2, 3)))


class TestFillRate:
    """Test cases for fill_rate."""

    def test_counts_cells_within_one_percent(self):
        """Threshold is 1 % of the mean reference depth: 1 cm at 1 m."""
        ref = np.array([[1.0, 1.0, 1.0, 1.0, np.nan]])
        est = np.array([[1.005, 1.02, np.nan, 0.999, 1.0]])

        assert fill_rate(est, ref) == pytest.approx(0.5)

    def test_empty_reference(self):
        with pytest.raises(MetricsError):
            fill_rate(np.ones((1, 2)), np.full((1, 2), np.nan))


class TestPlaneFit:
    """Test cases for plane_fit_rmse."""

    def test_points_on_a_plane(self):
        rng = np.random.default_rng(0)
        xy = rng.uniform(-1, 1, (100, 2))
        points = np.column_stack([xy, 0.3 * xy[:, 0] - 0.2 * xy[:, 1] + 1.0])

        assert plane_fit_rmse(points) == pytest.approx(0.0, abs=1e-9)

    def test_offset_points(self):
        """Half the points 1 cm above, half 1 cm below: residual 1 cm."""
        xs, ys = np.meshgrid(np.arange(10.0), np.arange(10.0))
        z = np.where((xs + ys) % 2 == 0, 0.01, -0.01)
        points = np.column_stack([xs.ravel(), ys.ravel(), z.ravel()])

        assert plane_fit_rmse(points) == pytest.approx(1.0, rel=1e-3)

    def test_collinear_points(self):
        points = np.column_stack([np.arange(5.0), np.arange(5.0), np.zeros(5)])

        with pytest.raises(MetricsError):
            plane_fit_rmse(points)

    def test_too_few_points(self):
        with pytest.raises(MetricsError):
            plane_fit_rmse(np.zeros((2, 3)))

    def test_invariant_under_rigid_motion(self):
        """Rotating and translating the cloud leaves the residual unchanged."""
        rng = np.random.default_rng(1)
        xy = rng.uniform(-1, 1, (200, 2))
        points = np.column_stack([xy, 0.1 * xy[:, 0] + 1.0 + rng.normal(0, 0.005, 200)])
        q, r = np.linalg.qr(rng.normal(size=(3, 3)))
        rotation = q * np.sign(np.diag(r))
        if np.linalg.det(rotation) < 0:
            rotation[:, 0] *= -1

        moved = points @ rotation.T + np.array([0.4, -2.0, 3.5])

        assert plane_fit_rmse(moved) == pytest.approx(plane_fit_rmse(points), rel=1e-9)


class TestQuantization:
    """Test cases for quantization_bound."""

    def test_depth_step(self, small_calib):
        """f * B = 10 px m: stepping from 10 px to 9 px moves 1 m to 1.111 m."""
        assert quantization_bound(10.0, small_calib) == pytest.approx(10 / 9 - 1.0)

    def test_needs_disparity_above_one(self, small_calib):
        with pytest.raises(MetricsError):
            quantization_bound(1.0, small_calib)

    def test_median_bound_in_centimeters(self, small_calib):
        bound = median_quantization_bound(np.array([9.0, 10.0, 40.0]), small_calib)

        assert bound == pytest.approx(100 * quantization_bound(10.0, small_calib))

    @pytest.mark.parametrize("disparities", [np.array([]), np.array([0.5, 1.0, 3.0])])
    def test_median_bound_undefined(self, small_calib, disparities):
        assert median_quantization_bound(disparities, small_calib) is None


class TestEvaluate:
    """Test cases for evaluate."""

    def test_report(self):
        ref = np.full((2, 2), 1.0)
        est = np.array([[1.0, 1.02], [np.nan, 1.0]])
        counts = {DiscardReason.UNDEFINED_ENTRY: 3}

        report = evaluate(est, ref, discard_counts=counts)

        assert report.n_compared == 3
        assert report.fill_rate == pytest.approx(0.5)
        assert report.rmse_cm == pytest.approx(np.sqrt(4.0 / 3))
        assert report.mean_scene_depth == pytest.approx(1.0)
        assert report.plane_fit_rmse_cm is None
        assert report.quantization_bound_cm is None
        assert report.discard_counts == counts

    def test_with_plane_points(self):
        ref = np.ones((1, 2))
        points = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]])

        report = evaluate(ref, ref, points=points, quantization_bound_cm=1.2)

        assert report.rmse_cm == 0.0
        assert report.plane_fit_rmse_cm == pytest.approx(0.0, abs=1e-9)
        assert report.quantization_bound_cm == 1.2
