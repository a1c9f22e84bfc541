"""Tests for rectification and triangulation."""

import numpy as np
import pytest

from xmaps_depth.errors import GeometryError
from xmaps_depth.geometry import (
    apply_homography,
    camera_to_projector,
    compute_rectification,
    depths_from_disparities,
    disparity_to_depth,
    event_to_3d,
    events_to_points,
    project_points,
    projector_center,
    rectified_matrix,
    rectified_projections,
    rectified_depths,
    rectify_events,
    rectify_point,
    rectifying_homographies,
    rectifying_rotation,
)
from xmaps_depth.models import PinholeIntrinsics, StereoCalibration


@pytest.fixture
def rotated_calib(small_calib) -> StereoCalibration:
    """Small rig with the projector yawed by 1 degree."""
    a = np.deg2rad(1.0)
    c, s = float(np.cos(a)), float(np.sin(a))
    return small_calib.model_copy(update={"rotation": ((c, 0.0, s), (0.0, 1.0, 0.0), (-s, 0.0, c))})


@pytest.fixture
def points() -> np.ndarray:
    rng = np.random.default_rng(7)
    return np.column_stack([rng.uniform(-0.3, 0.3, 50), rng.uniform(-0.2, 0.2, 50), rng.uniform(0.6, 2.0, 50)])


class TestRectification:
    """Test cases for rectification maps and homographies."""

    def test_aligned_camera_map_is_identity(self, small_calib):
        """With camera fx = fy the rectified camera grid is the raw grid."""
        cam, proj = compute_rectification(small_calib)
        ys, xs = np.mgrid[0:120, 0:160]

        assert np.allclose(cam.map_x, xs, atol=1e-9)
        assert np.allclose(cam.map_y, ys, atol=1e-9)
        assert (proj.width, proj.height) == (240, 120)

    def test_projector_map_of_small_rig(self, small_calib):
        """Projector column u lands on rectified x = u / 3 + 40."""
        _, proj = compute_rectification(small_calib)

        assert proj.map_x[0, 0] == pytest.approx(40.0)
        assert proj.map_x[10, 239] == pytest.approx(239 / 3 + 40)
        assert proj.map_y[37, 5] == pytest.approx(37.0)

    def test_rectifying_rotation_is_orthonormal(self, rotated_calib):
        rect = rectifying_rotation(rotated_calib)

        assert np.allclose(rect @ rect.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(rect) == pytest.approx(1.0)

    def test_rotated_corner_matches_direct_projection(self, rotated_calib):
        """Corner (0, 0) of the camera map equals the ray rotated and reprojected by hand."""
        cam, _ = compute_rectification(rotated_calib)
        ray = np.linalg.inv(rotated_calib.camera.matrix) @ np.array([0.0, 0.0, 1.0])
        rotated = rectifying_rotation(rotated_calib) @ ray
        expected = rectified_matrix(rotated_calib) @ (rotated / rotated[2])

        assert rectify_point(cam, 0, 0) == pytest.approx((expected[0], expected[1]), abs=1e-6)

    def test_rectified_rows_agree(self, rotated_calib, points):
        """Both views see a point on the same rectified row, with positive disparity."""
        xc, yc, xp, yp = rectified_projections(points, rotated_calib)

        assert np.allclose(yc, yp, atol=1e-9)
        assert np.all(xp - xc > 0)

    def test_projector_homography_matches_projection(self, rotated_calib, points):
        """Raw projector pixels mapped through the homography land on the rectified projection."""
        _, h_proj = rectifying_homographies(rotated_calib)
        u, v = project_points(rotated_calib.projector.matrix, camera_to_projector(points, rotated_calib))
        _, _, xp, yp = rectified_projections(points, rotated_calib)

        xr, yr = apply_homography(h_proj, u, v)

        assert np.allclose(xr, xp, atol=1e-6)
        assert np.allclose(yr, yp, atol=1e-6)

    def test_roll_about_baseline_keeps_rows_aligned(self, small_calib):
        """A 1 degree roll about the baseline axis still maps 100 points to shared rectified rows."""
        a = np.deg2rad(1.0)
        c, s = float(np.cos(a)), float(np.sin(a))
        rolled = small_calib.model_copy(update={"rotation": ((1.0, 0.0, 0.0), (0.0, c, -s), (0.0, s, c))})
        rng = np.random.default_rng(11)
        pts = np.column_stack([rng.uniform(-0.3, 0.3, 100), rng.uniform(-0.2, 0.2, 100), rng.uniform(0.6, 2.0, 100)])
        h_cam, h_proj = rectifying_homographies(rolled)
        xc, yc = project_points(rolled.camera.matrix, pts)
        xp, yp = project_points(rolled.projector.matrix, camera_to_projector(pts, rolled))

        _, y_cam = apply_homography(h_cam, xc, yc)
        _, y_proj = apply_homography(h_proj, xp, yp)

        assert np.max(np.abs(y_cam - y_proj)) / rolled.camera.height < 1e-6

    def test_projector_center(self, small_calib):
        assert projector_center(small_calib) == pytest.approx([-0.1, 0.0, 0.0])

    def test_rectify_point_out_of_bounds(self, small_rect):
        """A pixel outside the source grid is an error."""
        with pytest.raises(GeometryError):
            rectify_point(small_rect, 160, 0)

    def test_rectify_events_vectorized(self, small_rect):
        x = np.array([3, 50], dtype=np.uint16)
        y = np.array([4, 60], dtype=np.uint16)

        xr, yr = rectify_events(small_rect, x, y)

        assert xr == pytest.approx([3.0, 50.0])
        assert yr == pytest.approx([4.0, 60.0])

    def test_degenerate_baseline(self):
        """Camera and projector at the same place cannot be rectified."""
        calib = StereoCalibration(
            camera=PinholeIntrinsics(fx=100, fy=100, cx=50, cy=50, width=100, height=100),
            projector=PinholeIntrinsics(fx=100, fy=100, cx=50, cy=50, width=100, height=100),
            translation=(0.0, 0.0, 0.0),
        )

        with pytest.raises(GeometryError):
            compute_rectification(calib)

    def test_apply_homography_behind_view(self):
        """Points sent to w <= 0 have no image."""
        h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])

        xr, yr = apply_homography(h, np.array([1.0]), np.array([1.0]))

        assert np.isnan(xr[0]) and np.isnan(yr[0])


class TestTriangulation:
    """Test cases for disparity to depth conversion."""

    def test_disparity_to_depth(self, small_calib):
        """f B / d with f = 100 px and B = 0.1 m."""
        assert disparity_to_depth(10.0, small_calib) == pytest.approx(1.0)
        assert disparity_to_depth(20.0, small_calib) == pytest.approx(0.5)

    def test_depth_strictly_decreasing(self, small_calib):
        depths = depths_from_disparities(np.arange(1, 50, dtype=np.float64), small_calib)

        assert np.all(np.diff(depths) < 0)

    @pytest.mark.parametrize("d", [0.0, -1.0, float("nan")])
    def test_nonpositive_disparity(self, small_calib, d):
        with pytest.raises(GeometryError):
            disparity_to_depth(d, small_calib)

    def test_event_to_3d_round_trip(self, rotated_calib, points):
        """Rectified coordinates and disparity recover the rectified point."""
        xc, yc, xp, _ = rectified_projections(points, rotated_calib)
        rect = rectifying_rotation(rotated_calib)

        recovered = events_to_points(xc, yc, xp - xc, rotated_calib)
        single = event_to_3d(float(xc[0]), float(yc[0]), float(xp[0] - xc[0]), rotated_calib)

        assert np.allclose(recovered, points @ rect.T, atol=1e-9)
        assert np.allclose(single, recovered[0])
        assert np.allclose(recovered[:, 2], rectified_depths(points, rotated_calib))
