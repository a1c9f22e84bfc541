"""Pinhole models, stereo rectification and disparity to depth conversion."""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import GeometryError
from .models import StereoCalibration

logger = logging.getLogger(__name__)

MIN_BASELINE_M = 1e-9


class RectifyMap(BaseModel):
    """Per source pixel rectified coordinates; NaN marks pixels out of view."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    map_x: np.ndarray
    map_y: np.ndarray

    @model_validator(mode="after")
    def _check_grids(self) -> "RectifyMap":
        for grid in (self.map_x, self.map_y):
            if grid.shape != (self.height, self.width):
                raise ValueError(f"rectify grid has shape {grid.shape}, expected {(self.height, self.width)}")
            if np.isinf(grid).any():
                raise ValueError("rectify grid holds infinite entries")
            grid.flags.writeable = False
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RectifyMap):
            return NotImplemented
        return np.array_equal(self.map_x, other.map_x, equal_nan=True) and np.array_equal(
            self.map_y, other.map_y, equal_nan=True
        )

    __hash__ = None  # type: ignore[assignment]


def rectified_matrix(calib: StereoCalibration) -> np.ndarray:
    """Intrinsics shared by both rectified views: camera fx and principal point."""
    f = calib.rectified_focal
    cx, cy = calib.rectified_principal_point
    return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


def rectifying_rotation(calib: StereoCalibration) -> np.ndarray:
    """Rotation from the camera frame into the rectified frame.

    The rectified x axis points from the projector centre to the camera
    centre, so a point in front of both views has x_proj - x_cam > 0.
    """
    baseline = calib.baseline
    if baseline < MIN_BASELINE_M:
        raise GeometryError(f"degenerate baseline {baseline:.3e} m")
    e1 = calib.rotation_matrix.T @ calib.translation_vector / baseline
    e2 = np.cross(np.array([0.0, 0.0, 1.0]), e1)
    norm = np.linalg.norm(e2)
    if norm < 1e-9:
        raise GeometryError("baseline is parallel to the optical axis")
    e2 /= norm
    e3 = np.cross(e1, e2)
    return np.vstack([e1, e2, e3])


def rectifying_homographies(calib: StereoCalibration) -> tuple[np.ndarray, np.ndarray]:
    """Homographies taking raw camera / projector pixels to rectified pixels."""
    rect = rectifying_rotation(calib)
    k_rect = rectified_matrix(calib)
    h_cam = k_rect @ rect @ np.linalg.inv(calib.camera.matrix)
    h_proj = k_rect @ rect @ calib.rotation_matrix.T @ np.linalg.inv(calib.projector.matrix)
    return h_cam, h_proj


def apply_homography(h: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map pixel coordinates through a homography; points sent behind the view become NaN."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    u = h[0, 0] * x + h[0, 1] * y + h[0, 2]
    v = h[1, 0] * x + h[1, 1] * y + h[1, 2]
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        valid = w > 0
        xr = np.where(valid, u / np.where(valid, w, 1.0), np.nan)
        yr = np.where(valid, v / np.where(valid, w, 1.0), np.nan)
    return xr, yr


def _map_from_homography(h: np.ndarray, width: int, height: int) -> RectifyMap:
    ys, xs = np.mgrid[0:height, 0:width]
    map_x, map_y = apply_homography(h, xs, ys)
    return RectifyMap(width=width, height=height, map_x=map_x, map_y=map_y)


def compute_rectification(calib: StereoCalibration) -> tuple[RectifyMap, RectifyMap]:
    """Rectification maps for the camera and the projector (pinhole, no distortion)."""
    h_cam, h_proj = rectifying_homographies(calib)
    cam = _map_from_homography(h_cam, calib.camera.width, calib.camera.height)
    proj = _map_from_homography(h_proj, calib.projector.width, calib.projector.height)
    logger.debug(f"Rectification computed (f={calib.rectified_focal:.1f}px, B={calib.baseline:.4f}m)")
    return cam, proj


def rectify_point(rect: RectifyMap, x: int, y: int) -> tuple[float, float] | None:
    """Rectified coordinates of a source pixel, None when it is out of view."""
    if not (0 <= x < rect.width and 0 <= y < rect.height):
        raise GeometryError(f"pixel ({x}, {y}) outside {rect.width}x{rect.height}")
    xr = float(rect.map_x[y, x])
    yr = float(rect.map_y[y, x])
    if np.isnan(xr) or np.isnan(yr):
        return None
    return xr, yr


def rectify_events(rect: RectifyMap, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized rectify_point for in-bounds integer pixels."""
    return rect.map_x[y, x], rect.map_y[y, x]


def disparity_to_depth(d: float, calib: StereoCalibration) -> float:
    """Depth in meters of a positive disparity."""
    if not d > 0:
        raise GeometryError(f"disparity must be positive, got {d}")
    return calib.rectified_focal * calib.baseline / d


def depths_from_disparities(d: np.ndarray, calib: StereoCalibration) -> np.ndarray:
    """Vectorized disparity_to_depth; callers pass positive disparities only."""
    return calib.rectified_focal * calib.baseline / np.asarray(d, dtype=np.float64)


def event_to_3d(x_r: float, y_r: float, d: float, calib: StereoCalibration) -> np.ndarray:
    """3D point (rectified camera frame, meters) of a rectified event with disparity d."""
    z = disparity_to_depth(d, calib)
    f = calib.rectified_focal
    cx, cy = calib.rectified_principal_point
    return np.array([(x_r - cx) * z / f, (y_r - cy) * z / f, z])


def events_to_points(x_r: np.ndarray, y_r: np.ndarray, d: np.ndarray, calib: StereoCalibration) -> np.ndarray:
    """Vectorized event_to_3d, returns an (N, 3) array."""
    z = depths_from_disparities(d, calib)
    f = calib.rectified_focal
    cx, cy = calib.rectified_principal_point
    return np.column_stack([(np.asarray(x_r) - cx) * z / f, (np.asarray(y_r) - cy) * z / f, z])


def project_points(k: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection of (N, 3) points given in the view's own frame."""
    z = points[:, 2]
    return k[0, 0] * points[:, 0] / z + k[0, 2], k[1, 1] * points[:, 1] / z + k[1, 2]


def camera_to_projector(points: np.ndarray, calib: StereoCalibration) -> np.ndarray:
    """Camera frame points expressed in the projector frame."""
    return points @ calib.rotation_matrix.T + calib.translation_vector


def projector_center(calib: StereoCalibration) -> np.ndarray:
    """Projector optical centre in camera coordinates."""
    return -calib.rotation_matrix.T @ calib.translation_vector


def rectified_projections(points: np.ndarray, calib: StereoCalibration) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Rectified camera (x, y) and projector (x, y) of camera frame points."""
    rect = rectifying_rotation(calib)
    k_rect = rectified_matrix(calib)
    cam = points @ rect.T
    proj = (points - projector_center(calib)) @ rect.T
    xc, yc = project_points(k_rect, cam)
    xp, yp = project_points(k_rect, proj)
    return xc, yc, xp, yp


def rectified_depths(points: np.ndarray, calib: StereoCalibration) -> np.ndarray:
    """Z of camera frame points in the rectified camera frame."""
    return points @ rectifying_rotation(calib)[2]
