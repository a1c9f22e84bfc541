"""Brute-force row-wise disparity search on time maps, used as the reference path."""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DimensionMismatchError
from .events import EventStream, dedup_coordinates, filter_positive
from .geometry import RectifyMap, depths_from_disparities, rectify_events
from .models import AgreementStats, DedupMode, FrameSlice, StereoCalibration
from .timemap import TimeMap, build_rectified_camera_time_map
from .xmap import DepthFrame

logger = logging.getLogger(__name__)

HISTOGRAM_RANGE_PX = 5


class DisparityMap(BaseModel):
    """Per-cell disparity on the rectified camera grid; NaN is undefined."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    values: np.ndarray

    @model_validator(mode="after")
    def _check_values(self) -> "DisparityMap":
        if self.values.shape != (self.height, self.width):
            raise ValueError(f"disparity map has shape {self.values.shape}, expected {(self.height, self.width)}")
        if np.any(self.values[~np.isnan(self.values)] < 0):
            raise ValueError("disparities must be non-negative")
        self.values.flags.writeable = False
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DisparityMap):
            return NotImplemented
        return np.array_equal(self.values, other.values, equal_nan=True)

    __hash__ = None  # type: ignore[assignment]

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def to_depth(self, calib: StereoCalibration) -> np.ndarray:
        """Depth image; zero disparities have no depth and stay undefined."""
        depth = np.full(self.values.shape, np.nan)
        positive = self.defined & (np.nan_to_num(self.values) > 0)
        depth[positive] = depths_from_disparities(self.values[positive], calib)
        return depth


def esl_init_search(cam_map: TimeMap, proj_map: TimeMap, max_disparity: int) -> DisparityMap:
    """Per camera cell, the d in [0, max_disparity] minimizing |cam(x, y) - proj(x + d, y)|.

    Both maps live on rectified grids sharing rows. Ties go to the smallest d.
    """
    if cam_map.height > proj_map.height:
        raise DimensionMismatchError(
            f"camera map has {cam_map.height} rows, projector map only {proj_map.height}"
        )
    if not 0 <= max_disparity < proj_map.width:
        raise DimensionMismatchError(f"max_disparity {max_disparity} must be below the projector width {proj_map.width}")

    cam = cam_map.values
    proj = proj_map.values[: cam_map.height]
    height, width = cam.shape
    best = np.full((height, width), np.inf)
    best_d = np.full((height, width), np.nan)
    xs = np.arange(width)

    for d in range(max_disparity + 1):
        target = xs + d
        valid = target < proj_map.width
        if not valid.any():
            break
        candidate = np.full((height, width), np.nan)
        candidate[:, valid] = proj[:, target[valid]]
        diff = np.abs(cam - candidate)
        diff = np.where(np.isnan(diff), np.inf, diff)
        better = diff < best
        best[better] = diff[better]
        best_d[better] = d

    result = DisparityMap(width=width, height=height, values=best_d)
    logger.debug(f"Disparity search over 0..{max_disparity}: {result.defined.mean():.1%} cells matched")
    return result


def disparity_map_from_frame(frame: DepthFrame, width: int, height: int) -> DisparityMap:
    """Rasterize per-event disparities, keeping the nearest (largest disparity) per pixel."""
    values = np.full(height * width, -np.inf)
    if len(frame):
        xi = np.floor(frame.x_r + 0.5).astype(np.int64)
        yi = np.floor(frame.y_r + 0.5).astype(np.int64)
        inside = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
        np.maximum.at(values, yi[inside] * width + xi[inside], frame.disparity[inside])
    values[np.isinf(values)] = np.nan
    return DisparityMap(width=width, height=height, values=values.reshape(height, width))


def compare_disparities(a: DepthFrame, b: DisparityMap, tol: float = 1.0) -> AgreementStats:
    """Agreement of per-event disparities with the map cell under each event."""
    stats = AgreementStats(tolerance_px=tol)
    if len(a) == 0:
        return stats
    xi = np.floor(a.x_r + 0.5).astype(np.int64)
    yi = np.floor(a.y_r + 0.5).astype(np.int64)
    inside = (xi >= 0) & (xi < b.width) & (yi >= 0) & (yi < b.height)
    reference = np.full(len(a), np.nan)
    reference[inside] = b.values[yi[inside], xi[inside]]
    both = ~np.isnan(reference)
    if not both.any():
        logger.warning("No event falls on a defined disparity cell; comparison is undefined")
        return stats

    diff = a.disparity[both] - reference[both]
    edges = np.arange(-HISTOGRAM_RANGE_PX - 0.5, HISTOGRAM_RANGE_PX + 1.0)
    counts, _ = np.histogram(np.clip(diff, -HISTOGRAM_RANGE_PX, HISTOGRAM_RANGE_PX), bins=edges)
    return AgreementStats(
        tolerance_px=tol,
        n_compared=int(both.sum()),
        fraction_within=float(np.mean(np.abs(diff) <= tol + 1e-9)),
        mean_abs_difference=float(np.mean(np.abs(diff))),
        histogram_edges=edges.tolist(),
        histogram_counts=counts.tolist(),
    )


def oracle_disparity_map(
    frame_events: EventStream,
    frame: FrameSlice,
    proj_map: TimeMap,
    rect: RectifyMap,
    calib: StereoCalibration,
    max_disparity: int = 128,
    dedup_mode: DedupMode = DedupMode.KEEP_FIRST,
) -> DisparityMap:
    """Disparity map of one frame by searching the rectified projector time map."""
    events = dedup_coordinates(filter_positive(frame_events), dedup_mode)
    cam_map = build_rectified_camera_time_map(events, frame, rect, calib.camera.width, calib.camera.height)
    return esl_init_search(cam_map, proj_map, max_disparity)


def oracle_depth_frame(
    frame_events: EventStream,
    frame: FrameSlice,
    proj_map: TimeMap,
    rect: RectifyMap,
    calib: StereoCalibration,
    max_disparity: int = 128,
    dedup_mode: DedupMode = DedupMode.KEEP_FIRST,
) -> DepthFrame:
    """Per-event depth read from the brute-force disparity map, for record files."""
    disparity = oracle_disparity_map(frame_events, frame, proj_map, rect, calib, max_disparity, dedup_mode)
    events = dedup_coordinates(filter_positive(frame_events), dedup_mode)
    if len(events) == 0:
        return DepthFrame.empty(frame)
    x_r, y_r = rectify_events(rect, events.x, events.y)
    with np.errstate(invalid="ignore"):
        xi = np.floor(x_r + 0.5)
        yi = np.floor(y_r + 0.5)
        inside = (xi >= 0) & (xi < disparity.width) & (yi >= 0) & (yi < disparity.height)
    d = np.full(len(events), np.nan)
    d[inside] = disparity.values[yi[inside].astype(np.int64), xi[inside].astype(np.int64)]
    with np.errstate(invalid="ignore"):
        ok = d > 0
    return DepthFrame(
        x_r=x_r[ok],
        y_r=y_r[ok],
        disparity=d[ok],
        depth=depths_from_disparities(d[ok], calib),
        t=events.t[ok].astype(np.int64),
        start_t=frame.start_t,
        end_t=frame.end_t,
    )


def oracle_depth_image(
    frame_events: EventStream,
    frame: FrameSlice,
    proj_map: TimeMap,
    rect: RectifyMap,
    calib: StereoCalibration,
    max_disparity: int = 128,
    dedup_mode: DedupMode = DedupMode.KEEP_FIRST,
) -> np.ndarray:
    """Depth image of one frame through the brute-force search path."""
    disparity = oracle_disparity_map(frame_events, frame, proj_map, rect, calib, max_disparity, dedup_mode)
    return disparity.to_depth(calib)
