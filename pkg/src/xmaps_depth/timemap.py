"""Camera and projector time maps, and projector time map calibration.

A time map stores, per pixel, the normalized time at which the laser was
seen there during one projected frame. NaN marks cells without a value.
The projector is mounted tilted, so the scan time grows along x.
"""

import logging
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DimensionMismatchError, TimeMapError
from .events import EventStream, first_event_mask
from .geometry import RectifyMap, apply_homography, rectify_events, rectifying_homographies
from .models import FrameSlice, ScanModel, StereoCalibration, TimeMapVariant

logger = logging.getLogger(__name__)

MIN_REGION_FRACTION = 0.05
_SNAP = 1e-6


class TimeMap(BaseModel):
    """Dense grid of normalized times in [0, 1]; NaN is undefined."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    values: np.ndarray

    @model_validator(mode="after")
    def _check_values(self) -> "TimeMap":
        if self.values.shape != (self.height, self.width):
            raise ValueError(f"time map values have shape {self.values.shape}, expected {(self.height, self.width)}")
        defined = self.values[~np.isnan(self.values)]
        if defined.size and (defined.min() < 0.0 or defined.max() > 1.0):
            raise ValueError("time map values must lie in [0, 1]")
        self.values.flags.writeable = False
        return self

    @classmethod
    def undefined(cls, width: int, height: int) -> "TimeMap":
        return cls(width=width, height=height, values=np.full((height, width), np.nan))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeMap):
            return NotImplemented
        return np.array_equal(self.values, other.values, equal_nan=True)

    __hash__ = None  # type: ignore[assignment]

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def defined_fraction(self) -> float:
        return float(self.defined.mean())


def _normalized_times(t: np.ndarray, frame: FrameSlice) -> np.ndarray:
    if frame.span <= 0:
        raise TimeMapError(f"frame starting at {frame.start_t}us has zero span")
    return np.clip((t.astype(np.float64) - frame.start_t) / frame.span, 0.0, 1.0)


def build_camera_time_map(frame_events: EventStream, frame: FrameSlice) -> TimeMap:
    """Time map of one frame on the raw camera grid, first event per pixel."""
    times = _normalized_times(frame_events.t, frame)
    width, height = frame_events.sensor_width, frame_events.sensor_height
    values = np.full((height, width), np.nan)
    first = first_event_mask(frame_events.x, frame_events.y, width, height)
    values[frame_events.y[first], frame_events.x[first]] = times[first]
    return TimeMap(width=width, height=height, values=values)


def build_rectified_camera_time_map(
    frame_events: EventStream, frame: FrameSlice, rect: RectifyMap, width: int | None = None, height: int | None = None
) -> TimeMap:
    """Time map of one frame on the rectified camera grid (rounded coordinates)."""
    if (rect.width, rect.height) != (frame_events.sensor_width, frame_events.sensor_height):
        raise DimensionMismatchError("rectification map does not match the sensor resolution")
    width = width or rect.width
    height = height or rect.height
    times = _normalized_times(frame_events.t, frame)
    x_r, y_r = rectify_events(rect, frame_events.x, frame_events.y)
    with np.errstate(invalid="ignore"):
        xi = np.round(x_r)
        yi = np.round(y_r)
        inside = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
    xi = xi[inside].astype(np.int64)
    yi = yi[inside].astype(np.int64)
    times = times[inside]
    values = np.full((height, width), np.nan)
    first = first_event_mask(xi, yi, width, height)
    values[yi[first], xi[first]] = times[first]
    return TimeMap(width=width, height=height, values=values)


def ideal_projector_time_map(
    width: int,
    height: int,
    scan: ScanModel | None = None,
    variant: TimeMapVariant = TimeMapVariant.SIMPLE,
) -> TimeMap:
    """Time map of a projector with constant laser speed and instant line jumps.

    The simple variant gives x / width; the full variant adds the progress
    within the scan line, y / height, before dividing by width.
    """
    if scan is not None and scan.rows != width:
        raise DimensionMismatchError(f"scan model has {scan.rows} lines but the projector is {width} wide")
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    if variant is TimeMapVariant.FULL:
        values = (xs + ys / height) / width
    else:
        values = xs / width
    return TimeMap(width=width, height=height, values=np.clip(values, 0.0, 1.0))


def average_normalized_time_maps(maps: Sequence[TimeMap]) -> TimeMap:
    """Per-cell mean over the maps in which the cell is defined."""
    if not maps:
        raise TimeMapError("no time maps to average")
    width, height = maps[0].width, maps[0].height
    if any((m.width, m.height) != (width, height) for m in maps):
        raise DimensionMismatchError("time maps differ in size")
    stack = np.stack([m.values for m in maps])
    counts = (~np.isnan(stack)).sum(axis=0)
    sums = np.nansum(stack, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return TimeMap(width=width, height=height, values=np.clip(values, 0.0, 1.0))


def find_projection_corners(time_map: TimeMap) -> np.ndarray:
    """Corners (TL, TR, BR, BL) of the defined region, as (x, y) camera coordinates.

    The region is a convex quadrilateral, so each corner is the defined cell
    extreme in x + y or x - y.
    """
    defined = time_map.defined
    if defined.mean() < MIN_REGION_FRACTION:
        raise TimeMapError(
            f"defined region covers {defined.mean():.1%} of the map, need {MIN_REGION_FRACTION:.0%}"
        )
    ys, xs = np.nonzero(defined)
    s = xs + ys
    dif = xs - ys
    picks = [int(np.argmin(s)), int(np.argmax(dif)), int(np.argmax(s)), int(np.argmin(dif))]
    corners = np.column_stack([xs[picks], ys[picks]]).astype(np.float64)
    if len({tuple(c) for c in corners.tolist()}) < 4:
        raise TimeMapError("defined region is degenerate, corners coincide")
    logger.debug(f"Projection corners: {corners.tolist()}")
    return corners


def _check_not_collinear(points: np.ndarray, name: str) -> None:
    scale = max(float(np.ptp(points, axis=0).max()), 1e-12)
    for i in range(4):
        a, b, c = (points[j] for j in range(4) if j != i)
        area = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        if area < 1e-9 * scale * scale:
            raise TimeMapError(f"three {name} points are collinear")


def _normalizer(points: np.ndarray) -> np.ndarray:
    centroid = points.mean(axis=0)
    spread = np.sqrt(((points - centroid) ** 2).sum(axis=1)).mean()
    scale = np.sqrt(2.0) / spread
    return np.array([[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]])


def homography_from_corners(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Exact 4-point homography mapping src to dst (normalized DLT)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != (4, 2) or dst.shape != (4, 2):
        raise DimensionMismatchError("homography_from_corners takes two (4, 2) point arrays")
    _check_not_collinear(src, "source")
    _check_not_collinear(dst, "destination")

    t_src, t_dst = _normalizer(src), _normalizer(dst)
    src_n = (np.column_stack([src, np.ones(4)]) @ t_src.T)[:, :2]
    dst_n = (np.column_stack([dst, np.ones(4)]) @ t_dst.T)[:, :2]
    rows = []
    for (x, y), (u, v) in zip(src_n, dst_n, strict=True):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    _, _, vt = np.linalg.svd(np.array(rows))
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_n @ t_src
    if abs(h[2, 2]) > 1e-12:
        h = h / h[2, 2]
    return h


def _snap(coords: np.ndarray) -> np.ndarray:
    nearest = np.round(coords)
    return np.where(np.abs(coords - nearest) < _SNAP, nearest, coords)


def sample_bilinear(values: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Bilinear samples that are NaN unless every contributing source cell is defined."""
    height, width = values.shape
    sx = _snap(sx)
    sy = _snap(sy)
    with np.errstate(invalid="ignore"):
        x0 = np.floor(sx)
        y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros(sx.shape)
    ok = np.isfinite(sx) & np.isfinite(sy)
    for dx, dy, weight in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        needed = ok & (weight > 0)
        xi = np.where(needed, x0 + dx, 0).astype(np.int64)
        yi = np.where(needed, y0 + dy, 0).astype(np.int64)
        inside = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
        sample = np.where(needed & inside, values[np.clip(yi, 0, height - 1), np.clip(xi, 0, width - 1)], np.nan)
        ok &= ~needed | ~np.isnan(sample)
        out += np.where(needed, np.nan_to_num(sample) * weight, 0.0)
    return np.where(ok, out, np.nan)


def warp_time_map(time_map: TimeMap, h: np.ndarray, out_width: int, out_height: int) -> TimeMap:
    """Inverse-warp a time map through homography h (source -> destination)."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3) or not np.all(np.isfinite(h)) or np.linalg.cond(h) > 1e12:
        raise TimeMapError("homography is singular")
    h_inv = np.linalg.inv(h)
    ys, xs = np.mgrid[0:out_height, 0:out_width]
    sx, sy = apply_homography(h_inv, xs, ys)
    values = sample_bilinear(time_map.values, sx, sy)
    return TimeMap(width=out_width, height=out_height, values=np.clip(values, 0.0, 1.0))


def interpolate_rows(time_map: TimeMap) -> TimeMap:
    """Fill undefined cells lying between two defined cells of the same row."""
    values = np.array(time_map.values, copy=True)
    columns = np.arange(time_map.width)
    for y in range(time_map.height):
        row = values[y]
        known = np.flatnonzero(~np.isnan(row))
        if len(known) < 2:
            continue
        span = columns[known[0] : known[-1] + 1]
        row[known[0] : known[-1] + 1] = np.interp(span, known, row[known])
    return TimeMap(width=time_map.width, height=time_map.height, values=values)


def calibrate_time_map(planar_maps: Sequence[TimeMap], width: int, height: int) -> TimeMap:
    """Projector time map from camera time maps of a white frame on a fronto-parallel plane.

    Maps are averaged in camera space, the projected quadrilateral is located
    and warped onto the width x height projector grid, and the gaps left by
    the resolution mismatch are filled along each row.
    """
    if not planar_maps:
        raise TimeMapError("calibration needs at least one planar time map")
    averaged = average_normalized_time_maps(planar_maps)
    corners = find_projection_corners(averaged)
    target = np.array([[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]])
    h = homography_from_corners(corners, target)
    warped = warp_time_map(averaged, h, width, height)
    calibrated = interpolate_rows(warped)
    logger.info(
        f"Calibrated projector time map from {len(planar_maps)} frames, "
        f"{calibrated.defined_fraction:.1%} of {width}x{height} cells defined"
    )
    if calibrated.defined_fraction < 0.5:
        logger.warning("Calibrated time map is mostly undefined; check the planar recording")
    return calibrated


def rectify_time_map(projector_map: TimeMap, calib: StereoCalibration) -> TimeMap:
    """Resample a raw projector time map onto the rectified projector grid."""
    if (projector_map.width, projector_map.height) != (calib.projector.width, calib.projector.height):
        raise DimensionMismatchError("time map does not match the projector resolution")
    _, h_proj = rectifying_homographies(calib)
    return warp_time_map(projector_map, h_proj, calib.projector.width, calib.projector.height)
