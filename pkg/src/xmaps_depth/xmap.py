"""Projector X-map construction and per-event disparity lookup."""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DimensionMismatchError
from .events import EventStream, dedup_coordinates, filter_positive
from .geometry import RectifyMap, depths_from_disparities, events_to_points, rectify_events
from .models import DedupMode, DiscardReason, FrameSlice, StereoCalibration
from .timemap import TimeMap

logger = logging.getLogger(__name__)

# Elements of the (rows, columns, width) difference cube evaluated at once.
_CHUNK_ELEMENTS = 1 << 24

# Reason codes returned by lookup_disparities; 0 means the event was kept.
LOOKUP_REASONS: tuple[DiscardReason | None, ...] = (
    None,
    DiscardReason.UNDEFINED_ENTRY,
    DiscardReason.NONPOSITIVE_DISPARITY,
    DiscardReason.OUT_OF_BOUNDS,
)
_UNDEFINED, _NONPOSITIVE, _OUT_OF_BOUNDS = 1, 2, 3


class XMap(BaseModel):
    """Lookup table (rectified row, time column) -> rectified projector x; NaN is undefined."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    height: int = Field(..., gt=0)
    time_columns: int = Field(..., gt=0)
    projector_width: int = Field(..., gt=1)
    entries: np.ndarray

    @model_validator(mode="after")
    def _check_entries(self) -> "XMap":
        if self.entries.shape != (self.height, self.time_columns):
            raise ValueError(f"entries have shape {self.entries.shape}, expected {(self.height, self.time_columns)}")
        defined = self.entries[~np.isnan(self.entries)]
        if defined.size and (defined.min() < 0 or defined.max() >= self.projector_width):
            raise ValueError("X-map entries must lie in [0, projector_width)")
        self.entries.flags.writeable = False
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, XMap):
            return NotImplemented
        return self.projector_width == other.projector_width and np.array_equal(
            self.entries, other.entries, equal_nan=True
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.entries)

    @property
    def column_centers(self) -> np.ndarray:
        """Normalized time sampled by each column."""
        return (np.arange(self.time_columns) + 0.5) / self.time_columns


def build_projector_xmap(m: TimeMap, w: int | None = None, time_columns: int | None = None) -> XMap:
    """Invert a rectified projector time map row by row.

    Each entry is the x whose time is nearest to the column centre, ties
    going to the smallest x. Candidates further than 2/w in normalized time
    are rejected, and entries without a candidate stay undefined.
    """
    w = w or m.width
    if w != m.width:
        raise DimensionMismatchError(f"time map is {m.width} wide, projector width is {w}")
    if w < 2:
        raise DimensionMismatchError("an X-map needs a projector at least two columns wide")
    columns = time_columns or w
    threshold = 2.0 / w
    centers = (np.arange(columns) + 0.5) / columns
    entries = np.full((m.height, columns), np.nan)

    rows_per_chunk = max(1, _CHUNK_ELEMENTS // (columns * m.width))
    for start in range(0, m.height, rows_per_chunk):
        values = m.values[start : start + rows_per_chunk]
        diff = np.abs(centers[None, :, None] - values[:, None, :])
        diff = np.where(np.isnan(diff), np.inf, diff)
        best = np.argmin(diff, axis=2)
        best_diff = np.take_along_axis(diff, best[..., None], axis=2)[..., 0]
        entries[start : start + len(values)] = np.where(best_diff <= threshold, best, np.nan)

    xmap = XMap(height=m.height, time_columns=columns, projector_width=w, entries=entries)
    logger.info(f"Built X-map {m.height}x{columns}, {xmap.defined.mean():.1%} entries defined")
    return xmap


def _normalized_time(t: np.ndarray | float, frame: FrameSlice) -> np.ndarray | float:
    if frame.span == 0:
        return np.zeros_like(t, dtype=np.float64) if isinstance(t, np.ndarray) else 0.0
    return (t - frame.start_t) / frame.span


def lookup_disparity(xmap: XMap, x_cr: float, y_cr: float, t: int, frame: FrameSlice) -> float | DiscardReason:
    """Disparity of one rectified event, or the reason it is discarded."""
    if math.isnan(x_cr) or math.isnan(y_cr):
        return DiscardReason.OUT_OF_BOUNDS
    row = math.floor(y_cr + 0.5)
    if not 0 <= row < xmap.height:
        return DiscardReason.OUT_OF_BOUNDS
    column = min(max(math.floor(float(_normalized_time(t, frame)) * xmap.time_columns), 0), xmap.time_columns - 1)
    x_pr = float(xmap.entries[row, column])
    if math.isnan(x_pr):
        return DiscardReason.UNDEFINED_ENTRY
    d = x_pr - x_cr
    if d <= 0:
        return DiscardReason.NONPOSITIVE_DISPARITY
    return d


def lookup_disparities(
    xmap: XMap, x_cr: np.ndarray, y_cr: np.ndarray, t: np.ndarray, frame: FrameSlice
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized lookup_disparity.

    Returns the disparities (NaN where discarded) and per-event codes
    indexing LOOKUP_REASONS.
    """
    n = len(t)
    codes = np.zeros(n, dtype=np.int8)
    disparity = np.full(n, np.nan)
    if n == 0:
        return disparity, codes

    with np.errstate(invalid="ignore"):
        rows = np.floor(np.asarray(y_cr, dtype=np.float64) + 0.5)
    in_view = ~np.isnan(x_cr) & ~np.isnan(rows) & (rows >= 0) & (rows < xmap.height)
    codes[~in_view] = _OUT_OF_BOUNDS

    t_norm = np.asarray(_normalized_time(np.asarray(t, dtype=np.float64), frame))
    columns = np.clip(np.floor(t_norm * xmap.time_columns), 0, xmap.time_columns - 1).astype(np.int64)
    rows_idx = np.where(in_view, rows, 0).astype(np.int64)
    x_pr = np.where(in_view, xmap.entries[rows_idx, columns], np.nan)

    undefined = in_view & np.isnan(x_pr)
    codes[undefined] = _UNDEFINED
    d = x_pr - np.asarray(x_cr, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        nonpositive = in_view & ~undefined & (d <= 0)
    codes[nonpositive] = _NONPOSITIVE
    kept = codes == 0
    disparity[kept] = d[kept]
    return disparity, codes


class DepthFrame(BaseModel):
    """Per-event depth of one projected frame."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x_r: np.ndarray
    y_r: np.ndarray
    disparity: np.ndarray
    depth: np.ndarray
    t: np.ndarray
    start_t: int
    end_t: int
    discard_counts: dict[DiscardReason, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_records(self) -> "DepthFrame":
        n = len(self.t)
        if any(len(a) != n for a in (self.x_r, self.y_r, self.disparity, self.depth)):
            raise ValueError("depth frame columns differ in length")
        if n and (np.any(~(self.disparity > 0)) or np.any(~np.isfinite(self.depth)) or np.any(self.depth <= 0)):
            raise ValueError("depth frames hold positive disparities and finite positive depths only")
        for array in (self.x_r, self.y_r, self.disparity, self.depth, self.t):
            array.flags.writeable = False
        return self

    @classmethod
    def empty(cls, frame: FrameSlice, discard_counts: dict[DiscardReason, int] | None = None) -> "DepthFrame":
        zeros = np.empty(0, dtype=np.float64)
        return cls(
            x_r=zeros,
            y_r=zeros.copy(),
            disparity=zeros.copy(),
            depth=zeros.copy(),
            t=np.empty(0, dtype=np.int64),
            start_t=frame.start_t,
            end_t=frame.end_t,
            discard_counts=discard_counts or {},
        )

    def __len__(self) -> int:
        return len(self.t)

    __hash__ = None  # type: ignore[assignment]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DepthFrame):
            return NotImplemented
        return (
            (self.start_t, self.end_t, self.discard_counts) == (other.start_t, other.end_t, other.discard_counts)
            and all(
                np.array_equal(a, b)
                for a, b in zip(
                    (self.x_r, self.y_r, self.disparity, self.depth, self.t),
                    (other.x_r, other.y_r, other.disparity, other.depth, other.t),
                    strict=True,
                )
            )
        )

    @property
    def total_discarded(self) -> int:
        return sum(self.discard_counts.values())

    def points(self, calib: StereoCalibration) -> np.ndarray:
        """(N, 3) points in the rectified camera frame (meters)."""
        if len(self) == 0:
            return np.empty((0, 3))
        return events_to_points(self.x_r, self.y_r, self.disparity, calib)


def _check_dimensions(frame_events: EventStream, xmap: XMap, rect: RectifyMap, calib: StereoCalibration) -> None:
    if (rect.width, rect.height) != (frame_events.sensor_width, frame_events.sensor_height):
        raise DimensionMismatchError(
            f"rectification map is {rect.width}x{rect.height}, sensor is "
            f"{frame_events.sensor_width}x{frame_events.sensor_height}"
        )
    if (rect.width, rect.height) != (calib.camera.width, calib.camera.height):
        raise DimensionMismatchError("rectification map does not match the calibrated camera")
    if xmap.projector_width != calib.projector.width or xmap.height != calib.projector.height:
        raise DimensionMismatchError(
            f"X-map is for a {xmap.projector_width}x{xmap.height} projector, calibration has "
            f"{calib.projector.width}x{calib.projector.height}"
        )


def depth_frame(
    frame_events: EventStream,
    frame: FrameSlice,
    xmap: XMap,
    rect: RectifyMap,
    calib: StereoCalibration,
    dedup_mode: DedupMode = DedupMode.KEEP_FIRST,
) -> DepthFrame:
    """Depth of every event of one frame: rectify, look up, triangulate.

    frame_events are the events of the frame (e.g. stream.slice(frame));
    the frame bounds normalize their timestamps.
    """
    _check_dimensions(frame_events, xmap, rect, calib)
    counts = dict.fromkeys(DiscardReason, 0)

    positive = filter_positive(frame_events)
    counts[DiscardReason.NEGATIVE_POLARITY] = len(frame_events) - len(positive)
    kept = dedup_coordinates(positive, dedup_mode)
    counts[DiscardReason.DUPLICATE_COORDINATE] = len(positive) - len(kept)
    if len(kept) == 0:
        return DepthFrame.empty(frame, counts)

    x_r, y_r = rectify_events(rect, kept.x, kept.y)
    disparity, codes = lookup_disparities(xmap, x_r, y_r, kept.t, frame)
    for code, reason in enumerate(LOOKUP_REASONS):
        if reason is not None:
            counts[reason] = int(np.count_nonzero(codes == code))

    ok = codes == 0
    result = DepthFrame(
        x_r=x_r[ok],
        y_r=y_r[ok],
        disparity=disparity[ok],
        depth=depths_from_disparities(disparity[ok], calib),
        t=kept.t[ok].astype(np.int64),
        start_t=frame.start_t,
        end_t=frame.end_t,
        discard_counts=counts,
    )
    logger.debug(f"Frame at {frame.start_t}us: {len(result)}/{len(frame_events)} events with depth")
    return result


def depth_frames(
    stream: EventStream,
    frames: Sequence[FrameSlice],
    xmap: XMap,
    rect: RectifyMap,
    calib: StereoCalibration,
    dedup_mode: DedupMode = DedupMode.KEEP_FIRST,
    workers: int = 1,
) -> list[DepthFrame]:
    """depth_frame over many frames of one stream, in frame order."""

    def run(frame: FrameSlice) -> DepthFrame:
        return depth_frame(stream.slice(frame), frame, xmap, rect, calib, dedup_mode)

    if workers <= 1 or len(frames) <= 1:
        return [run(frame) for frame in frames]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(run, frames))


def render_depth_image(frame: DepthFrame, width: int, height: int) -> np.ndarray:
    """Depth image on the rectified camera grid, keeping the nearest event per pixel."""
    image = np.full(height * width, np.inf)
    if len(frame):
        xi = np.floor(frame.x_r + 0.5).astype(np.int64)
        yi = np.floor(frame.y_r + 0.5).astype(np.int64)
        inside = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
        np.minimum.at(image, yi[inside] * width + xi[inside], frame.depth[inside])
    image[np.isinf(image)] = np.nan
    return image.reshape(height, width)
