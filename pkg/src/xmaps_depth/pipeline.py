"""Pipeline engine: loads inputs, caches X-map builds and runs depth over whole streams."""

import hashlib
import logging
import time
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from diskcache import Cache

from .config import Settings, get_settings
from .dashboard import create_progress_bar
from .errors import XMapsError
from .events import EventStream, dedup_coordinates, dedup_drop_fraction, filter_positive
from .formats import read_calibration, read_events, read_rectify_map, read_time_map, read_xmap
from .geometry import RectifyMap, compute_rectification, rectify_events
from .models import DepthSummary, DiscardReason, FrameSlice, StereoCalibration
from .simulator import GroundTruth
from .timemap import TimeMap, build_camera_time_map, calibrate_time_map, rectify_time_map
from .trigger import split_frames
from .xmap import DepthFrame, XMap, build_projector_xmap, depth_frame, depth_frames

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int, str], None]


class DepthPipeline:
    """Runs the event-to-depth chain with settings, caching and progress reporting."""

    def __init__(self, settings: Settings | None = None):
        self.settings = settings or get_settings()
        if self.settings.cache_enabled:
            self.settings.cache_dir.mkdir(parents=True, exist_ok=True)
            self._cache: Cache | None = Cache(str(self.settings.cache_dir / "xmaps"))
        else:
            self._cache = None

    def _get_cached(self, key: str) -> dict | None:
        """Get value from cache if available."""
        if self._cache is None:
            return None
        return self._cache.get(key)

    def _set_cached(self, key: str, value: dict) -> None:
        """Set value in cache."""
        if self._cache is not None:
            self._cache.set(key, value, expire=self.settings.cache_ttl_seconds)

    # --- inputs ---------------------------------------------------------------

    def _require(self, path: Path | None, what: str) -> Path:
        if path is None:
            raise XMapsError(f"no {what} given (set it on the command line or in the config)")
        return path

    def load_calibration(self, path: Path | None = None) -> StereoCalibration:
        return read_calibration(self._require(path or self.settings.calibration_path, "calibration file"))

    def load_events(self, path: Path | None = None, calib: StereoCalibration | None = None) -> EventStream:
        source = self._require(path or self.settings.events_path, "event file")
        if calib is not None:
            return read_events(source, calib.camera.width, calib.camera.height)
        return read_events(source)

    def load_time_map(self, path: Path | None = None) -> TimeMap:
        return read_time_map(self._require(path or self.settings.time_map_path, "time map"))

    def load_xmap(self, calib: StereoCalibration, path: Path | None = None) -> XMap:
        return read_xmap(self._require(path or self.settings.xmap_path, "X-map"), calib.projector.width)

    def rectification(self, calib: StereoCalibration, path: Path | None = None) -> RectifyMap:
        """Camera rectification map, precomputed on disk or derived from the calibration."""
        source = path or self.settings.rect_map_path
        if source is not None:
            logger.info(f"Loading camera rectification map from {source}")
            return read_rectify_map(source)
        cam, _ = compute_rectification(calib)
        return cam

    def frames(self, stream: EventStream) -> list[FrameSlice]:
        return split_frames(stream, self.settings.to_trigger_config())

    # --- stages ---------------------------------------------------------------

    def calibrate(self, stream: EventStream, frames: list[FrameSlice], calib: StereoCalibration) -> TimeMap:
        """Calibrated raw projector time map from a recording of a plane."""
        maps = []
        for frame in frames:
            events = dedup_coordinates(filter_positive(stream.slice(frame)), self.settings.dedup_mode)
            if frame.span == 0 or len(events) == 0:
                logger.warning(f"Skipping empty frame at {frame.start_t}us")
                continue
            maps.append(build_camera_time_map(events, frame))
        return calibrate_time_map(maps, calib.projector.width, calib.projector.height)

    def build_xmap(self, projector_map: TimeMap, calib: StereoCalibration) -> XMap:
        """X-map of a raw projector time map, cached by content."""
        rectified = rectify_time_map(projector_map, calib)
        columns = self.settings.time_columns or calib.projector.width
        digest = hashlib.sha256(rectified.values.tobytes()).hexdigest()[:24]
        cache_key = f"xmap_{digest}_{rectified.width}x{rectified.height}_{columns}"
        cached = self._get_cached(cache_key)
        if cached is not None:
            logger.debug(f"Cache hit for {cache_key}")
            return XMap(**cached)

        xmap = build_projector_xmap(rectified, calib.projector.width, columns)
        self._set_cached(
            cache_key,
            {
                "height": xmap.height,
                "time_columns": xmap.time_columns,
                "projector_width": xmap.projector_width,
                "entries": np.array(xmap.entries),
            },
        )
        return xmap

    def run(
        self,
        stream: EventStream,
        frames: list[FrameSlice],
        xmap: XMap,
        rect: RectifyMap,
        calib: StereoCalibration,
        progress_callback: ProgressCallback | None = None,
    ) -> list[DepthFrame]:
        """Depth of every frame; the callback sees (done, total, description)."""
        if progress_callback is None or self.settings.workers > 1:
            return depth_frames(stream, frames, xmap, rect, calib, self.settings.dedup_mode, self.settings.workers)
        results = []
        for i, frame in enumerate(frames, start=1):
            results.append(depth_frame(stream.slice(frame), frame, xmap, rect, calib, self.settings.dedup_mode))
            progress_callback(i, len(frames), f"Frame {i}/{len(frames)}")
        return results

    def run_with_progress(
        self,
        stream: EventStream,
        frames: list[FrameSlice],
        xmap: XMap,
        rect: RectifyMap,
        calib: StereoCalibration,
    ) -> list[DepthFrame]:
        """Run with a rich progress bar."""
        with create_progress_bar() as progress:
            task = progress.add_task("Computing depth...", total=100)

            def progress_callback(current: int, total: int, description: str) -> None:
                pct = (current / total) * 100 if total > 0 else 0
                progress.update(task, completed=pct, description=description)

            result = self.run(stream, frames, xmap, rect, calib, progress_callback)
            progress.update(task, completed=100, description="Depth complete!")
        return result


def summarize(frames: list[DepthFrame], frame_events: Sequence[EventStream], elapsed_ms: float = 0.0) -> DepthSummary:
    """Totals over depth frames and the event slices they were computed from."""
    counts = dict.fromkeys(DiscardReason, 0)
    for f in frames:
        for reason, n in f.discard_counts.items():
            counts[reason] += n
    depths = np.concatenate([f.depth for f in frames]) if frames else np.empty(0)
    positives = [filter_positive(e) for e in frame_events]
    n_positive = sum(len(p) for p in positives)
    dropped = sum(dedup_drop_fraction(p) * len(p) for p in positives)
    return DepthSummary(
        n_frames=len(frames),
        n_events=sum(len(e) for e in frame_events),
        n_retained=int(depths.size),
        discard_counts=counts,
        dedup_drop_fraction=dropped / n_positive if n_positive else 0.0,
        mean_depth_m=float(depths.mean()) if depths.size else None,
        median_depth_m=float(np.median(depths)) if depths.size else None,
        elapsed_ms=elapsed_ms,
    )


def reference_depth_image(
    stream: EventStream, truth: GroundTruth, frame: FrameSlice, rect: RectifyMap, width: int, height: int
) -> np.ndarray:
    """True depth on the rectified camera grid for the scan events of one frame."""
    index = np.arange(frame.start_index, frame.stop_index)
    index = index[truth.scan_events[index]]
    image = np.full(height * width, np.inf)
    if len(index):
        x_r, y_r = rectify_events(rect, stream.x[index], stream.y[index])
        with np.errstate(invalid="ignore"):
            xi = np.floor(x_r + 0.5)
            yi = np.floor(y_r + 0.5)
            inside = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
        linear = (yi[inside] * width + xi[inside]).astype(np.int64)
        np.minimum.at(image, linear, truth.depth[index][inside])
    image[np.isinf(image)] = np.nan
    return image.reshape(height, width)


class Timer:
    """Context manager measuring wall time in milliseconds."""

    def __enter__(self) -> "Timer":
        self._start = time.perf_counter()
        self.elapsed_ms = 0.0
        return self

    def __exit__(self, *exc: object) -> None:
        self.elapsed_ms = (time.perf_counter() - self._start) * 1000.0
