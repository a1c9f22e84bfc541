"""Per-frame latency measurement of the depth lookup."""

import logging
import time

import numpy as np

from .events import EventStream
from .geometry import RectifyMap, compute_rectification
from .models import DedupMode, FrameSlice, LatencyStats, ScanProfile, Scene, StereoCalibration, TriggerConfig
from .simulator import ideal_xmap_for, simulate
from .trigger import split_frames
from .xmap import XMap, depth_frame

logger = logging.getLogger(__name__)


def latency_stats(samples_ms: list[float], n_events: int) -> LatencyStats:
    """Summary statistics of wall-time samples in milliseconds."""
    samples = np.asarray(samples_ms, dtype=np.float64)
    if samples.size == 0:
        samples = np.zeros(1)
    return LatencyStats(
        repetitions=len(samples_ms),
        n_events=n_events,
        mean_ms=float(samples.mean()),
        std_ms=float(samples.std(ddof=1)) if samples.size > 1 else 0.0,
        median_ms=float(np.median(samples)),
        p90_ms=float(np.percentile(samples, 90)),
        min_ms=float(samples.min()),
        max_ms=float(samples.max()),
    )


def bench(
    frame_events: EventStream,
    frame: FrameSlice,
    xmap: XMap,
    rect: RectifyMap,
    calib: StereoCalibration,
    repetitions: int = 20,
    dedup_mode: DedupMode = DedupMode.KEEP_FIRST,
) -> LatencyStats:
    """Time depth_frame on one in-memory frame; loading and X-map building are excluded."""
    depth_frame(frame_events, frame, xmap, rect, calib, dedup_mode)  # warm-up
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        depth_frame(frame_events, frame, xmap, rect, calib, dedup_mode)
        samples.append((time.perf_counter() - start) * 1000.0)
    stats = latency_stats(samples, len(frame_events))
    logger.info(f"depth_frame: {stats.mean_ms:.3f} +/- {stats.std_ms:.3f} ms over {repetitions} runs")
    return stats


def bench_simulated(
    scene: Scene,
    calib: StereoCalibration,
    profile: ScanProfile,
    repetitions: int = 20,
    seed: int = 0,
    dedup_mode: DedupMode = DedupMode.KEEP_FIRST,
    xmap: XMap | None = None,
    trigger: TriggerConfig | None = None,
) -> LatencyStats:
    """Simulate one frame and time its depth computation, by default with the ideal X-map."""
    stream, _ = simulate(scene, calib, profile, frames=1, seed=seed)
    frames = split_frames(stream, trigger)
    if not frames:
        logger.warning("Simulated stream holds no complete frame; timing an empty frame")
        frame = FrameSlice(start_t=0, end_t=0, start_index=0, stop_index=0)
    else:
        frame = frames[0]
    rect, _ = compute_rectification(calib)
    if xmap is None:
        xmap = ideal_xmap_for(profile, calib)
    return bench(stream.slice(frame), frame, xmap, rect, calib, repetitions, dedup_mode)
