"""Frame segmentation of raw event streams from timestamp gaps."""

import logging

import numpy as np

from .events import EventStream
from .models import FrameSlice, TriggerConfig

logger = logging.getLogger(__name__)


def _runs(t: np.ndarray, max_gap: int) -> tuple[np.ndarray, np.ndarray]:
    """Start/stop indices of maximal runs whose consecutive gaps are <= max_gap."""
    breaks = np.flatnonzero(np.diff(t) > max_gap) + 1
    starts = np.concatenate(([0], breaks))
    stops = np.concatenate((breaks, [len(t)]))
    return starts, stops


def _slices(t: np.ndarray, starts: np.ndarray, stops: np.ndarray, min_span: int, offset: int) -> list[FrameSlice]:
    frames = []
    for start, stop in zip(starts.tolist(), stops.tolist(), strict=True):
        span = int(t[stop - 1] - t[start])
        if span < min_span:
            continue
        frames.append(
            FrameSlice(
                start_t=int(t[start]),
                end_t=int(t[stop - 1]),
                start_index=offset + start,
                stop_index=offset + stop,
            )
        )
    return frames


def split_frames(stream: EventStream, cfg: TriggerConfig | None = None) -> list[FrameSlice]:
    """Find projected frames: maximal low-gap runs spanning at least min_frame_span.

    Shorter runs are discarded, longer ones are returned whole.
    """
    cfg = cfg or TriggerConfig()
    t = stream.t
    if len(t) == 0:
        return []
    starts, stops = _runs(t, cfg.max_intra_frame_gap)
    frames = _slices(t, starts, stops, cfg.min_frame_span, offset=0)
    logger.info(f"Found {len(frames)} frames in {len(starts)} runs ({len(t)} events)")
    return frames


class FrameSplitter:
    """Incremental split_frames over consecutive batches of one stream.

    Slice indices refer to the concatenation of all fed batches. The run
    still open at the end of a batch is carried into the next one.
    """

    def __init__(self, cfg: TriggerConfig | None = None):
        self.cfg = cfg or TriggerConfig()
        self._pending_t = np.empty(0, dtype=np.int64)
        self._pending_start = 0
        self._consumed = 0

    def feed(self, batch: EventStream) -> list[FrameSlice]:
        """Consume a batch and return the frames completed by it."""
        t_batch = batch.t
        if len(t_batch) == 0:
            return []
        if len(t_batch) > 1 and int(t_batch[-1] - t_batch[0]) < self.cfg.batch_span:
            logger.warning(
                f"Batch spans {int(t_batch[-1] - t_batch[0])}us, shorter than {self.cfg.batch_span}us; "
                "a frame gap may be missing"
            )
        if len(self._pending_t) and int(t_batch[0]) < int(self._pending_t[-1]):
            raise ValueError("batches must continue in time order")

        t = np.concatenate((self._pending_t, t_batch.astype(np.int64)))
        self._consumed += len(t_batch)
        starts, stops = _runs(t, self.cfg.max_intra_frame_gap)

        # the last run may continue in the next batch
        frames = _slices(t, starts[:-1], stops[:-1], self.cfg.min_frame_span, offset=self._pending_start)
        last_start = int(starts[-1])
        self._pending_t = t[last_start:].copy()
        self._pending_start += last_start
        return frames

    def flush(self) -> list[FrameSlice]:
        """Close the open run at end of stream."""
        t = self._pending_t
        if len(t) == 0:
            return []
        frames = _slices(t, np.array([0]), np.array([len(t)]), self.cfg.min_frame_span, offset=self._pending_start)
        self._pending_t = np.empty(0, dtype=np.int64)
        self._pending_start = self._consumed
        return frames
