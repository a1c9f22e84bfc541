"""Event streams and the filters applied before depth estimation."""

import logging
from collections.abc import Iterable, Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .models import DedupMode, Event, FrameSlice, Polarity

logger = logging.getLogger(__name__)

# Same field layout as the (t, x, y, p) records event camera SDKs expose.
EVENT_DTYPE = np.dtype([("t", "<i8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])


def _empty_events() -> np.ndarray:
    return np.empty(0, dtype=EVENT_DTYPE)


class EventStream(BaseModel):
    """Time ordered events of one sensor, immutable after construction."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sensor_width: int = Field(..., gt=0, description="Sensor width (px)")
    sensor_height: int = Field(..., gt=0, description="Sensor height (px)")
    events: np.ndarray = Field(default_factory=_empty_events, description="Structured array of EVENT_DTYPE")

    @model_validator(mode="after")
    def _check_events(self) -> "EventStream":
        events = self.events
        if events.dtype != EVENT_DTYPE or events.ndim != 1:
            raise ValueError(f"events must be a 1-D array of {EVENT_DTYPE}")
        if len(events):
            if int(events["x"].max()) >= self.sensor_width or int(events["y"].max()) >= self.sensor_height:
                raise ValueError("event coordinates exceed the sensor resolution")
            if np.any(np.diff(events["t"]) < 0):
                raise ValueError("events must be sorted by non-decreasing timestamp")
        events.flags.writeable = False
        return self

    @classmethod
    def from_arrays(
        cls,
        t: np.ndarray,
        x: np.ndarray,
        y: np.ndarray,
        p: np.ndarray | None,
        sensor_width: int,
        sensor_height: int,
    ) -> "EventStream":
        """Pack column arrays into a stream (missing polarity means positive)."""
        events = np.empty(len(t), dtype=EVENT_DTYPE)
        events["t"] = t
        events["x"] = x
        events["y"] = y
        events["p"] = Polarity.POSITIVE.value if p is None else p
        return cls(sensor_width=sensor_width, sensor_height=sensor_height, events=events)

    @classmethod
    def from_events(cls, events: Iterable[Event], sensor_width: int, sensor_height: int) -> "EventStream":
        records = [(e.t, e.x, e.y, e.polarity.value) for e in events]
        return cls(
            sensor_width=sensor_width,
            sensor_height=sensor_height,
            events=np.array(records, dtype=EVENT_DTYPE),
        )

    @classmethod
    def concat(cls, streams: Sequence["EventStream"]) -> "EventStream":
        if not streams:
            raise ValueError("nothing to concatenate")
        width, height = streams[0].sensor_width, streams[0].sensor_height
        if any(s.sensor_width != width or s.sensor_height != height for s in streams):
            raise ValueError("streams come from different sensors")
        return cls(sensor_width=width, sensor_height=height, events=np.concatenate([s.events for s in streams]))

    def __len__(self) -> int:
        return len(self.events)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.sensor_width == other.sensor_width
            and self.sensor_height == other.sensor_height
            and np.array_equal(self.events, other.events)
        )

    __hash__ = None  # type: ignore[assignment]

    def __iter__(self) -> Iterator[Event]:  # type: ignore[override]
        for t, x, y, p in self.events.tolist():
            yield Event(t=t, x=x, y=y, polarity=Polarity(p))

    def __getitem__(self, index: int) -> Event:
        t, x, y, p = self.events[index].tolist()
        return Event(t=t, x=x, y=y, polarity=Polarity(p))

    @property
    def t(self) -> np.ndarray:
        return self.events["t"]

    @property
    def x(self) -> np.ndarray:
        return self.events["x"]

    @property
    def y(self) -> np.ndarray:
        return self.events["y"]

    @property
    def p(self) -> np.ndarray:
        return self.events["p"]

    def take(self, selector: np.ndarray) -> "EventStream":
        """New stream with the selected events (mask or ascending indices)."""
        return EventStream(sensor_width=self.sensor_width, sensor_height=self.sensor_height, events=self.events[selector])

    def slice(self, frame: FrameSlice) -> "EventStream":
        """Events belonging to one frame."""
        return self.take(np.s_[frame.start_index : frame.stop_index])  # type: ignore[arg-type]


def filter_positive(stream: EventStream) -> EventStream:
    """Keep only positive polarity events; order is preserved."""
    mask = stream.p == Polarity.POSITIVE.value
    if mask.all():
        return stream
    return stream.take(mask)


def first_event_mask(x: np.ndarray, y: np.ndarray, width: int, height: int) -> np.ndarray:
    """True for the first occurrence of every (x, y) in array order."""
    n = len(x)
    if n == 0:
        return np.zeros(0, dtype=bool)
    linear = y.astype(np.int64) * width + x.astype(np.int64)
    order = np.arange(n)
    first = np.full(width * height, n, dtype=np.int64)
    np.minimum.at(first, linear, order)
    return first[linear] == order


def dedup_coordinates(frame_events: EventStream, mode: DedupMode = DedupMode.KEEP_FIRST) -> EventStream:
    """Drop repeated events at a pixel within one frame, keeping the earliest."""
    if mode is DedupMode.KEEP_ALL or len(frame_events) == 0:
        return frame_events
    mask = first_event_mask(frame_events.x, frame_events.y, frame_events.sensor_width, frame_events.sensor_height)
    dropped = int(len(mask) - mask.sum())
    if dropped:
        logger.debug(f"Coordinate filter dropped {dropped}/{len(mask)} events")
    return frame_events.take(mask)


def dedup_drop_fraction(frame_events: EventStream) -> float:
    """Share of events the keep_first coordinate filter would remove."""
    if len(frame_events) == 0:
        return 0.0
    kept = len(dedup_coordinates(frame_events, DedupMode.KEEP_FIRST))
    return 1.0 - kept / len(frame_events)
