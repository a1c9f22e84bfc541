"""Readers and writers for events, maps, calibration, depth records and point clouds.

Binary layouts (little-endian):

    events  "XEV1" | u16 width | u16 height | u64 count | count x 16-byte records
            record: u64 t_us | u16 x | u16 y | u8 polarity | u8 reserved | u16 padding
    maps    "XMP1" | u8 kind | u32 width | u32 height | float32 values, row-major
            kind 0 time map, 1 X-map (width = time columns), 2 rectification map
            (two planes, map_x then map_y). NaN marks undefined cells.
"""

import io
import logging
import re
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from plyfile import PlyData, PlyElement

from .errors import (
    BadMagicError,
    CalibrationFileError,
    FormatError,
    MapKindError,
    TruncatedFileError,
    UnsortedEventsError,
)
from .events import EventStream
from .geometry import RectifyMap
from .models import FrameSlice, MapKind, PinholeIntrinsics, StereoCalibration
from .simulator import GroundTruth
from .timemap import TimeMap
from .xmap import DepthFrame, XMap

logger = logging.getLogger(__name__)

EVENT_MAGIC = b"XEV1"
MAP_MAGIC = b"XMP1"

_EVENT_HEADER = np.dtype([("magic", "S4"), ("width", "<u2"), ("height", "<u2"), ("count", "<u8")])
_EVENT_RECORD = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("reserved", "u1"), ("padding", "<u2")]
)
_MAP_HEADER = np.dtype([("magic", "S4"), ("kind", "u1"), ("width", "<u4"), ("height", "<u4")])

EVENT_CSV_COLUMNS = ["t_us", "x", "y", "p"]
DEPTH_CSV_COLUMNS = ["frame", "t_us", "x_r", "y_r", "disparity_px", "depth_m"]
FRAME_CSV_COLUMNS = ["start_t", "end_t", "start_index", "stop_index"]
TRUTH_CSV_COLUMNS = [
    "t_us",
    "x",
    "y",
    "p",
    "frame",
    "proj_u",
    "proj_v",
    "depth_m",
    "disparity_px",
    "emission_t_us",
    "origin",
    "frame_start_us",
    "scan_span_us",
]

Map = TimeMap | XMap | RectifyMap


def _read_text(path: Path) -> str:
    """File contents; every writer ends its text files with a newline."""
    text = path.read_text()
    if not text.endswith("\n"):
        raise TruncatedFileError(f"{path}: text file does not end with a newline")
    return text


def _read_table(path: Path, **kwargs: Any) -> pd.DataFrame:
    text = _read_text(path)
    try:
        return pd.read_csv(io.StringIO(text), **kwargs)
    except (ValueError, pd.errors.ParserError) as e:
        raise FormatError(f"{path}: {e}") from e


# --- events ---------------------------------------------------------------


def write_events(path: Path, stream: EventStream) -> None:
    """Write a stream as XEV1 binary, or as CSV when the suffix is .csv."""
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        frame = pd.DataFrame({"t_us": stream.t, "x": stream.x, "y": stream.y, "p": stream.p})
        frame.to_csv(path, index=False)
        return

    header = np.zeros(1, dtype=_EVENT_HEADER)
    header["magic"] = EVENT_MAGIC
    header["width"] = stream.sensor_width
    header["height"] = stream.sensor_height
    header["count"] = len(stream)
    records = np.zeros(len(stream), dtype=_EVENT_RECORD)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(records.tobytes())
    logger.debug(f"Wrote {len(stream)} events to {path}")


def _check_sorted(t: np.ndarray, path: Path) -> None:
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise UnsortedEventsError(f"{path}: event timestamps are not sorted")


def read_events(path: Path, sensor_width: int | None = None, sensor_height: int | None = None) -> EventStream:
    """Read an XEV1 file or an event CSV.

    CSV files carry no resolution; pass it, or it is taken from the largest
    coordinates seen.
    """
    if path.suffix.lower() == ".csv":
        return _read_events_csv(path, sensor_width, sensor_height)

    data = path.read_bytes()
    if len(data) < _EVENT_HEADER.itemsize:
        if not EVENT_MAGIC.startswith(data[:4]):
            raise BadMagicError(f"{path}: not an XEV1 event file")
        raise TruncatedFileError(f"{path}: header is truncated")
    header = np.frombuffer(data, dtype=_EVENT_HEADER, count=1)[0]
    if header["magic"] != EVENT_MAGIC:
        raise BadMagicError(f"{path}: not an XEV1 event file")
    count = int(header["count"])
    expected = _EVENT_HEADER.itemsize + count * _EVENT_RECORD.itemsize
    if len(data) != expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes for {count} events, found {len(data)}")

    records = np.frombuffer(data, dtype=_EVENT_RECORD, count=count, offset=_EVENT_HEADER.itemsize)
    _check_sorted(records["t"], path)
    try:
        return EventStream.from_arrays(
            records["t"].astype(np.int64),
            records["x"],
            records["y"],
            records["p"],
            int(header["width"]),
            int(header["height"]),
        )
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def _read_events_csv(path: Path, sensor_width: int | None, sensor_height: int | None) -> EventStream:
    frame = _read_table(path, dtype={"t_us": np.int64, "x": np.int64, "y": np.int64, "p": np.int64})
    if list(frame.columns) != EVENT_CSV_COLUMNS:
        raise BadMagicError(f"{path}: expected header {','.join(EVENT_CSV_COLUMNS)}")
    return _events_from_table(frame, path, sensor_width, sensor_height)


def _events_from_table(
    frame: pd.DataFrame, path: Path, sensor_width: int | None, sensor_height: int | None
) -> EventStream:
    t = frame["t_us"].to_numpy(dtype=np.int64)
    _check_sorted(t, path)
    width = sensor_width or (int(frame["x"].max()) + 1 if len(frame) else 1)
    height = sensor_height or (int(frame["y"].max()) + 1 if len(frame) else 1)
    try:
        return EventStream.from_arrays(
            t,
            frame["x"].to_numpy(dtype=np.int64),
            frame["y"].to_numpy(dtype=np.int64),
            frame["p"].to_numpy(dtype=np.int64),
            width,
            height,
        )
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


# --- maps -------------------------------------------------------------------


def _map_kind(value: Map) -> MapKind:
    if isinstance(value, TimeMap):
        return MapKind.TIME_MAP
    if isinstance(value, XMap):
        return MapKind.XMAP
    return MapKind.RECTIFY_MAP


def write_map(path: Path, value: Map) -> None:
    """Write a time map, X-map or rectification map as XMP1 (float32 values)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    kind = _map_kind(value)
    if isinstance(value, TimeMap):
        width, height, planes = value.width, value.height, [value.values]
    elif isinstance(value, XMap):
        width, height, planes = value.time_columns, value.height, [value.entries]
    else:
        width, height, planes = value.width, value.height, [value.map_x, value.map_y]

    header = np.zeros(1, dtype=_MAP_HEADER)
    header["magic"] = MAP_MAGIC
    header["kind"] = kind.value
    header["width"] = width
    header["height"] = height
    with open(path, "wb") as f:
        f.write(header.tobytes())
        for plane in planes:
            f.write(np.ascontiguousarray(plane, dtype="<f4").tobytes())
    logger.debug(f"Wrote {kind.name.lower()} {width}x{height} to {path}")


def read_map(path: Path, kind: MapKind | None = None, projector_width: int | None = None) -> Map:
    """Read an XMP1 file, checking its kind when one is requested.

    X-map files do not store the projector width; it defaults to the number
    of time columns.
    """
    data = path.read_bytes()
    if len(data) < _MAP_HEADER.itemsize:
        if not MAP_MAGIC.startswith(data[:4]):
            raise BadMagicError(f"{path}: not an XMP1 map file")
        raise TruncatedFileError(f"{path}: header is truncated")
    header = np.frombuffer(data, dtype=_MAP_HEADER, count=1)[0]
    if header["magic"] != MAP_MAGIC:
        raise BadMagicError(f"{path}: not an XMP1 map file")
    try:
        found = MapKind(int(header["kind"]))
    except ValueError:
        raise MapKindError(f"{path}: unknown map kind {int(header['kind'])}")
    if kind is not None and found is not kind:
        raise MapKindError(f"{path}: holds a {found.name.lower()}, expected a {kind.name.lower()}")

    width, height = int(header["width"]), int(header["height"])
    planes = 2 if found is MapKind.RECTIFY_MAP else 1
    expected = _MAP_HEADER.itemsize + planes * width * height * 4
    if len(data) != expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes for a {width}x{height} map, found {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=_MAP_HEADER.itemsize).astype(np.float64)
    values = values.reshape(planes, height, width)

    try:
        if found is MapKind.TIME_MAP:
            return TimeMap(width=width, height=height, values=values[0])
        if found is MapKind.XMAP:
            return XMap(
                height=height, time_columns=width, projector_width=projector_width or width, entries=values[0]
            )
        return RectifyMap(width=width, height=height, map_x=values[0], map_y=values[1])
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def read_time_map(path: Path) -> TimeMap:
    result = read_map(path, MapKind.TIME_MAP)
    assert isinstance(result, TimeMap)
    return result


def read_xmap(path: Path, projector_width: int | None = None) -> XMap:
    result = read_map(path, MapKind.XMAP, projector_width)
    assert isinstance(result, XMap)
    return result


def read_rectify_map(path: Path) -> RectifyMap:
    result = read_map(path, MapKind.RECTIFY_MAP)
    assert isinstance(result, RectifyMap)
    return result


# --- calibration ------------------------------------------------------------

_INTRINSIC_KEYS = ("fx", "fy", "cx", "cy", "width", "height")
_LINE = re.compile(r"^\s*([A-Za-z0-9_]+)\s*=\s*(\S+)\s*$")


def write_calibration(path: Path, calib: StereoCalibration) -> None:
    """Write a calibration as `key = value` lines."""
    lines = ["# camera / projector calibration, X_proj = R X_cam + T (meters)"]
    for prefix, intr in (("cam", calib.camera), ("proj", calib.projector)):
        for key in _INTRINSIC_KEYS:
            lines.append(f"{prefix}_{key} = {getattr(intr, key)!r}")
    for i in range(3):
        for j in range(3):
            lines.append(f"r{i}{j} = {calib.rotation[i][j]!r}")
    for i in range(3):
        lines.append(f"t{i} = {calib.translation[i]!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_calibration(path: Path) -> StereoCalibration:
    """Parse a calibration file; rotation keys may be omitted for an identity rotation."""
    values: dict[str, float] = {}
    for number, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _LINE.match(line)
        if not match:
            raise CalibrationFileError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
        try:
            values[match.group(1)] = float(match.group(2))
        except ValueError:
            raise CalibrationFileError(f"{path}:{number}: {match.group(2)!r} is not a number")

    def intrinsics(prefix: str) -> PinholeIntrinsics:
        missing = [f"{prefix}_{k}" for k in _INTRINSIC_KEYS if f"{prefix}_{k}" not in values]
        if missing:
            raise CalibrationFileError(f"{path}: missing keys {', '.join(missing)}")
        fields = {k: values[f"{prefix}_{k}"] for k in _INTRINSIC_KEYS}
        return PinholeIntrinsics(
            fx=fields["fx"],
            fy=fields["fy"],
            cx=fields["cx"],
            cy=fields["cy"],
            width=int(fields["width"]),
            height=int(fields["height"]),
        )

    translation_keys = [f"t{i}" for i in range(3)]
    if any(k not in values for k in translation_keys):
        raise CalibrationFileError(f"{path}: missing translation keys t0..t2")
    identity = np.eye(3)
    rotation = tuple(tuple(values.get(f"r{i}{j}", identity[i, j]) for j in range(3)) for i in range(3))
    try:
        return StereoCalibration(
            camera=intrinsics("cam"),
            projector=intrinsics("proj"),
            rotation=rotation,  # type: ignore[arg-type]
            translation=tuple(values[k] for k in translation_keys),  # type: ignore[arg-type]
        )
    except ValueError as e:
        raise CalibrationFileError(f"{path}: {e}") from e


# --- frames, depth records, ground truth -------------------------------------


def write_frames(path: Path, frames: list[FrameSlice]) -> None:
    rows = [[f.start_t, f.end_t, f.start_index, f.stop_index] for f in frames]
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=FRAME_CSV_COLUMNS).to_csv(path, index=False)


def read_frames(path: Path) -> list[FrameSlice]:
    frame = _read_table(path)
    if list(frame.columns) != FRAME_CSV_COLUMNS:
        raise FormatError(f"{path}: expected header {','.join(FRAME_CSV_COLUMNS)}")
    return [
        FrameSlice(start_t=int(r.start_t), end_t=int(r.end_t), start_index=int(r.start_index), stop_index=int(r.stop_index))
        for r in frame.itertuples(index=False)
    ]


def depth_records(frames: list[DepthFrame]) -> pd.DataFrame:
    """One row per retained event, frames numbered in order."""
    parts = [
        pd.DataFrame(
            {
                "frame": np.full(len(f), i, dtype=np.int64),
                "t_us": f.t,
                "x_r": f.x_r,
                "y_r": f.y_r,
                "disparity_px": f.disparity,
                "depth_m": f.depth,
            }
        )
        for i, f in enumerate(frames)
    ]
    if not parts:
        return pd.DataFrame(columns=DEPTH_CSV_COLUMNS)
    return pd.concat(parts, ignore_index=True)


def write_depth_records(path: Path, frames: list[DepthFrame]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    depth_records(frames).to_csv(path, index=False, float_format="%.17g")


def read_depth_records(path: Path) -> dict[int, DepthFrame]:
    """Depth frames from a record CSV, keyed by frame number.

    Frames without retained events have no rows and are absent from the
    result. Frame bounds are the first and last record times.
    """
    frame = _read_table(path)
    if list(frame.columns) != DEPTH_CSV_COLUMNS:
        raise FormatError(f"{path}: expected header {','.join(DEPTH_CSV_COLUMNS)}")
    result: dict[int, DepthFrame] = {}
    for number, group in frame.groupby("frame", sort=True):
        key = int(number)  # type: ignore[call-overload]
        t = group["t_us"].to_numpy(dtype=np.int64)
        try:
            result[key] = DepthFrame(
                x_r=group["x_r"].to_numpy(dtype=np.float64),
                y_r=group["y_r"].to_numpy(dtype=np.float64),
                disparity=group["disparity_px"].to_numpy(dtype=np.float64),
                depth=group["depth_m"].to_numpy(dtype=np.float64),
                t=t,
                start_t=int(t.min()),
                end_t=int(t.max()),
            )
        except ValueError as e:
            raise FormatError(f"{path}: {e}") from e
    if any(n < 0 for n in result):
        raise FormatError(f"{path}: negative frame number")
    return result


def write_ground_truth(path: Path, stream: EventStream, truth: GroundTruth) -> None:
    """Per-event ground truth CSV aligned with the simulated stream."""
    starts = np.asarray(truth.frame_starts, dtype=np.int64)[truth.frame]
    table = pd.DataFrame(
        {
            "t_us": stream.t,
            "x": stream.x,
            "y": stream.y,
            "p": stream.p,
            "frame": truth.frame,
            "proj_u": truth.proj_u,
            "proj_v": truth.proj_v,
            "depth_m": truth.depth,
            "disparity_px": truth.disparity,
            "emission_t_us": truth.emission_t,
            "origin": truth.origin,
            "frame_start_us": starts,
            "scan_span_us": np.full(len(truth), truth.scan_span_us),
        }
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.17g")


def read_ground_truth(path: Path) -> GroundTruth:
    table = _read_table(path)
    if list(table.columns) != TRUTH_CSV_COLUMNS:
        raise FormatError(f"{path}: expected header {','.join(TRUTH_CSV_COLUMNS)}")
    frame_index = table["frame"].to_numpy(dtype=np.int32)
    starts = table.groupby("frame")["frame_start_us"].first()
    frame_starts = [int(starts.get(k, 0)) for k in range(int(frame_index.max()) + 1)] if len(table) else []
    return GroundTruth(
        frame=frame_index,
        proj_u=table["proj_u"].to_numpy(dtype=np.int64),
        proj_v=table["proj_v"].to_numpy(dtype=np.int64),
        depth=table["depth_m"].to_numpy(dtype=np.float64),
        disparity=table["disparity_px"].to_numpy(dtype=np.float64),
        emission_t=table["emission_t_us"].to_numpy(dtype=np.float64),
        origin=table["origin"].to_numpy(dtype=np.uint8),
        frame_starts=frame_starts,
        scan_span_us=float(table["scan_span_us"].iloc[0]) if len(table) else 0.0,
    )


def read_ground_truth_events(
    path: Path, sensor_width: int | None = None, sensor_height: int | None = None
) -> EventStream:
    """The event stream stored in the leading columns of a ground truth CSV."""
    table = _read_table(path, usecols=EVENT_CSV_COLUMNS)
    return _events_from_table(table[EVENT_CSV_COLUMNS], path, sensor_width, sensor_height)


# --- point clouds -------------------------------------------------------------


def export_ply(frame: DepthFrame, calib: StereoCalibration, path: Path | None = None) -> str:
    """ASCII PLY of a depth frame: x y z in meters plus the event time in us."""
    if len(frame) == 0:
        raise FormatError("cannot export an empty depth frame")
    points = frame.points(calib)
    vertices = np.empty(len(points), dtype=[("x", "f8"), ("y", "f8"), ("z", "f8"), ("t", "i8")])
    vertices["x"] = points[:, 0]
    vertices["y"] = points[:, 1]
    vertices["z"] = points[:, 2]
    vertices["t"] = frame.t
    ply = PlyData([PlyElement.describe(vertices, "vertex")], text=True)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        ply.write(str(path))
        return path.read_text()
    buffer = io.BytesIO()
    ply.write(buffer)
    return buffer.getvalue().decode("ascii")


def read_ply_points(path: Path) -> np.ndarray:
    """(N, 3) vertex positions of a PLY file."""
    vertex = PlyData.read(str(path))["vertex"]
    return np.column_stack([vertex["x"], vertex["y"], vertex["z"]]).astype(np.float64)
