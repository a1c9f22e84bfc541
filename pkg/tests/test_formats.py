"""Tests for file readers and writers."""

import numpy as np
import pytest

from xmaps_depth.errors import (
    BadMagicError,
    CalibrationFileError,
    FormatError,
    MapKindError,
    TruncatedFileError,
    UnsortedEventsError,
)
from xmaps_depth.formats import (
    export_ply,
    read_calibration,
    read_depth_records,
    read_events,
    read_frames,
    read_ground_truth,
    read_ground_truth_events,
    read_map,
    read_ply_points,
    read_rectify_map,
    read_time_map,
    read_xmap,
    write_calibration,
    write_depth_records,
    write_events,
    write_frames,
    write_ground_truth,
    write_map,
)
from xmaps_depth.models import MapKind
from xmaps_depth.timemap import TimeMap, ideal_projector_time_map
from xmaps_depth.xmap import DepthFrame, XMap, depth_frame


@pytest.fixture
def plane_depth(small_recording, small_frames, small_xmap, small_rect, small_calib) -> DepthFrame:
    stream, _ = small_recording
    return depth_frame(stream.slice(small_frames[0]), small_frames[0], small_xmap, small_rect, small_calib)


class TestEvents:
    """Test cases for event files."""

    def test_binary_round_trip(self, tmp_path, small_recording):
        stream, _ = small_recording
        path = tmp_path / "scan.xev"

        write_events(path, stream)

        assert path.stat().st_size == 16 + 16 * len(stream)
        assert read_events(path) == stream

    def test_csv_round_trip(self, tmp_path, stream_from_times):
        stream = stream_from_times(np.arange(0, 50, 5))
        path = tmp_path / "scan.csv"

        write_events(path, stream)

        assert path.read_text().splitlines()[0] == "t_us,x,y,p"
        assert read_events(path, 16, 16) == stream

    def test_csv_infers_resolution(self, tmp_path):
        path = tmp_path / "scan.csv"
        path.write_text("t_us,x,y,p\n1,3,4,1\n2,7,1,0\n")

        stream = read_events(path)

        assert (stream.sensor_width, stream.sensor_height) == (8, 5)
        assert stream.p.tolist() == [1, 0]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "scan.xev"
        path.write_bytes(b"NOPE" + bytes(12))

        with pytest.raises(BadMagicError):
            read_events(path)

    def test_truncated(self, tmp_path, stream_from_times):
        path = tmp_path / "scan.xev"
        write_events(path, stream_from_times(np.arange(10)))
        path.write_bytes(path.read_bytes()[:-3])

        with pytest.raises(TruncatedFileError):
            read_events(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "scan.xev"
        path.write_bytes(b"XEV1\x10")

        with pytest.raises(TruncatedFileError):
            read_events(path)

    def test_unsorted(self, tmp_path):
        path = tmp_path / "scan.csv"
        path.write_text("t_us,x,y,p\n5,0,0,1\n3,0,0,1\n")

        with pytest.raises(UnsortedEventsError):
            read_events(path)

    def test_wrong_csv_header(self, tmp_path):
        path = tmp_path / "scan.csv"
        path.write_text("time,x,y,p\n5,0,0,1\n")

        with pytest.raises(FormatError):
            read_events(path)


class TestMaps:
    """Test cases for XMP1 map files."""

    def test_time_map_round_trip(self, tmp_path):
        m = ideal_projector_time_map(8, 2)
        path = tmp_path / "proj.map"

        write_map(path, m)

        assert read_time_map(path) == m
        assert path.stat().st_size == 13 + 8 * 2 * 4

    def test_xmap_round_trip(self, tmp_path, small_xmap):
        path = tmp_path / "x.map"

        write_map(path, small_xmap)

        loaded = read_xmap(path, projector_width=240)
        assert loaded.projector_width == 240
        assert np.array_equal(loaded.entries, small_xmap.entries, equal_nan=True)

    def test_rectify_map_round_trip(self, tmp_path, small_rect):
        path = tmp_path / "rect.map"

        write_map(path, small_rect)

        loaded = read_rectify_map(path)
        assert (loaded.width, loaded.height) == (small_rect.width, small_rect.height)
        assert np.allclose(loaded.map_x, small_rect.map_x, atol=1e-4, equal_nan=True)

    def test_kind_is_checked(self, tmp_path):
        path = tmp_path / "proj.map"
        write_map(path, ideal_projector_time_map(8, 2))

        with pytest.raises(MapKindError):
            read_xmap(path)
        assert isinstance(read_map(path), TimeMap)

    def test_unknown_kind(self, tmp_path):
        path = tmp_path / "proj.map"
        write_map(path, ideal_projector_time_map(2, 1))
        data = bytearray(path.read_bytes())
        data[4] = 9
        path.write_bytes(bytes(data))

        with pytest.raises(MapKindError):
            read_map(path)

    def test_map_bad_magic(self, tmp_path):
        path = tmp_path / "proj.map"
        path.write_bytes(b"XEV1" + bytes(20))

        with pytest.raises(BadMagicError):
            read_map(path, MapKind.TIME_MAP)

    def test_invalid_xmap_entries(self, tmp_path):
        """Entries at or past the projector width are rejected on load."""
        path = tmp_path / "x.map"
        write_map(path, XMap(height=1, time_columns=2, projector_width=10, entries=np.array([[1.0, 9.0]])))

        with pytest.raises(FormatError):
            read_xmap(path)


class TestCalibration:
    """Test cases for calibration files."""

    def test_round_trip(self, tmp_path, small_calib):
        path = tmp_path / "rig.calib"

        write_calibration(path, small_calib)

        assert read_calibration(path) == small_calib

    def test_rotation_defaults_to_identity(self, tmp_path, small_calib):
        path = tmp_path / "rig.calib"
        write_calibration(path, small_calib)
        kept = [line for line in path.read_text().splitlines() if not line.startswith("r")]
        path.write_text("\n".join(kept) + "\n")

        assert read_calibration(path).rotation == small_calib.rotation

    def test_missing_keys(self, tmp_path):
        path = tmp_path / "rig.calib"
        path.write_text("cam_fx = 100\nt0 = 0.1\nt1 = 0\nt2 = 0\n")

        with pytest.raises(CalibrationFileError, match="cam_fy"):
            read_calibration(path)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "rig.calib"
        path.write_text("cam_fx: 100\n")

        with pytest.raises(CalibrationFileError, match=":1:"):
            read_calibration(path)

    def test_non_numeric_value(self, tmp_path):
        path = tmp_path / "rig.calib"
        path.write_text("cam_fx = wide\n")

        with pytest.raises(CalibrationFileError):
            read_calibration(path)


class TestRecords:
    """Test cases for frame lists, depth records, ground truth and point clouds."""

    def test_frames_round_trip(self, tmp_path, small_frames):
        path = tmp_path / "frames.csv"

        write_frames(path, small_frames)

        assert read_frames(path) == small_frames

    def test_depth_records_round_trip(self, tmp_path, plane_depth):
        path = tmp_path / "depth.csv"

        write_depth_records(path, [plane_depth, plane_depth])

        loaded = read_depth_records(path)
        assert len(loaded) == 2
        assert np.array_equal(loaded[1].depth, plane_depth.depth)
        assert np.array_equal(loaded[0].x_r, plane_depth.x_r)
        assert loaded[0].start_t == int(plane_depth.t.min())

    def test_depth_records_keep_frame_numbers(self, tmp_path, plane_depth, small_frames):
        """A frame without retained events leaves a gap in the numbering rather than shifting later frames."""
        path = tmp_path / "depth.csv"

        write_depth_records(path, [plane_depth, DepthFrame.empty(small_frames[1]), plane_depth])

        loaded = read_depth_records(path)
        assert sorted(loaded) == [0, 2]
        assert np.array_equal(loaded[2].depth, plane_depth.depth)

    def test_negative_frame_number(self, tmp_path):
        path = tmp_path / "depth.csv"
        path.write_text("frame,t_us,x_r,y_r,disparity_px,depth_m\n-1,5,1.0,2.0,10,1.0\n")

        with pytest.raises(FormatError):
            read_depth_records(path)

    def test_ground_truth_round_trip(self, tmp_path, small_recording):
        stream, truth = small_recording
        path = tmp_path / "scan.truth.csv"

        write_ground_truth(path, stream, truth)

        assert read_ground_truth(path) == truth
        assert read_ground_truth_events(path, 160, 120) == stream

    def test_ply_export(self, tmp_path, plane_depth, small_calib):
        path = tmp_path / "cloud.ply"

        text = export_ply(plane_depth, small_calib, path)

        assert text.startswith("ply")
        assert f"element vertex {len(plane_depth)}" in text
        points = read_ply_points(path)
        assert np.allclose(points, plane_depth.points(small_calib))
        assert np.allclose(points[:, 2], plane_depth.depth)

    def test_ply_of_empty_frame(self, small_frames, small_calib):
        with pytest.raises(FormatError):
            export_ply(DepthFrame.empty(small_frames[0]), small_calib)

    def test_ply_principal_point(self, tmp_path, small_calib):
        """An event at the rectified principal point with d = f * B lands at (0, 0, 1)."""
        frame = DepthFrame(
            x_r=np.array([80.0]),
            y_r=np.array([60.0]),
            disparity=np.array([10.0]),
            depth=np.array([1.0]),
            t=np.array([42]),
            start_t=0,
            end_t=100,
        )
        path = tmp_path / "one.ply"

        text = export_ply(frame, small_calib, path)

        assert "element vertex 1" in text
        assert read_ply_points(path) == pytest.approx(np.array([[0.0, 0.0, 1.0]]))


class TestTruncation:
    """Every reader rejects a file with its last byte cut off."""

    @pytest.fixture
    def written(
        self, tmp_path, stream_from_times, small_recording, small_frames, small_xmap, small_rect, small_calib, plane_depth
    ):
        stream, truth = small_recording
        files = {
            "events.xev": (lambda p: write_events(p, stream_from_times(np.arange(10))), read_events),
            "events.csv": (lambda p: write_events(p, stream_from_times(np.arange(10))), read_events),
            "time.map": (lambda p: write_map(p, ideal_projector_time_map(8, 2)), read_time_map),
            "x.map": (lambda p: write_map(p, small_xmap), read_xmap),
            "rect.map": (lambda p: write_map(p, small_rect), read_rectify_map),
            "rig.calib": (lambda p: write_calibration(p, small_calib), read_calibration),
            "frames.csv": (lambda p: write_frames(p, small_frames), read_frames),
            "depth.csv": (lambda p: write_depth_records(p, [plane_depth]), read_depth_records),
            "scan.truth.csv": (lambda p: write_ground_truth(p, stream, truth), read_ground_truth),
        }
        result = {}
        for name, (write, read) in files.items():
            path = tmp_path / name
            write(path)
            result[name] = (path, read)
        return result

    @pytest.mark.parametrize(
        "name",
        ["events.xev", "events.csv", "time.map", "x.map", "rect.map", "rig.calib", "frames.csv", "depth.csv", "scan.truth.csv"],
    )
    def test_one_byte_short(self, written, name):
        path, read = written[name]
        read(path)
        path.write_bytes(path.read_bytes()[:-1])

        with pytest.raises(TruncatedFileError):
            read(path)

    def test_ground_truth_events_short(self, tmp_path, small_recording):
        stream, truth = small_recording
        path = tmp_path / "scan.truth.csv"
        write_ground_truth(path, stream, truth)
        path.write_bytes(path.read_bytes()[:-1])

        with pytest.raises(TruncatedFileError):
            read_ground_truth_events(path, 160, 120)
