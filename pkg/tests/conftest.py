"""Shared fixtures: small pinhole rigs and simulated recordings."""

import numpy as np
import pytest

from xmaps_depth.events import EventStream
from xmaps_depth.geometry import compute_rectification
from xmaps_depth.models import FrameSlice, PinholeIntrinsics, ScanProfile, Scene, StereoCalibration
from xmaps_depth.simulator import ideal_xmap_for, simulate
from xmaps_depth.trigger import split_frames


def _calibration(
    camera: tuple[float, float, float, int, int],
    projector: tuple[float, float, float, float, int, int],
    translation: tuple[float, float, float] = (0.1, 0.0, 0.0),
) -> StereoCalibration:
    """Calibration from (f, cx, cy, width, height) and (fx, fy, cx, cy, width, height)."""
    f, cx, cy, width, height = camera
    pfx, pfy, pcx, pcy, pwidth, pheight = projector
    return StereoCalibration(
        camera=PinholeIntrinsics(fx=f, fy=f, cx=cx, cy=cy, width=width, height=height),
        projector=PinholeIntrinsics(fx=pfx, fy=pfy, cx=pcx, cy=pcy, width=pwidth, height=pheight),
        translation=translation,
    )


@pytest.fixture
def small_calib() -> StereoCalibration:
    """160x120 camera, 240-line projector; rectified projector x = u / 3 + 40, d = 10 at 1 m."""
    return _calibration((100.0, 80.0, 60.0, 160, 120), (300.0, 100.0, 120.0, 60.0, 240, 120))


@pytest.fixture
def unit_calib() -> StereoCalibration:
    """One scan line per camera column: a plane at 1 m puts line u on camera column u + 10."""
    return _calibration((100.0, 80.0, 60.0, 160, 120), (100.0, 100.0, 60.0, 60.0, 120, 120))


@pytest.fixture
def desk_calib() -> StereoCalibration:
    """320x240 camera with f = 500 px, 10 cm baseline: d = 50 px at 1 m."""
    return _calibration((500.0, 160.0, 120.0, 320, 240), (1000.0, 500.0, 120.0, 120.0, 240, 240))


@pytest.fixture
def small_profile() -> ScanProfile:
    return ScanProfile(rows=240)


@pytest.fixture
def small_recording(small_calib, small_profile):
    """Two noise-free frames of a plane at 1 m seen by the small rig."""
    return simulate(Scene(), small_calib, small_profile, frames=2, seed=0)


@pytest.fixture
def small_frames(small_recording) -> list[FrameSlice]:
    stream, _ = small_recording
    return split_frames(stream)


@pytest.fixture
def small_rect(small_calib):
    cam, _ = compute_rectification(small_calib)
    return cam


@pytest.fixture
def small_xmap(small_calib, small_profile):
    return ideal_xmap_for(small_profile, small_calib)


def _stream_from_times(t, width: int = 16, height: int = 16) -> EventStream:
    t = np.asarray(t, dtype=np.int64)
    index = np.arange(len(t))
    return EventStream.from_arrays(t, index % width, (index // width) % height, None, width, height)


@pytest.fixture
def stream_from_times():
    """Factory for positive events at pixels cycling over the sensor, one per timestamp."""
    return _stream_from_times
