"""End-to-end runs of both depth paths on simulated scenes of the desk rig."""

import numpy as np
import pytest

from xmaps_depth.bench import bench
from xmaps_depth.geometry import compute_rectification
from xmaps_depth.metrics import evaluate, plane_fit_rmse, quantization_bound, rmse
from xmaps_depth.models import ScanProfile, Scene, SceneKind
from xmaps_depth.oracle import compare_disparities, oracle_disparity_map
from xmaps_depth.pipeline import reference_depth_image
from xmaps_depth.simulator import ideal_xmap_for, profile_time_map, simulate
from xmaps_depth.timemap import build_camera_time_map, calibrate_time_map, ideal_projector_time_map, rectify_time_map
from xmaps_depth.trigger import split_frames
from xmaps_depth.xmap import build_projector_xmap, depth_frame, render_depth_image

pytestmark = pytest.mark.acceptance

SCENES = {
    "plane": Scene(),
    "staircase": Scene(kind=SceneKind.STAIRCASE, step_extent=0.25),
    "sphere": Scene(kind=SceneKind.SPHERE, sphere_center=(-0.1, 0.0, 0.8), sphere_radius=0.08),
}


@pytest.fixture
def desk_profile() -> ScanProfile:
    return ScanProfile(rows=240)


def _first_frame(scene, calib, profile, seed=0):
    stream, truth = simulate(scene, calib, profile, frames=1, seed=seed)
    frame = split_frames(stream)[0]
    return stream, truth, frame


class TestPathEquivalence:
    """Lookup and search paths on noise-free scenes."""

    @pytest.mark.parametrize("name", list(SCENES))
    def test_lookup_agrees_with_search(self, name, desk_calib, desk_profile):
        """Per-event disparities agree within one pixel and the rendered images within 1 mm."""
        stream, truth, frame = _first_frame(SCENES[name], desk_calib, desk_profile)
        events = stream.slice(frame)
        rect, _ = compute_rectification(desk_calib)
        proj_map = rectify_time_map(profile_time_map(desk_profile, 240, 240), desk_calib)

        lookup = depth_frame(events, frame, ideal_xmap_for(desk_profile, desk_calib), rect, desk_calib)
        search = oracle_disparity_map(events, frame, proj_map, rect, desk_calib, max_disparity=128)
        stats = compare_disparities(lookup, search, tol=1.0)

        assert stats.fraction_within is not None and stats.fraction_within >= 0.99

        lookup_image = render_depth_image(lookup, 320, 240)
        assert rmse(lookup_image, search.to_depth(desk_calib)) <= 0.1

        if name != "sphere":
            reference = reference_depth_image(stream, truth, frame, rect, 320, 240)
            nearest = float(np.floor(truth.disparity.min()))
            assert rmse(lookup_image, reference) <= quantization_bound(nearest, desk_calib) * 100.0


class TestDepthAccuracy:
    """Depth of the plane at 1 m with and without jitter."""

    def test_plane_depth_and_noise(self, desk_calib, desk_profile):
        """The plane at 1 m comes back at 1 m; 2 px jitter keeps the plane residual bounded."""
        rect, _ = compute_rectification(desk_calib)
        xmap = ideal_xmap_for(desk_profile, desk_calib)

        stream, _, frame = _first_frame(Scene(), desk_calib, desk_profile)
        clean = depth_frame(stream.slice(frame), frame, xmap, rect, desk_calib)
        assert abs(np.median(clean.depth) - 1.0) <= quantization_bound(50.0, desk_calib)

        sigma = 2.0
        noisy_profile = desk_profile.model_copy(update={"x_jitter_sigma": sigma})
        stream, _, frame = _first_frame(Scene(), desk_calib, noisy_profile, seed=11)
        noisy = depth_frame(stream.slice(frame), frame, xmap, rect, desk_calib)

        assert plane_fit_rmse(noisy.points(desk_calib)) < 1.5 * sigma * 1.0 / 50.0 * 100.0


class TestCalibrationEfficacy:
    """Calibrated time maps against the ideal map under a non-linear scan."""

    def test_calibrated_map_beats_ideal_map_on_quadratic_scan(self, desk_calib):
        """Under a quadratic scan the calibrated X-map keeps the plane flat, the linear one does not."""
        profile = ScanProfile.quadratic(rows=240)
        white, _ = simulate(Scene(plane_depth=0.99), desk_calib, profile, frames=2)
        maps = [build_camera_time_map(white.slice(f), f) for f in split_frames(white)]
        calibrated = calibrate_time_map(maps, 240, 240)

        rect, _ = compute_rectification(desk_calib)
        calibrated_xmap = build_projector_xmap(rectify_time_map(calibrated, desk_calib), 240, 960)
        ideal_xmap = build_projector_xmap(rectify_time_map(ideal_projector_time_map(240, 240), desk_calib), 240, 960)

        stream, truth, frame = _first_frame(Scene(), desk_calib, profile)
        events = stream.slice(frame)
        with_calibration = depth_frame(events, frame, calibrated_xmap, rect, desk_calib)
        without = depth_frame(events, frame, ideal_xmap, rect, desk_calib)

        calibrated_fit = plane_fit_rmse(with_calibration.points(desk_calib))
        ideal_fit = plane_fit_rmse(without.points(desk_calib))
        assert calibrated_fit <= 0.25 * ideal_fit

        reference = reference_depth_image(stream, truth, frame, rect, 320, 240)
        report = evaluate(render_depth_image(with_calibration, 320, 240), reference)
        assert report.n_compared > 0.9 * np.count_nonzero(~np.isnan(reference))


class TestTriggers:
    """Frame detection on a 60 Hz stream."""

    def test_sixty_hz_triggers(self, small_calib, small_profile):
        """Five projected frames with injected noise events are all found."""
        noisy = small_profile.model_copy(update={"duplicate_rate": 0.02, "negative_event_rate": 0.02})
        stream, truth = simulate(Scene(), small_calib, noisy, frames=5, seed=5)

        frames = split_frames(stream)

        assert [f.start_t for f in frames] == truth.frame_starts
        assert all(abs(f.span - small_profile.scan_span_us) <= 2 for f in frames)


class TestLatency:
    """Per-frame timing of the lookup path."""

    def test_latency_is_measured(self, desk_calib, desk_profile):
        stream, _, frame = _first_frame(Scene(), desk_calib, desk_profile)
        rect, _ = compute_rectification(desk_calib)

        stats = bench(stream.slice(frame), frame, ideal_xmap_for(desk_profile, desk_calib), rect, desk_calib, repetitions=5)

        assert stats.n_events == frame.event_count
        assert stats.mean_ms > 0
