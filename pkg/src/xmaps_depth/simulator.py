"""Synthetic event streams of a raster-scanning laser projector observing simple scenes.

The projector is tilted: scan line u runs along the projector x axis and
the beam sweeps each line along y. Projector pixel (u, v) is lit at the
normalized scan position (u + v / height) / width, mapped to time by the
profile's speed model.
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DimensionMismatchError, SimulationError
from .events import EventStream
from .geometry import projector_center, rectified_depths
from .models import (
    EventOrigin,
    FrameSlice,
    PinholeIntrinsics,
    ScanProfile,
    Scene,
    SceneKind,
    StereoCalibration,
    TimeMapVariant,
)
from .timemap import TimeMap, rectify_time_map
from .xmap import XMap, build_projector_xmap

logger = logging.getLogger(__name__)

_VISIBILITY_TOLERANCE_M = 1e-6
_HEIGHTFIELD_ITERATIONS = 100


def default_calibration() -> StereoCalibration:
    """640x480 camera beside a 720-line x 1280 tilted laser projector, 10 cm apart."""
    return StereoCalibration(
        camera=PinholeIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480),
        projector=PinholeIntrinsics(fx=1000.0, fy=1600.0, cx=360.0, cy=640.0, width=720, height=1280),
        translation=(0.1, 0.0, 0.0),
    )


def default_profile(**kwargs: object) -> ScanProfile:
    """60 Hz scan of 720 lines, 78 % of each period active."""
    kwargs.setdefault("rows", 720)
    return ScanProfile(**kwargs)  # type: ignore[arg-type]


class GroundTruth(BaseModel):
    """Per-event truth of a simulated stream, aligned with its events."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frame: np.ndarray = Field(..., description="Frame index of each event")
    proj_u: np.ndarray = Field(..., description="Projector scan line (x)")
    proj_v: np.ndarray = Field(..., description="Projector row within the line (y)")
    depth: np.ndarray = Field(..., description="Depth in the rectified camera frame (m)")
    disparity: np.ndarray = Field(..., description="Sub-pixel rectified disparity (px)")
    emission_t: np.ndarray = Field(..., description="Noise-free emission time (us)")
    origin: np.ndarray = Field(..., description="EventOrigin code")
    frame_starts: list[int]
    scan_span_us: float
    refractory_dropped: int = 0

    @model_validator(mode="after")
    def _check_alignment(self) -> "GroundTruth":
        n = len(self.frame)
        columns = (self.proj_u, self.proj_v, self.depth, self.disparity, self.emission_t, self.origin)
        if any(len(c) != n for c in columns):
            raise ValueError("ground truth columns differ in length")
        return self

    def __len__(self) -> int:
        return len(self.frame)

    __hash__ = None  # type: ignore[assignment]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroundTruth):
            return NotImplemented
        return self.frame_starts == other.frame_starts and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("frame", "proj_u", "proj_v", "depth", "disparity", "emission_t", "origin")
        )

    @property
    def scan_events(self) -> np.ndarray:
        """Mask of events produced by the scan itself (not injected)."""
        return self.origin == EventOrigin.SCAN.value

    def nominal_frame(self, index: int) -> FrameSlice:
        """Frame slice spanning the nominal scan window of frame `index`."""
        members = np.flatnonzero(self.frame == index)
        start = self.frame_starts[index]
        first, stop = (int(members[0]), int(members[-1]) + 1) if len(members) else (0, 0)
        return FrameSlice(
            start_t=start,
            end_t=start + round(self.scan_span_us),
            start_index=first,
            stop_index=stop,
        )


def _bilinear_grid(grid: np.ndarray, extent: float, qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
    ny, nx = grid.shape
    gx = np.clip((qx + extent) / (2 * extent) * (nx - 1), 0, nx - 1)
    gy = np.clip((qy + extent) / (2 * extent) * (ny - 1), 0, ny - 1)
    x0 = np.minimum(np.floor(gx).astype(np.int64), nx - 2)
    y0 = np.minimum(np.floor(gy).astype(np.int64), ny - 2)
    fx = gx - x0
    fy = gy - y0
    return (
        grid[y0, x0] * (1 - fx) * (1 - fy)
        + grid[y0, x0 + 1] * fx * (1 - fy)
        + grid[y0 + 1, x0] * (1 - fx) * fy
        + grid[y0 + 1, x0 + 1] * fx * fy
    )


def _hit_plane(origin: np.ndarray, dirs: np.ndarray, depth: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (depth - origin[2]) / dirs[:, 2]
    return np.where((dirs[:, 2] > 0) & (lam > 0), lam, np.nan)


def _hit_sphere(origin: np.ndarray, dirs: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    oc = origin - center
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = 2.0 * dirs @ oc
    c = oc @ oc - radius * radius
    disc = b * b - 4 * a * c
    root = np.sqrt(np.where(disc >= 0, disc, np.nan))
    near = (-b - root) / (2 * a)
    far = (-b + root) / (2 * a)
    with np.errstate(invalid="ignore"):
        return np.where(near > 0, near, np.where(far > 0, far, np.nan))


def _hit_staircase(scene: Scene, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    steps = len(scene.step_depths)
    extent = scene.step_extent
    lam = np.full(len(dirs), np.nan)
    for k, depth in enumerate(scene.step_depths):
        candidate = _hit_plane(origin, dirs, depth)
        slope = (origin[1] + candidate * dirs[:, 1]) / depth
        with np.errstate(invalid="ignore"):
            band = np.clip(np.floor((slope + extent) / (2 * extent) * steps), 0, steps - 1)
            hit = (band == k) & ~np.isnan(candidate) & (np.isnan(lam) | (candidate < lam))
        lam = np.where(hit, candidate, lam)
    return lam


def _hit_heightfield(scene: Scene, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    grid = np.asarray(scene.heightfield, dtype=np.float64)
    forward = dirs[:, 2] > 0
    dz = np.where(forward, dirs[:, 2], 1.0)
    # fixed point of z = grid(x / z, y / z) along each ray
    z = np.full(len(dirs), grid.mean())
    for _ in range(_HEIGHTFIELD_ITERATIONS):
        lam = (z - origin[2]) / dz
        point = origin + lam[:, None] * dirs
        z_next = _bilinear_grid(grid, scene.heightfield_extent, point[:, 0] / z, point[:, 1] / z)
        converged = np.max(np.abs(z_next - z)) < 1e-12
        z = z_next
        if converged:
            break
    lam = (z - origin[2]) / dz
    return np.where(forward & (lam > 0), lam, np.nan)


def intersect_scene(scene: Scene, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Ray parameter of the first scene hit along origin + lam * dirs; NaN for misses."""
    match scene.kind:
        case SceneKind.PLANE:
            return _hit_plane(origin, dirs, scene.plane_depth)
        case SceneKind.STAIRCASE:
            return _hit_staircase(scene, origin, dirs)
        case SceneKind.SPHERE:
            sphere = _hit_sphere(origin, dirs, np.asarray(scene.sphere_center), scene.sphere_radius)
            background = _hit_plane(origin, dirs, scene.plane_depth)
            return np.where(np.isnan(sphere), background, np.fmin(sphere, background))
        case SceneKind.HEIGHTFIELD:
            return _hit_heightfield(scene, origin, dirs)
    raise SimulationError(f"unknown scene kind {scene.kind}")


def _scan_geometry(scene: Scene, calib: StereoCalibration) -> dict[str, np.ndarray]:
    """Static per projector pixel quantities, in scan order."""
    proj = calib.projector
    u = np.repeat(np.arange(proj.width), proj.height)
    v = np.tile(np.arange(proj.height), proj.width)
    pixels = np.column_stack([u, v, np.ones(len(u))]).astype(np.float64)
    dirs = pixels @ (calib.rotation_matrix.T @ np.linalg.inv(proj.matrix)).T
    origin = projector_center(calib)

    lam = intersect_scene(scene, origin, dirs)
    if np.isnan(lam).any():
        raise SimulationError(
            f"{int(np.isnan(lam).sum())} projector rays miss the {scene.kind.value} scene"
        )
    points = origin + lam[:, None] * dirs

    distance = np.linalg.norm(points, axis=1)
    seen_at = intersect_scene(scene, np.zeros(3), points / distance[:, None])
    visible = (points[:, 2] > 0) & (np.abs(seen_at - distance) < _VISIBILITY_TOLERANCE_M)

    cam = calib.camera
    x_cam = cam.fx * points[:, 0] / points[:, 2] + cam.cx
    y_cam = cam.fy * points[:, 1] / points[:, 2] + cam.cy
    depth = rectified_depths(points, calib)
    return {
        "u": u,
        "v": v,
        "position": (u + v / proj.height) / proj.width,
        "x_cam": x_cam,
        "y_cam": y_cam,
        "visible": visible,
        "depth": depth,
        "disparity": calib.rectified_focal * calib.baseline / depth,
    }


def _apply_refractory(t: np.ndarray, pixel: np.ndarray, refractory: int) -> np.ndarray:
    """Mask of events surviving a per-pixel dead time (t sorted ascending)."""
    keep = np.ones(len(t), dtype=bool)
    order = np.lexsort((np.arange(len(t)), pixel))
    last_pixel = -1
    last_t = 0
    for i in order.tolist():
        if pixel[i] == last_pixel and t[i] - last_t < refractory:
            keep[i] = False
            continue
        last_pixel = int(pixel[i])
        last_t = int(t[i])
    return keep


def simulate(
    scene: Scene,
    calib: StereoCalibration,
    profile: ScanProfile,
    frames: int = 1,
    seed: int = 0,
) -> tuple[EventStream, GroundTruth]:
    """Render `frames` projected frames of `scene` into a camera event stream."""
    if profile.rows != calib.projector.width:
        raise DimensionMismatchError(
            f"profile scans {profile.rows} lines, projector is {calib.projector.width} wide"
        )
    if frames < 1:
        raise SimulationError("simulate needs at least one frame")
    rng = np.random.default_rng(seed)
    geo = _scan_geometry(scene, calib)
    emit_offset = profile.scan_time(geo["position"]) * profile.scan_span_us
    cam = calib.camera

    columns: dict[str, list[np.ndarray]] = {name: [] for name in ("t", "x", "y", "frame", "index", "emission")}
    frame_starts = []
    for k in range(frames):
        start = round(k * profile.period_us)
        frame_starts.append(start)
        emission = start + emit_offset
        t = emission + (rng.normal(0.0, profile.t_jitter_sigma, len(emission)) if profile.t_jitter_sigma else 0.0)
        x = geo["x_cam"] + (rng.normal(0.0, profile.x_jitter_sigma, len(t)) if profile.x_jitter_sigma else 0.0)
        xi = np.floor(x + 0.5)
        yi = np.floor(geo["y_cam"] + 0.5)
        on_sensor = geo["visible"] & (xi >= 0) & (xi < cam.width) & (yi >= 0) & (yi < cam.height)
        columns["t"].append(np.maximum(np.rint(t[on_sensor]), 0).astype(np.int64))
        columns["x"].append(xi[on_sensor].astype(np.int64))
        columns["y"].append(yi[on_sensor].astype(np.int64))
        columns["frame"].append(np.full(int(on_sensor.sum()), k, dtype=np.int32))
        columns["index"].append(np.flatnonzero(on_sensor))
        columns["emission"].append(emission[on_sensor])

    t, x, y, frame, index, emission = (np.concatenate(columns[name]) for name in columns)
    if len(t) == 0:
        raise SimulationError("no projected pixel lands on the camera sensor")
    order = np.argsort(t, kind="stable")
    t, x, y, frame, index, emission = (a[order] for a in (t, x, y, frame, index, emission))

    refractory_dropped = 0
    if profile.refractory:
        keep = _apply_refractory(t, y * cam.width + x, profile.refractory)
        refractory_dropped = int((~keep).sum())
        t, x, y, frame, index, emission = (a[keep] for a in (t, x, y, frame, index, emission))

    n = len(t)
    origin = np.full(n, EventOrigin.SCAN.value, dtype=np.uint8)
    polarity = np.ones(n, dtype=np.uint8)
    source = np.arange(n)
    duplicated = source[rng.random(n) < profile.duplicate_rate]
    negated = source[rng.random(n) < profile.negative_event_rate]
    picks = np.concatenate([source, duplicated, negated])
    t = np.concatenate([t, t[duplicated], t[negated] + 1])
    origin = np.concatenate(
        [
            origin,
            np.full(len(duplicated), EventOrigin.DUPLICATE.value, dtype=np.uint8),
            np.full(len(negated), EventOrigin.NEGATIVE.value, dtype=np.uint8),
        ]
    )
    polarity = np.concatenate([polarity, np.ones(len(duplicated), np.uint8), np.zeros(len(negated), np.uint8)])

    order = np.argsort(t, kind="stable")
    picks = picks[order]
    stream = EventStream.from_arrays(t[order], x[picks], y[picks], polarity[order], cam.width, cam.height)
    scan_index = index[picks]
    truth = GroundTruth(
        frame=frame[picks],
        proj_u=geo["u"][scan_index],
        proj_v=geo["v"][scan_index],
        depth=geo["depth"][scan_index],
        disparity=geo["disparity"][scan_index],
        emission_t=emission[picks],
        origin=origin[order],
        frame_starts=frame_starts,
        scan_span_us=profile.scan_span_us,
        refractory_dropped=refractory_dropped,
    )
    logger.info(
        f"Simulated {frames} frame(s) of a {scene.kind.value} scene: {len(stream)} events "
        f"({len(duplicated)} duplicates, {len(negated)} negative, {refractory_dropped} refractory drops)"
    )
    return stream, truth


def profile_time_map(
    profile: ScanProfile, width: int, height: int, variant: TimeMapVariant = TimeMapVariant.SIMPLE
) -> TimeMap:
    """True raw projector time map of a scan profile."""
    if profile.rows != width:
        raise DimensionMismatchError(f"profile scans {profile.rows} lines, projector is {width} wide")
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    position = (xs + ys / height) / width if variant is TimeMapVariant.FULL else xs / width
    return TimeMap(width=width, height=height, values=np.clip(profile.scan_time(position), 0.0, 1.0))


def ideal_xmap_for(profile: ScanProfile, calib: StereoCalibration, time_columns: int | None = None) -> XMap:
    """X-map implied by the speed model, without generating events."""
    raw = profile_time_map(profile, calib.projector.width, calib.projector.height)
    rectified = rectify_time_map(raw, calib)
    return build_projector_xmap(rectified, calib.projector.width, time_columns)
