"""Core value models shared across the depth pipeline."""

from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

# Reference per-frame latency of the single-threaded CPU implementation (ms).
REFERENCE_FRAME_LATENCY_MS = 2.67


class Polarity(int, Enum):
    """Sign of the brightness change that triggered an event."""

    NEGATIVE = 0
    POSITIVE = 1


class DedupMode(str, Enum):
    """How repeated events at one pixel within a frame are treated."""

    KEEP_FIRST = "keep_first"
    KEEP_ALL = "keep_all"


class DiscardReason(str, Enum):
    """Why an event did not produce a depth value."""

    UNDEFINED_ENTRY = "undefined_entry"
    NONPOSITIVE_DISPARITY = "nonpositive_disparity"
    OUT_OF_BOUNDS = "out_of_bounds"
    NEGATIVE_POLARITY = "negative_polarity"
    DUPLICATE_COORDINATE = "duplicate_coordinate"

    @property
    def label(self) -> str:
        """Human readable label for reports."""
        return {
            DiscardReason.UNDEFINED_ENTRY: "Undefined X-map entry",
            DiscardReason.NONPOSITIVE_DISPARITY: "Disparity <= 0",
            DiscardReason.OUT_OF_BOUNDS: "Out of bounds",
            DiscardReason.NEGATIVE_POLARITY: "Negative polarity",
            DiscardReason.DUPLICATE_COORDINATE: "Duplicate coordinate",
        }[self]


class TimeMapVariant(str, Enum):
    """Ideal projector time map flavours."""

    SIMPLE = "simple"
    FULL = "full"


class MapKind(int, Enum):
    """Kind byte of the map binary format."""

    TIME_MAP = 0
    XMAP = 1
    RECTIFY_MAP = 2


class SceneKind(str, Enum):
    """Parametric scenes the simulator can render."""

    PLANE = "plane"
    STAIRCASE = "staircase"
    SPHERE = "sphere"
    HEIGHTFIELD = "heightfield"


class SpeedModel(str, Enum):
    """Temporal behaviour of the scanning mirror."""

    LINEAR = "linear"
    POLYNOMIAL = "polynomial"


class EventOrigin(int, Enum):
    """Where a simulated event comes from."""

    SCAN = 0
    DUPLICATE = 1
    NEGATIVE = 2


class Event(BaseModel):
    """A single asynchronous brightness change detection."""

    model_config = ConfigDict(frozen=True)

    t: int = Field(..., description="Timestamp in microseconds")
    x: int = Field(..., ge=0, description="Pixel column")
    y: int = Field(..., ge=0, description="Pixel row")
    polarity: Polarity = Field(default=Polarity.POSITIVE, description="Polarity of the change")


class TriggerConfig(BaseModel):
    """Thresholds used to find projected frames in a raw event stream."""

    model_config = ConfigDict(frozen=True)

    max_intra_frame_gap: int = Field(default=40, gt=0, description="Largest gap between consecutive events (us)")
    min_frame_span: int = Field(default=8000, gt=0, description="Shortest accepted frame (us)")
    batch_span: int = Field(default=16667, gt=0, description="Minimum span of an analysed batch (us)")

    @model_validator(mode="after")
    def _check_ordering(self) -> "TriggerConfig":
        if not self.max_intra_frame_gap < self.min_frame_span < self.batch_span:
            raise ValueError("expected max_intra_frame_gap < min_frame_span < batch_span")
        return self


class FrameSlice(BaseModel):
    """One projected frame located inside an event stream."""

    model_config = ConfigDict(frozen=True)

    start_t: int = Field(..., description="Timestamp of the first event (us)")
    end_t: int = Field(..., description="Timestamp of the last event (us)")
    start_index: int = Field(..., ge=0, description="Index of the first event in the source stream")
    stop_index: int = Field(..., ge=0, description="One past the index of the last event")

    @model_validator(mode="after")
    def _check_range(self) -> "FrameSlice":
        if self.end_t < self.start_t or self.stop_index < self.start_index:
            raise ValueError("frame slice bounds are reversed")
        return self

    @computed_field
    @property
    def span(self) -> int:
        """Duration covered by the frame (us)."""
        return self.end_t - self.start_t

    @computed_field
    @property
    def event_count(self) -> int:
        return self.stop_index - self.start_index


class PinholeIntrinsics(BaseModel):
    """Pinhole model of a camera or projector, no distortion."""

    model_config = ConfigDict(frozen=True)

    fx: float = Field(..., gt=0, description="Focal length along x (px)")
    fy: float = Field(..., gt=0, description="Focal length along y (px)")
    cx: float = Field(..., ge=0, description="Principal point x (px)")
    cy: float = Field(..., ge=0, description="Principal point y (px)")
    width: int = Field(..., gt=0, description="Horizontal resolution (px)")
    height: int = Field(..., gt=0, description="Vertical resolution (px)")

    @model_validator(mode="after")
    def _check_principal_point(self) -> "PinholeIntrinsics":
        if not (self.cx < self.width and self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        return self

    @property
    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix K."""
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


class StereoCalibration(BaseModel):
    """Camera and projector models plus the projector pose (X_proj = R X_cam + T)."""

    model_config = ConfigDict(frozen=True)

    camera: PinholeIntrinsics
    projector: PinholeIntrinsics
    rotation: tuple[tuple[float, float, float], tuple[float, float, float], tuple[float, float, float]] = (
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, 0.0, 1.0),
    )
    translation: tuple[float, float, float] = Field(..., description="Projector translation in meters")

    @field_validator("rotation")
    @classmethod
    def _check_orthonormal(
        cls, value: tuple[tuple[float, float, float], ...]
    ) -> tuple[tuple[float, float, float], ...]:
        r = np.asarray(value, dtype=np.float64)
        if not np.allclose(r.T @ r, np.eye(3), rtol=0.0, atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        return value

    @property
    def rotation_matrix(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=np.float64)

    @property
    def translation_vector(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    @computed_field
    @property
    def rectified_focal(self) -> float:
        """Shared focal length of both rectified views (px)."""
        return self.camera.fx

    @computed_field
    @property
    def baseline(self) -> float:
        """Distance between camera and projector centres (m)."""
        return float(np.linalg.norm(self.translation_vector))

    @property
    def rectified_principal_point(self) -> tuple[float, float]:
        return self.camera.cx, self.camera.cy


class ScanModel(BaseModel):
    """Nominal raster timing of the laser projector."""

    model_config = ConfigDict(frozen=True)

    rows: int = Field(default=720, gt=0, description="Scan lines per frame")
    line_period_us: float = Field(default=1e6 / (720 * 60.0), gt=0, description="Time per scan line (us)")
    frame_rate_hz: float = Field(default=60.0, gt=0, description="Projector refresh rate (Hz)")

    @model_validator(mode="after")
    def _check_line_period(self) -> "ScanModel":
        nominal = 1e6 / (self.rows * self.frame_rate_hz)
        if abs(self.line_period_us - nominal) > 1e-3 * nominal:
            raise ValueError(f"line period {self.line_period_us:.3f} us does not match 1/(rows x rate)")
        return self

    @classmethod
    def from_rows(cls, rows: int, frame_rate_hz: float = 60.0) -> "ScanModel":
        return cls(rows=rows, line_period_us=1e6 / (rows * frame_rate_hz), frame_rate_hz=frame_rate_hz)


class ScanProfile(BaseModel):
    """Timing and noise behaviour of a simulated laser scan."""

    model_config = ConfigDict(frozen=True)

    speed_model: SpeedModel = Field(default=SpeedModel.LINEAR, description="Scan speed model")
    coefficients: tuple[float, ...] = Field(
        default=(1.0,), description="Polynomial coefficients a1..a3 of t(s) = a1 s + a2 s^2 + a3 s^3"
    )
    frame_rate_hz: float = Field(default=60.0, gt=0)
    rows: int = Field(default=720, gt=1, description="Scan lines per frame")
    scan_fraction: float = Field(default=0.78, gt=0, le=1, description="Active share of the frame period")
    x_jitter_sigma: float = Field(default=0.0, ge=0, description="Camera-side x jitter (px)")
    t_jitter_sigma: float = Field(default=0.0, ge=0, description="Timestamp jitter (us)")
    refractory: int = Field(default=0, ge=0, description="Per-pixel dead time, 0 disables (us)")
    negative_event_rate: float = Field(default=0.0, ge=0, lt=1, description="Share of injected negative events")
    duplicate_rate: float = Field(default=0.0, ge=0, lt=1, description="Share of injected readout duplicates")

    @model_validator(mode="after")
    def _check_speed_model(self) -> "ScanProfile":
        if self.speed_model is SpeedModel.LINEAR:
            return self
        if not 1 <= len(self.coefficients) <= 3:
            raise ValueError("polynomial speed model takes one to three coefficients")
        if abs(sum(self.coefficients) - 1.0) > 1e-9:
            raise ValueError("speed model must map 1 to 1")
        s = np.linspace(0.0, 1.0, 1001)
        derivative = sum((k + 1) * a * s**k for k, a in enumerate(self.coefficients))
        if np.any(derivative < -1e-12):
            raise ValueError("speed model must be monotone on [0, 1]")
        return self

    @classmethod
    def quadratic(cls, **kwargs: object) -> "ScanProfile":
        """Profile whose scan time grows with the square of the scan position."""
        return cls(speed_model=SpeedModel.POLYNOMIAL, coefficients=(0.0, 1.0), **kwargs)  # type: ignore[arg-type]

    def scan_time(self, position: np.ndarray) -> np.ndarray:
        """Normalized emission time for normalized scan positions in [0, 1]."""
        s = np.clip(np.asarray(position, dtype=np.float64), 0.0, 1.0)
        if self.speed_model is SpeedModel.LINEAR:
            return s
        return sum((a * s ** (k + 1) for k, a in enumerate(self.coefficients)), np.zeros_like(s))

    @property
    def period_us(self) -> float:
        return 1e6 / self.frame_rate_hz

    @property
    def scan_span_us(self) -> float:
        """Duration of the active scan within one period."""
        return self.scan_fraction * self.period_us

    @property
    def line_period_us(self) -> float:
        """Time between consecutive scan line starts under linear speed."""
        return self.scan_span_us / self.rows


class Scene(BaseModel):
    """Parametric scene in camera coordinates (meters)."""

    model_config = ConfigDict(frozen=True)

    kind: SceneKind = SceneKind.PLANE
    plane_depth: float = Field(default=1.0, gt=0, description="Plane or background depth (m)")
    step_depths: tuple[float, ...] = Field(default=(0.9, 1.0, 1.1), description="Staircase step depths (m)")
    step_extent: float = Field(default=0.3, gt=0, description="Half range of the viewing slope covered by steps")
    sphere_center: tuple[float, float, float] = (0.0, 0.0, 0.8)
    sphere_radius: float = Field(default=0.15, gt=0)
    heightfield: tuple[tuple[float, ...], ...] = Field(
        default=((1.0, 1.05), (0.95, 1.0)), description="Depth grid over viewing slopes (m)"
    )
    heightfield_extent: float = Field(default=1.0, gt=0, description="Half range of slopes covered by the grid")

    @model_validator(mode="after")
    def _check_depths(self) -> "Scene":
        depths = [self.plane_depth, *self.step_depths, *(d for row in self.heightfield for d in row)]
        if not all(np.isfinite(d) and d > 0 for d in depths):
            raise ValueError("all scene depths must be finite and positive")
        if self.kind is SceneKind.STAIRCASE and not self.step_depths:
            raise ValueError("staircase needs at least one step")
        if self.kind is SceneKind.HEIGHTFIELD and (
            len(self.heightfield) < 2 or len({len(row) for row in self.heightfield}) != 1 or len(self.heightfield[0]) < 2
        ):
            raise ValueError("heightfield must be a rectangular grid of at least 2x2")
        return self


class AgreementStats(BaseModel):
    """Per-event agreement between two disparity estimates."""

    tolerance_px: float
    n_compared: int = 0
    fraction_within: float | None = Field(default=None, description="None when nothing could be compared")
    mean_abs_difference: float | None = None
    histogram_edges: list[float] = Field(default_factory=list)
    histogram_counts: list[int] = Field(default_factory=list)


class EvalReport(BaseModel):
    """Quantitative comparison of an estimated depth image with a reference."""

    rmse_cm: float = Field(..., ge=0)
    fill_rate: float = Field(..., ge=0, le=1)
    n_compared: int = Field(..., ge=0)
    mean_scene_depth: float = Field(..., description="Mean reference depth (m)")
    plane_fit_rmse_cm: float | None = None
    quantization_bound_cm: float | None = Field(
        default=None, description="Depth step of one disparity pixel at the median estimated disparity"
    )
    discard_counts: dict[DiscardReason, int] = Field(default_factory=dict)


class LatencyStats(BaseModel):
    """Wall time of per-frame depth computation."""

    repetitions: int
    n_events: int
    mean_ms: float
    std_ms: float
    median_ms: float
    p90_ms: float
    min_ms: float
    max_ms: float
    reference_ms: float = REFERENCE_FRAME_LATENCY_MS

    @computed_field
    @property
    def within_reference(self) -> bool:
        return self.mean_ms <= self.reference_ms


class DepthSummary(BaseModel):
    """Totals of a depth run over many frames."""

    n_frames: int = 0
    n_events: int = 0
    n_retained: int = 0
    discard_counts: dict[DiscardReason, int] = Field(default_factory=dict)
    dedup_drop_fraction: float = Field(
        default=0.0, ge=0, le=1, description="Share of positive events the coordinate filter removes"
    )
    mean_depth_m: float | None = None
    median_depth_m: float | None = None
    elapsed_ms: float = 0.0

    @computed_field
    @property
    def retained_fraction(self) -> float:
        return self.n_retained / self.n_events if self.n_events else 0.0


class SimulationSummary(BaseModel):
    """What a simulator run produced."""

    scene: SceneKind
    frames: int
    n_events: int
    sensor: tuple[int, int]
    projector: tuple[int, int]
    n_duplicates: int = 0
    n_negative: int = 0
    refractory_dropped: int = 0
    mean_true_depth_m: float
    seed: int
