"""Depth accuracy metrics: RMSE, fill rate and plane-fit residual."""

import logging

import numpy as np

from .errors import DimensionMismatchError, MetricsError
from .models import DiscardReason, EvalReport, StereoCalibration

logger = logging.getLogger(__name__)

FILL_RATE_THRESHOLD = 0.01


def _check_same_shape(est: np.ndarray, ref: np.ndarray) -> None:
    if est.shape != ref.shape:
        raise DimensionMismatchError(f"depth images differ in shape: {est.shape} vs {ref.shape}")


def rmse(est: np.ndarray, ref: np.ndarray) -> float:
    """Root mean square depth difference in cm over cells defined in both images."""
    _check_same_shape(est, ref)
    both = ~np.isnan(est) & ~np.isnan(ref)
    if not both.any():
        raise MetricsError("the depth images share no defined cell")
    return float(np.sqrt(np.mean((est[both] - ref[both]) ** 2)) * 100.0)


def fill_rate(est: np.ndarray, ref: np.ndarray) -> float:
    """Share of reference cells estimated within 1 % of the mean reference depth."""
    _check_same_shape(est, ref)
    ref_defined = ~np.isnan(ref)
    if not ref_defined.any():
        raise MetricsError("reference depth image has no defined cell")
    threshold = FILL_RATE_THRESHOLD * float(ref[ref_defined].mean())
    with np.errstate(invalid="ignore"):
        close = ref_defined & ~np.isnan(est) & (np.abs(est - ref) < threshold)
    return float(close.sum() / ref_defined.sum())


def plane_fit_rmse(points: np.ndarray) -> float:
    """RMS point-to-plane distance in cm of a total least squares plane."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) < 3:
        raise MetricsError("plane fitting needs at least three 3D points")
    centered = points - points.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    if singular[1] <= 1e-12 * max(singular[0], 1e-300):
        raise MetricsError("points are collinear, the plane is undefined")
    distances = centered @ vt[-1]
    return float(np.sqrt(np.mean(distances**2)) * 100.0)


def quantization_bound(d: float, calib: StereoCalibration) -> float:
    """Depth step in meters between disparities d - 1 and d."""
    if d <= 1:
        raise MetricsError(f"quantization bound needs a disparity above 1 px, got {d}")
    fb = calib.rectified_focal * calib.baseline
    return fb / (d - 1) - fb / d


def median_quantization_bound(disparities: np.ndarray, calib: StereoCalibration) -> float | None:
    """Quantization bound in cm at the median disparity, None when it is undefined."""
    if disparities.size == 0:
        return None
    median = float(np.median(disparities))
    if median <= 1:
        return None
    return quantization_bound(median, calib) * 100.0


def evaluate(
    est: np.ndarray,
    ref: np.ndarray,
    points: np.ndarray | None = None,
    discard_counts: dict[DiscardReason, int] | None = None,
    quantization_bound_cm: float | None = None,
) -> EvalReport:
    """Evaluation report of an estimated depth image against a reference."""
    _check_same_shape(est, ref)
    both = ~np.isnan(est) & ~np.isnan(ref)
    plane = plane_fit_rmse(points) if points is not None and len(points) >= 3 else None
    report = EvalReport(
        rmse_cm=rmse(est, ref),
        fill_rate=fill_rate(est, ref),
        n_compared=int(both.sum()),
        mean_scene_depth=float(np.nanmean(ref)),
        plane_fit_rmse_cm=plane,
        quantization_bound_cm=quantization_bound_cm,
        discard_counts=discard_counts or {},
    )
    logger.info(f"RMSE {report.rmse_cm:.3f} cm, fill rate {report.fill_rate:.1%} over {report.n_compared} cells")
    return report
