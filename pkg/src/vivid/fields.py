"""Grid fields, flattening, and the two reconstruction metrics (R-RMSE, SSIM)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# SSIM window: 11x11 Gaussian, sigma 1.5 (radius = int(3.5 * 1.5 + 0.5) = 5)
SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    r_rmse: float
    ssim: float


def check_field(field: np.ndarray) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if field.ndim != 2:
        raise ValueError(f"expected a 2-D field, got shape {field.shape}")
    if min(field.shape) < 2:
        raise ValueError(f"field must be at least 2x2, got {field.shape}")
    if not np.all(np.isfinite(field)):
        raise ValueError("field contains non-finite values")
    return field


def flatten(field: np.ndarray) -> np.ndarray:
    """Row-major flattening of a 2-D field, ``x_t`` from ``X_t``."""
    return check_field(field).reshape(-1).copy()


def unflatten(vector: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    rows, cols = shape
    if vector.shape != (rows * cols,):
        raise ValueError(f"vector of shape {vector.shape} does not match grid {shape}")
    return vector.reshape(rows, cols).copy()


def r_rmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Relative RMSE, ``||estimate - truth|| / ||truth||``."""
    estimate = np.asarray(estimate, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if estimate.shape != truth.shape:
        raise ValueError(f"length mismatch: {estimate.size} vs {truth.size}")
    norm = np.linalg.norm(truth)
    if norm == 0.0:
        raise ValueError("relative error undefined for a zero-norm truth")
    return float(np.linalg.norm(estimate - truth) / norm)


def _local_mean(field: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(field, SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="mirror")


def ssim(a: np.ndarray, b: np.ndarray, data_range: float | None = None) -> float:
    """Mean structural similarity of two equally shaped fields.

    Gaussian-weighted local statistics (population moments) with mirror
    boundaries. ``data_range`` sets the stabilizers C1 = (K1 D)^2 and
    C2 = (K2 D)^2; when omitted it is the joint range of both fields so the
    result stays symmetric in its arguments.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if data_range is None:
        data_range = max(a.max(), b.max()) - min(a.min(), b.min())
    if data_range <= 0.0:
        # both fields constant and identical
        return 1.0
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _local_mean(a)
    mu_b = _local_mean(b)
    var_a = _local_mean(a * a) - mu_a * mu_a
    var_b = _local_mean(b * b) - mu_b * mu_b
    cov_ab = _local_mean(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov_ab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def evaluate(estimate: np.ndarray, truth: np.ndarray, data_range: float | None = None) -> MetricReport:
    """R-RMSE and SSIM of a 2-D estimate against a 2-D truth."""
    return MetricReport(r_rmse(estimate, truth), ssim(estimate, truth, data_range))
