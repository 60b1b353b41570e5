"""Error covariances: Matern background, observation, and learned-operator (P) matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

R_FLOOR = 1e-3


@dataclass(frozen=True)
class GridGeometry:
    rows: int
    cols: int

    @property
    def dim(self) -> int:
        return self.rows * self.cols

    def coordinates(self) -> np.ndarray:
        ii, jj = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        return np.stack([ii.ravel(), jj.ravel()], axis=1).astype(float)

    def distances(self) -> np.ndarray:
        """Euclidean distances between all pairs of flattened grid locations."""
        c = self.coordinates()
        return np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])


def matern32(r, length: float):
    """Matern 3/2 correlation ``(1 + r/L) exp(-r/L)``."""
    if length <= 0:
        raise ValueError("correlation length must be positive")
    s = np.asarray(r, dtype=float) / length
    return (1.0 + s) * np.exp(-s)


def build_matern_cov(geom: GridGeometry, length: float, sigma: float = 1.0) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return sigma**2 * matern32(geom.distances(), length)


def gaspari_cohn(rho):
    """Gaspari-Cohn fifth-order compactly supported correlation, zero for rho >= 2."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("gaspari_cohn is defined for rho >= 0")
    out = np.zeros_like(rho)
    inner = rho < 1.0
    outer = (rho >= 1.0) & (rho < 2.0)
    r = rho[inner]
    out[inner] = 1.0 - 5.0 / 3.0 * r**2 + 5.0 / 8.0 * r**3 + 0.5 * r**4 - 0.25 * r**5
    r = rho[outer]
    out[outer] = (
        4.0 - 5.0 * r + 5.0 / 3.0 * r**2 + 5.0 / 8.0 * r**3 - 0.5 * r**4 + r**5 / 12.0 - 2.0 / (3.0 * r)
    )
    return out if out.ndim else float(out)


def localize(cov: np.ndarray, geom: GridGeometry, length: float) -> np.ndarray:
    """Schur product of ``cov`` with the Gaspari-Cohn taper at distance/length."""
    if cov.shape != (geom.dim, geom.dim):
        raise ValueError(f"covariance of shape {cov.shape} does not match grid {geom.rows}x{geom.cols}")
    if length <= 0:
        raise ValueError("localization length must be positive")
    return cov * gaspari_cohn(geom.distances() / length)


def shrink(cov: np.ndarray, weight: float) -> np.ndarray:
    """Blend toward the mean-variance identity: ``(1-w) C + w tr(C)/n I``."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("shrinkage weight must lie in [0, 1]")
    n = cov.shape[0]
    return (1.0 - weight) * cov + weight * (np.trace(cov) / n) * np.eye(n)


def empirical_cov(residuals) -> np.ndarray:
    """Uncentered sample covariance ``sum r r^T / (n - 1)`` of residual vectors."""
    res = np.asarray(residuals, dtype=float)
    if res.ndim != 2 or res.shape[0] < 2:
        raise ValueError("need at least two residual vectors")
    return res.T @ res / (res.shape[0] - 1)


def is_psd(cov: np.ndarray, rtol: float = 1e-8) -> bool:
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        return False
    dim = cov.shape[0]
    floor = -rtol * max(np.trace(cov), 0.0) / dim
    return bool(np.linalg.eigvalsh(cov).min() >= floor)


def cholesky_factor(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; one retry with diagonal jitter 1e-10 * trace / dim."""
    cov = np.asarray(cov, dtype=float)
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-10 * np.trace(cov) / cov.shape[0]
        return linalg.cholesky(cov + jitter * np.eye(cov.shape[0]), lower=True)


def sample_correlated_noise(cov: np.ndarray, rng: np.random.Generator, factor: np.ndarray | None = None) -> np.ndarray:
    """One draw from N(0, cov) via a square-root factor of ``cov``."""
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return np.zeros(cov.shape[0])
    if factor is None:
        factor = cholesky_factor(cov)
    return factor @ rng.standard_normal(cov.shape[0])


def observation_cov(values: np.ndarray, level: float = 0.0, floor: float = R_FLOOR) -> np.ndarray:
    """Diagonal R: ``floor * I`` for exact data, else ``(level * y)**2`` floored."""
    values = np.asarray(values, dtype=float)
    var = np.maximum((level * values) ** 2, floor)
    return np.diag(var)
