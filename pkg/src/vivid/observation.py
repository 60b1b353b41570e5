"""Synthetic observation operator, sensor placement, and Voronoi tessellation.

The full observation field is a local weighted sum of squared state values::

    Y[i, j] = 0.5 * sum_{rho1(i,j)} X**2 + beta * sum_{rho2(i,j)} X**2

where rho1 / rho2 are Euclidean disks of radius 3 and 1.5, clipped at the
domain boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, sparse

RHO1_RADIUS = 3.0
RHO2_RADIUS = 1.5
DEFAULT_BETA = 0.5
MAX_REDRAWS = 20


def disk_offsets(radius: float) -> np.ndarray:
    """Integer offsets (di, dj) with di**2 + dj**2 <= radius**2."""
    r = int(np.floor(radius))
    di, dj = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    keep = di**2 + dj**2 <= radius**2
    return np.stack([di[keep], dj[keep]], axis=1)


def observation_kernel(beta: float = DEFAULT_BETA) -> np.ndarray:
    """7x7 weights applied to X**2: 0.5 + beta inside rho2, 0.5 in rho1 \\ rho2."""
    r = int(RHO1_RADIUS)
    kernel = np.zeros((2 * r + 1, 2 * r + 1))
    for di, dj in disk_offsets(RHO1_RADIUS):
        kernel[r + di, r + dj] = 0.5
    for di, dj in disk_offsets(RHO2_RADIUS):
        kernel[r + di, r + dj] += beta
    return kernel


@dataclass(frozen=True)
class SensorSet:
    positions: np.ndarray  # (k, 2) integer grid indices
    values: np.ndarray  # (k,)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64).reshape(-1, 2)
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if pos.shape[0] != vals.shape[0]:
            raise ValueError("positions and values must have the same length")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", vals)

    @property
    def count(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TessellatedField:
    values: np.ndarray
    cell_index: np.ndarray


def observe_full(x: np.ndarray, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Observation field ``Y`` of the same shape as the state field ``x``."""
    x = np.asarray(x, dtype=float)
    # zero fill outside the grid == neighborhoods clipped at the boundary
    return ndimage.correlate(x * x, observation_kernel(beta), mode="constant", cval=0.0)


def _check_positions(positions: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    n, m = shape
    bad = (positions[:, 0] < 0) | (positions[:, 0] >= n) | (positions[:, 1] < 0) | (positions[:, 1] >= m)
    if bad.any():
        raise IndexError(f"sensor positions out of bounds for grid {shape}: {positions[bad].tolist()}")
    return positions


def lattice_nodes(grid_n: int, grid_m: int, shape: tuple[int, int]) -> np.ndarray:
    n, m = shape
    rows = np.floor((np.arange(grid_n) + 0.5) * n / grid_n).astype(np.int64)
    cols = np.floor((np.arange(grid_m) + 0.5) * m / grid_m).astype(np.int64)
    ii, jj = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


def place_sensors(
    grid_n: int,
    grid_m: int,
    r_s: int,
    shape: tuple[int, int],
    rng: np.random.Generator,
) -> np.ndarray:
    """One sensor near each node of a grid_n x grid_m lattice.

    Each node is displaced by an integer offset drawn uniformly from
    [-r_s, r_s]^2 and clipped to the grid. A position already taken is
    re-drawn up to MAX_REDRAWS times before falling back to the lattice node
    (or, if that is taken too, the nearest free pixel).
    """
    if grid_n * grid_m < 1:
        raise ValueError("need at least one lattice node")
    n, m = shape
    if grid_n * grid_m > n * m:
        raise ValueError("more sensors than pixels")
    taken: set[tuple[int, int]] = set()
    out = np.empty((grid_n * grid_m, 2), dtype=np.int64)
    for k, (i0, j0) in enumerate(lattice_nodes(grid_n, grid_m, shape)):
        pos = None
        for _ in range(MAX_REDRAWS + 1):
            di, dj = rng.integers(-r_s, r_s + 1, size=2)
            cand = (int(np.clip(i0 + di, 0, n - 1)), int(np.clip(j0 + dj, 0, m - 1)))
            if cand not in taken:
                pos = cand
                break
        if pos is None:
            pos = (int(i0), int(j0))
            if pos in taken:
                free = np.array([(i, j) for i in range(n) for j in range(m) if (i, j) not in taken])
                d2 = (free[:, 0] - i0) ** 2 + (free[:, 1] - j0) ** 2
                pos = tuple(int(c) for c in free[np.argmin(d2)])
        taken.add(pos)
        out[k] = pos
    return out


def extract(obs_field: np.ndarray, positions: np.ndarray) -> SensorSet:
    positions = _check_positions(positions, obs_field.shape)
    return SensorSet(positions, obs_field[positions[:, 0], positions[:, 1]].copy())


def tessellate(sensors: SensorSet, shape: tuple[int, int]) -> TessellatedField:
    """Fill every pixel with the value of its Euclidean-nearest sensor.

    Ties go to the lowest sensor index: a later sensor only takes a pixel
    when it is strictly closer.
    """
    if sensors.count == 0:
        raise ValueError("cannot tessellate an empty sensor set")
    positions = _check_positions(sensors.positions, shape)
    n, m = shape
    ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    best = np.full(shape, np.iinfo(np.int64).max, dtype=np.int64)
    owner = np.zeros(shape, dtype=np.int64)
    for k, (pi, pj) in enumerate(positions):
        d2 = (ii - pi) ** 2 + (jj - pj) ** 2
        closer = d2 < best
        best[closer] = d2[closer]
        owner[closer] = k
    return TessellatedField(sensors.values[owner], owner)


def sensor_weights(positions: np.ndarray, shape: tuple[int, int], beta: float = DEFAULT_BETA) -> sparse.csr_matrix:
    """Sparse (k, n*m) matrix W with y = W @ (x**2) at the sensor sites."""
    positions = _check_positions(positions, shape)
    n, m = shape
    kernel = observation_kernel(beta)
    r = kernel.shape[0] // 2
    offs = disk_offsets(RHO1_RADIUS)
    weights = kernel[r + offs[:, 0], r + offs[:, 1]]
    rows, cols, vals = [], [], []
    for k, (pi, pj) in enumerate(positions):
        ti = pi + offs[:, 0]
        tj = pj + offs[:, 1]
        inside = (ti >= 0) & (ti < n) & (tj >= 0) & (tj < m)
        rows.append(np.full(inside.sum(), k))
        cols.append(ti[inside] * m + tj[inside])
        vals.append(weights[inside])
    w = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(positions.shape[0], n * m),
    )
    w.sort_indices()
    return w


class SensorObservation:
    """Nonlinear observation operator restricted to a set of sensor sites.

    Maps a flattened state ``x`` to the k sensor values and exposes the
    analytic Jacobian ``2 * W * diag(x)``.
    """

    def __init__(self, positions: np.ndarray, shape: tuple[int, int], beta: float = DEFAULT_BETA):
        self.positions = _check_positions(positions, shape)
        self.shape = tuple(shape)
        self.beta = beta
        self.weights = sensor_weights(self.positions, self.shape, beta)

    @property
    def n_obs(self) -> int:
        return self.weights.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ (x * x)

    def jacobian(self, x: np.ndarray) -> sparse.csr_matrix:
        return (self.weights @ sparse.diags(2.0 * x)).tocsr()


class LinearObservation:
    """Linear operator ``y = H x`` with a dense or sparse matrix."""

    def __init__(self, matrix):
        self.matrix = matrix

    @property
    def n_obs(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def jacobian(self, x: np.ndarray):
        return self.matrix


def obs_jacobian(x: np.ndarray, positions: np.ndarray, beta: float = DEFAULT_BETA) -> sparse.csr_matrix:
    """Jacobian of the sensor values w.r.t. the flattened state, shape (k, n*m)."""
    x = np.asarray(x, dtype=float)
    return SensorObservation(positions, x.shape, beta).jacobian(x.ravel())


def add_observation_noise(sensors: SensorSet, level: float, rng: np.random.Generator) -> SensorSet:
    """Relative noise: ``y <- y * (1 + level * z)``, z standard normal."""
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    z = rng.standard_normal(sensors.count)
    return SensorSet(sensors.positions, sensors.values * (1.0 + level * z))


def write_sensors_csv(path: str | Path, sensors: SensorSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["k", "i", "j", "value"])
        for k, ((i, j), y) in enumerate(zip(sensors.positions, sensors.values)):
            writer.writerow([k, int(i), int(j), repr(float(y))])


def read_sensors_csv(path: str | Path) -> SensorSet:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["k"]))
    positions = np.array([[int(r["i"]), int(r["j"])] for r in rows], dtype=np.int64).reshape(-1, 2)
    values = np.array([float(r["value"]) for r in rows])
    return SensorSet(positions, values)
