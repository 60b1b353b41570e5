"""Damped Saint-Venant (shallow water) solver on a regular grid.

Explicit Euler in time, central differences in space, reflective walls. The
x direction runs along columns (axis 1), y along rows (axis 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class InstabilityError(RuntimeError):
    def __init__(self, step_index: int):
        super().__init__(f"non-finite state after step {step_index}; reduce dt")
        self.step_index = step_index


@dataclass(frozen=True)
class SweParams:
    g: float = 1.0
    b: float = 1.0
    dt: float = 1e-6
    h_still: float = 1.0
    h_p: float = 0.1
    r_w: float = 4.0
    grid: tuple[int, int] = (50, 50)
    # None -> geometric grid center ((N-1)/2, (M-1)/2)
    cylinder_center: tuple[float, float] | None = None
    dx: float = 1.0

    def __post_init__(self):
        if self.dt <= 0 or self.r_w <= 0 or self.h_p < 0 or self.dx <= 0:
            raise ValueError("require dt > 0, r_w > 0, h_p >= 0, dx > 0")
        if min(self.grid) < 2:
            raise ValueError("grid must be at least 2x2")
        h_max = self.h_still + self.h_p
        if self.dt * np.sqrt(self.g * h_max) >= self.dx:
            raise ValueError("time step violates dt * sqrt(g * h_max) < dx")

    @property
    def center(self) -> tuple[float, float]:
        if self.cylinder_center is not None:
            return self.cylinder_center
        n, m = self.grid
        return ((n - 1) / 2.0, (m - 1) / 2.0)


@dataclass(frozen=True)
class SweState:
    u: np.ndarray
    v: np.ndarray
    h: np.ndarray

    def mirrored_x(self) -> "SweState":
        """Reflect left-right; the x velocity changes sign."""
        return SweState(-self.u[:, ::-1], self.v[:, ::-1], self.h[:, ::-1])

    def mirrored_y(self) -> "SweState":
        return SweState(self.u[::-1, :], -self.v[::-1, :], self.h[::-1, :])


@dataclass
class SnapshotSet:
    params: SweParams
    times: np.ndarray
    fields: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        if self.fields.shape[0] != self.times.size:
            raise ValueError("one field per time index required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def at(self, step: int) -> np.ndarray:
        idx = np.searchsorted(self.times, step)
        if idx >= self.times.size or self.times[idx] != step:
            raise KeyError(f"step {step} was not saved")
        return self.fields[idx]


def cylinder_mask(params: SweParams) -> np.ndarray:
    n, m = params.grid
    ci, cj = params.center
    ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    return np.hypot(ii - ci, jj - cj) * params.dx <= params.r_w


def init_state(params: SweParams) -> SweState:
    n, m = params.grid
    ci, cj = params.center
    if not (0 <= ci <= n - 1 and 0 <= cj <= m - 1):
        raise ValueError(f"cylinder center {params.center} lies outside the {params.grid} grid")
    h = np.full((n, m), params.h_still, dtype=float)
    h[cylinder_mask(params)] += params.h_p
    return SweState(np.zeros((n, m)), np.zeros((n, m)), h)


def _ddx(f: np.ndarray, odd: bool, dx: float) -> np.ndarray:
    # ghost columns: even reflection, or odd (sign flip) for the wall-normal flux
    s = -1.0 if odd else 1.0
    left = s * f[:, :1]
    right = s * f[:, -1:]
    padded = np.concatenate([left, f, right], axis=1)
    return (padded[:, 2:] - padded[:, :-2]) / (2.0 * dx)


def _ddy(f: np.ndarray, odd: bool, dx: float) -> np.ndarray:
    return _ddx(f.T, odd, dx).T


def step(state: SweState, params: SweParams) -> SweState:
    """One explicit Euler update of the damped shallow-water system."""
    g, b, dt, dx = params.g, params.b, params.dt, params.dx
    u, v, h = state.u, state.v, state.h
    du = -g * _ddx(h, False, dx) - b * u
    dv = -g * _ddy(h, False, dx) - b * v
    dh = -_ddx(u * h, True, dx) - _ddy(v * h, True, dx)
    return SweState(u + dt * du, v + dt * dv, h + dt * dh)


def simulate(params: SweParams, n_steps: int, save_every: int = 1) -> SnapshotSet:
    """Integrate ``n_steps`` steps and keep the u field at every ``save_every``-th step.

    With ``n_steps == 0`` the set holds only the initial (zero) u field.
    """
    if n_steps < 0 or save_every < 1:
        raise ValueError("n_steps must be >= 0 and save_every >= 1")
    state = init_state(params)
    if n_steps == 0:
        return SnapshotSet(params, np.array([0]), state.u[None].copy())
    times, fields = [], []
    for k in range(1, n_steps + 1):
        state = step(state, params)
        if not (np.isfinite(state.h).all() and np.isfinite(state.u).all() and np.isfinite(state.v).all()):
            raise InstabilityError(k)
        if k % save_every == 0:
            times.append(k)
            fields.append(state.u.copy())
    if not fields:
        return SnapshotSet(params, np.empty(0, dtype=np.int64), np.empty((0, *params.grid)))
    return SnapshotSet(params, np.array(times), np.stack(fields))


def with_cylinder(params: SweParams, h_p: float, r_w: float) -> SweParams:
    return replace(params, h_p=h_p, r_w=r_w)
