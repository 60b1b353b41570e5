"""Proper orthogonal decomposition of state snapshots and reduced-space operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_RTOL = 1e-12


@dataclass(frozen=True)
class PodBasis:
    """Leading left singular vectors of an (uncentered) snapshot matrix.

    ``modes`` is (n_dim, q) with orthonormal columns; ``singular_values``
    keeps the full spectrum of the decomposition so energy ratios can be
    computed for any truncation.
    """

    modes: np.ndarray
    singular_values: np.ndarray
    n_state: int

    @property
    def q(self) -> int:
        return self.modes.shape[1]

    @property
    def rank(self) -> int:
        s = self.singular_values
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.sum(s > RANK_RTOL * s[0]))

    def truncate(self, q: int) -> "PodBasis":
        if not 1 <= q <= self.q:
            raise ValueError(f"q={q} outside [1, {self.q}]")
        return PodBasis(self.modes[:, :q].copy(), self.singular_values, self.n_state)


def fit_pod(snapshots: np.ndarray, q: int) -> PodBasis:
    """Thin SVD of the snapshot matrix (one flattened state per column)."""
    snapshots = np.asarray(snapshots, dtype=float)
    if snapshots.ndim != 2:
        raise ValueError("snapshot matrix must be 2-D")
    dim, n_state = snapshots.shape
    if not 1 <= q <= min(dim, n_state):
        raise ValueError(f"q={q} outside [1, {min(dim, n_state)}]")
    u, s, _ = np.linalg.svd(snapshots, full_matrices=False)
    return PodBasis(u[:, :q].copy(), s, n_state)


def encode(basis: PodBasis, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != basis.modes.shape[0]:
        raise ValueError(f"state length {x.shape[0]} does not match basis dimension {basis.modes.shape[0]}")
    return basis.modes.T @ x


def decode(basis: PodBasis, x_hat: np.ndarray) -> np.ndarray:
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape[0] != basis.q:
        raise ValueError(f"latent length {x_hat.shape[0]} does not match q={basis.q}")
    return basis.modes @ x_hat


def rates(basis: PodBasis, q: int) -> tuple[float, float]:
    """Energy ratio gamma (sum of the first q squared singular values over all)
    and compression ratio rho = q / n_state."""
    s2 = basis.singular_values**2
    if not 0 <= q <= basis.n_state:
        raise ValueError(f"q={q} outside [0, {basis.n_state}]")
    total = s2.sum()
    gamma = float(s2[:q].sum() / total) if total > 0 else 0.0
    return gamma, q / basis.n_state


def reduce_cov(basis: PodBasis, cov: np.ndarray) -> np.ndarray:
    """``L^T C L`` symmetrized."""
    red = basis.modes.T @ cov @ basis.modes
    return 0.5 * (red + red.T)


class ReducedObservation:
    """``H_hat(z) = H(L z)`` with Jacobian ``J_H(L z) L``."""

    def __init__(self, basis: PodBasis, full):
        self.basis = basis
        self.full = full

    @property
    def n_obs(self) -> int:
        return self.full.n_obs

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.full(decode(self.basis, z))

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.full.jacobian(decode(self.basis, z)) @ self.basis.modes)


def reduced_obs_operator(basis: PodBasis, obs) -> ReducedObservation:
    return ReducedObservation(basis, obs)
