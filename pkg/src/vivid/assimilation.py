"""Variational assimilation: 3D-Var and VIVID objectives, BLUE closed forms.

The VIVID objective adds a third quadratic term pulling the analysis toward
the inverse-operator estimate ``x_v`` with error covariance ``P``::

    J(x) = 1/2 |x - x_b|^2_{B^-1} + 1/2 |x - x_v|^2_{P^-1} + 1/2 |y - H(x)|^2_{R^-1}

Gradients are exact for this J (no factor 2).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .covariance import cholesky_factor
from .lbfgs import OptimizeResult, SolverConfig, lbfgs
from .observation import LinearObservation


class GaussianTerm:
    """Mahalanobis norm for one covariance, factored once."""

    def __init__(self, cov: np.ndarray):
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be square")
        self.dim = cov.shape[0]
        self.cov = cov
        off_diag = cov - np.diag(np.diag(cov))
        self.diagonal = not np.any(off_diag)
        if self.diagonal:
            d = np.diag(cov)
            if np.any(d <= 0):
                raise linalg.LinAlgError("diagonal covariance is singular")
            self._inv_diag = 1.0 / d
        else:
            self._chol = cholesky_factor(cov)

    def solve(self, r: np.ndarray) -> np.ndarray:
        """``C^{-1} r`` for a vector or the columns of a matrix."""
        if self.diagonal:
            return (self._inv_diag * r.T).T
        return linalg.cho_solve((self._chol, True), r)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.dim))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.dim)


def _term(cov) -> GaussianTerm:
    return cov if isinstance(cov, GaussianTerm) else GaussianTerm(cov)


@dataclass
class AssimilationProblem:
    """Inputs of one assimilation.

    ``obs`` maps a state to observation space and exposes ``jacobian(x)``.
    ``x_v``/``P`` are the optional inverse-operator term (VIVID). Any of
    ``B``, ``R``, ``P`` may be passed pre-factored as a ``GaussianTerm``.
    """

    x_b: np.ndarray
    B: np.ndarray
    y: np.ndarray
    R: np.ndarray
    obs: object
    x_v: np.ndarray | None = None
    P: np.ndarray | None = None
    _b: GaussianTerm = field(init=False, repr=False)
    _r: GaussianTerm = field(init=False, repr=False)
    _p: GaussianTerm | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.x_b = np.asarray(self.x_b, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        n = self.x_b.shape[0]
        if self.B.shape != (n, n):
            raise ValueError(f"B shape {self.B.shape} does not match state length {n}")
        if self.R.shape != (self.y.size, self.y.size):
            raise ValueError(f"R shape {self.R.shape} does not match {self.y.size} observations")
        if (self.x_v is None) != (self.P is None):
            raise ValueError("x_v and P must be given together")
        self._b = _term(self.B)
        self._r = _term(self.R)
        if self.x_v is not None:
            self.x_v = np.asarray(self.x_v, dtype=float)
            if self.x_v.shape != (n,) or self.P.shape != (n, n):
                raise ValueError("x_v / P dimensions do not match the state")
            self._p = _term(self.P)

    @property
    def is_vivid(self) -> bool:
        return self.x_v is not None

    def without_vivid(self) -> "AssimilationProblem":
        return AssimilationProblem(self.x_b, self.B, self.y, self.R, self.obs)

    def cost_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        db = x - self.x_b
        ib = self._b.solve(db)
        innov = self.y - self.obs(x)
        ir = self._r.solve(innov)
        cost = 0.5 * (db @ ib) + 0.5 * (innov @ ir)
        grad = ib - self.obs.jacobian(x).T @ ir
        if self._p is not None:
            dv = x - self.x_v
            ip = self._p.solve(dv)
            cost += 0.5 * (dv @ ip)
            grad = grad + ip
        return float(cost), np.asarray(grad).ravel()


def _require(problem: AssimilationProblem, vivid: bool) -> None:
    if problem.is_vivid != vivid:
        raise ValueError("VIVID term required" if vivid else "3D-Var cost takes no VIVID term")


def cost_3dvar(x: np.ndarray, problem: AssimilationProblem) -> float:
    _require(problem, False)
    return problem.cost_and_grad(x)[0]


def grad_3dvar(x: np.ndarray, problem: AssimilationProblem) -> np.ndarray:
    _require(problem, False)
    return problem.cost_and_grad(x)[1]


def cost_vivid(x: np.ndarray, problem: AssimilationProblem) -> float:
    _require(problem, True)
    return problem.cost_and_grad(x)[0]


def grad_vivid(x: np.ndarray, problem: AssimilationProblem) -> np.ndarray:
    _require(problem, True)
    return problem.cost_and_grad(x)[1]


@dataclass
class AssimilationResult:
    x_a: np.ndarray
    iterations: int
    final_cost: float
    converged: bool
    cost_history: list[float]
    message: str = ""
    wall_ms: float = 0.0


def _gauss_newton(problem: AssimilationProblem, cfg: SolverConfig) -> OptimizeResult:
    """Newton-type iteration with the first-order Hessian B^-1 + H^T R^-1 H (+ P^-1)."""
    x = problem.x_b.copy()
    f, g = problem.cost_and_grad(x)
    history = [f]
    prior_hess = problem._b.inverse()
    if problem._p is not None:
        prior_hess += problem._p.inverse()
    k, converged, message = 0, False, "iteration limit reached"
    gnorm = float(np.linalg.norm(g))
    if gnorm < cfg.tol:
        return OptimizeResult(x, f, gnorm, 0, True, "gradient norm below tol", history)
    while k < cfg.k_max:
        jac = problem.obs.jacobian(x)
        jac = jac.toarray() if hasattr(jac, "toarray") else np.asarray(jac)
        hess = prior_hess + jac.T @ problem._r.solve(jac)
        d = -linalg.solve(hess, g, assume_a="sym")
        alpha = 1.0
        for _ in range(cfg.max_line_search):
            f_new, g_new = problem.cost_and_grad(x + alpha * d)
            if f_new <= f + cfg.c1 * alpha * (g @ d):
                break
            alpha *= 0.5
        else:
            message = "backtracking failed"
            break
        x = x + alpha * d
        f_old, f, g = f, f_new, g_new
        history.append(f)
        k += 1
        gnorm = float(np.linalg.norm(g))
        if gnorm < cfg.tol:
            converged, message = True, "gradient norm below tol"
            break
        if cfg.ftol > 0 and (f_old - f) <= cfg.ftol * max(abs(f_old), abs(f), 1.0):
            converged, message = True, "relative cost decrease below ftol"
            break
    return OptimizeResult(x, f, gnorm, k, converged, message, history)


def minimize(problem: AssimilationProblem, cfg: SolverConfig = SolverConfig()) -> AssimilationResult:
    """Minimize the problem's objective starting from the background."""
    t0 = time.perf_counter()
    if cfg.method == "gauss-newton":
        res = _gauss_newton(problem, cfg)
    else:
        res = lbfgs(problem.cost_and_grad, problem.x_b, cfg)
    wall_ms = 1e3 * (time.perf_counter() - t0)
    return AssimilationResult(res.x, res.iterations, res.fun, res.converged, res.cost_history, res.message, wall_ms)


def blue_analysis(x_b, y, B, R, H):
    """BLUE analysis, gain and posterior covariance ``(I - K H) B``."""
    x_b = np.asarray(x_b, dtype=float)
    H = np.asarray(H, dtype=float)
    innovation_cov = H @ B @ H.T + R
    try:
        # K = B H^T S^-1  <=>  S K^T = H B
        K = linalg.solve(innovation_cov, H @ B, assume_a="sym").T
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(f"singular innovation covariance: {exc}") from exc
    x_a = x_b + K @ (np.asarray(y, dtype=float) - H @ x_b)
    A = (np.eye(x_b.size) - K @ H) @ B
    return x_a, K, A


def blue_augmented(x_b, y, x_v, B, R, P, H):
    """BLUE with ``x_v`` appended to the observations: H_bar = (I; H), R_bar = diag(P, R)."""
    n = np.asarray(x_b).size
    H = np.asarray(H, dtype=float)
    y_bar = np.concatenate([np.asarray(x_v, dtype=float), np.asarray(y, dtype=float)])
    H_bar = np.vstack([np.eye(n), H])
    R_bar = linalg.block_diag(P, R)
    return blue_analysis(x_b, y_bar, B, R_bar, H_bar)


def scalar_posterior(B: float, R: float, P: float, H: float) -> tuple[float, float]:
    """Posterior variances of scalar BLUE without and with the inverse-operator term."""
    if B <= 0 or R <= 0 or P <= 0:
        raise ValueError("B, R and P must be positive")
    a_da = B * R / (B * H**2 + R)
    den = B * H**2 * P + B * R + P * R
    a_vivid = B * (
        B**2 * H**2 / den
        - B * (B * H**2 + R) / den
        - H * (-(B**2) * H / den + B * H * (B + P) / den)
        + 1.0
    )
    return a_da, a_vivid


def linear_problem(x_b, y, B, R, H, x_v=None, P=None) -> AssimilationProblem:
    return AssimilationProblem(x_b, B, y, R, LinearObservation(np.asarray(H, dtype=float)), x_v, P)
