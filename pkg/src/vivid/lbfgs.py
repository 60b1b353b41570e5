"""Limited-memory BFGS with a strong-Wolfe line search."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FunGrad = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class SolverConfig:
    """Stopping and line-search settings.

    ``tol`` bounds the gradient 2-norm. ``ftol`` is the relative cost
    decrease below which an accepted step counts as stagnation,
    ``(f_k - f_{k+1}) <= ftol * max(|f_k|, |f_{k+1}|, 1)``; 0 disables it.
    ``f_noise`` is the relative rounding level of f below which the line
    search compares points by slope instead of value.
    """

    tol: float = 1e-6
    k_max: int = 1000
    memory: int = 10
    ftol: float = 0.0
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 40
    f_noise: float = 1e-12
    method: str = "lbfgs"  # or "gauss-newton"

    def __post_init__(self):
        if self.tol <= 0 or self.k_max < 1 or self.memory < 1:
            raise ValueError("require tol > 0, k_max >= 1, memory >= 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("require 0 < c1 < c2 < 1")
        if self.f_noise < 0:
            raise ValueError("f_noise must be >= 0")
        if self.method not in ("lbfgs", "gauss-newton"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool
    message: str
    cost_history: list[float] = field(default_factory=list)
    n_evals: int = 0


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), or None."""
    if a == b:
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if not np.isfinite(disc) or disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def strong_wolfe(phi, f0: float, d0: float, alpha1: float, c1: float, c2: float, max_iter: int, f_noise: float = 0.0):
    """Bracketing + zoom line search (Nocedal & Wright, Alg. 3.5/3.6).

    ``phi(alpha)`` returns ``(f, g, dphi)``. Returns ``(alpha, f, g, evals)``;
    raises LineSearchError when no point with sufficient decrease is found.

    Near a minimizer the Armijo decrease falls below the rounding of f. A
    step that leaves f unchanged up to rounding and whose slope satisfies
    ``d <= (2 c1 - 1) d0`` (the approximate Armijo test of Hager and Zhang)
    is then accepted too, and values of f equal to rounding are ordered by
    their slope.
    """
    noise = max(4.0 * np.finfo(float).eps, f_noise) * max(abs(f0), 1e-300)

    def armijo(alpha, f, d):
        if not np.isfinite(f):
            return False
        return f <= f0 + c1 * alpha * d0 or (f <= f0 + noise and d <= (2.0 * c1 - 1.0) * d0)

    def worse(f, d, f_ref, toward_ref):
        # f is no better than f_ref; within rounding, judge by the slope
        if abs(f - f_ref) > noise:
            return f > f_ref
        return d * toward_ref < 0

    evals = 0
    a_prev, f_prev, d_prev = 0.0, f0, d0
    best = None  # last point known to satisfy the Armijo condition
    alpha = alpha1
    lo = hi = None
    for i in range(max_iter):
        f, g, d = phi(alpha)
        evals += 1
        if not armijo(alpha, f, d) or (i > 0 and worse(f, d, f_prev, a_prev - alpha)):
            lo, hi = (a_prev, f_prev, d_prev, None), (alpha, f, d)
            break
        best = (alpha, f, g)
        if abs(d) <= -c2 * d0:
            return alpha, f, g, evals
        if d >= 0:
            lo, hi = (alpha, f, d, g), (a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev = alpha, f, d
        alpha *= 2.0
    else:
        if best is not None:
            return (*best, evals)
        raise LineSearchError("bracketing phase exhausted")

    a_lo, f_lo, d_lo, g_lo = lo
    a_hi, f_hi, d_hi = hi
    if g_lo is not None:
        best = (a_lo, f_lo, g_lo)
    for _ in range(max_iter):
        width = abs(a_hi - a_lo)
        if not np.isfinite(f_hi):
            alpha = None
        elif abs(f_hi - f_lo) <= noise and d_hi != d_lo:
            # f is flat to rounding: secant step on the slope alone
            alpha = a_lo - d_lo * (a_hi - a_lo) / (d_hi - d_lo)
        else:
            alpha = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
        left, right = min(a_lo, a_hi), max(a_lo, a_hi)
        if alpha is None or not (left + 0.1 * width <= alpha <= right - 0.1 * width):
            alpha = 0.5 * (a_lo + a_hi)
        f, g, d = phi(alpha)
        evals += 1
        if not armijo(alpha, f, d) or worse(f, d, f_lo, a_lo - alpha):
            a_hi, f_hi, d_hi = alpha, f, d
        else:
            best = (alpha, f, g)
            if abs(d) <= -c2 * d0:
                return alpha, f, g, evals
            if d * (a_hi - a_lo) >= 0:
                a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
            a_lo, f_lo, d_lo = alpha, f, d
        if width < 1e-16 * max(1.0, abs(a_lo)):
            break
    if best is not None and best[0] > 0:
        return (*best, evals)
    raise LineSearchError("zoom phase failed to find sufficient decrease")


def _two_loop(g: np.ndarray, pairs) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs(fun_grad: FunGrad, x0: np.ndarray, cfg: SolverConfig = SolverConfig()) -> OptimizeResult:
    """Minimize ``fun_grad`` from ``x0``.

    ``iterations`` counts accepted line-search steps. Line-search failure
    returns the best iterate with ``converged=False``.
    """
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    n_evals = 1
    history = [float(f)]
    gnorm = float(np.linalg.norm(g))
    if gnorm < cfg.tol:
        return OptimizeResult(x, float(f), gnorm, 0, True, "gradient norm below tol", history, n_evals)

    pairs: deque = deque(maxlen=cfg.memory)
    k = 0
    converged = False
    message = "iteration limit reached"
    while k < cfg.k_max:
        if pairs:
            d = _two_loop(g, pairs)
            alpha1 = 1.0
        else:
            d = -g
            alpha1 = min(1.0, 1.0 / gnorm)
        d0 = float(g @ d)
        if not d0 < 0:
            pairs.clear()
            d = -g
            alpha1 = min(1.0, 1.0 / gnorm)
            d0 = float(g @ d)

        def phi(alpha, d=d):
            fa, ga = fun_grad(x + alpha * d)
            return float(fa), ga, float(ga @ d)

        try:
            alpha, f_new, g_new, evals = strong_wolfe(
                phi, float(f), d0, alpha1, cfg.c1, cfg.c2, cfg.max_line_search, cfg.f_noise
            )
        except LineSearchError as exc:
            message = f"line search failed: {exc}"
            break
        n_evals += evals
        s = alpha * d
        if not np.any(x + s != x):
            message = "step below floating-point resolution of x"
            break
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(y @ y):
            pairs.append((s, y, 1.0 / sy))
        x = x + s
        f_old, f, g = f, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        history.append(float(f))
        k += 1
        if gnorm < cfg.tol:
            converged, message = True, "gradient norm below tol"
            break
        if cfg.ftol > 0 and (f_old - f) <= cfg.ftol * max(abs(f_old), abs(f), 1.0):
            converged, message = True, "relative cost decrease below ftol"
            break
    return OptimizeResult(x, float(f), gnorm, k, converged, message, history, n_evals)
