"""Limited-memory BFGS with a strong Wolfe line search.

The line search follows Nocedal & Wright, Algorithms 3.5 and 3.6, with
safeguarded cubic interpolation in the zoom phase.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

__all__ = ["OptimOptions", "OptimResult", "LineSearchError", "minimize", "line_search"]

ObjectiveFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class OptimOptions:
    max_iters: int = 10000
    grad_tol: float = 1e-13
    residual_tol: float = 1e-10
    seed: int = 0
    init: str = "reference"
    memory: int = 10
    #: positive map for the norm weights, ``"sigmoid"`` or ``"softplus"``
    positive: str = "sigmoid"

    def __post_init__(self) -> None:
        if self.grad_tol <= 0 or self.residual_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.init not in ("reference", "zero", "random"):
            raise ValueError(f"unknown initialization: {self.init!r}")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")

    @property
    def objective_tol(self) -> float:
        return 1e-2 * self.residual_tol**2


@dataclass(frozen=True)
class OptimResult:
    objective: float
    grad_norm: float
    iters: int
    converged: bool
    exact: bool = False
    message: str = ""
    n_evals: int = 0


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating two points and slopes, or *None*."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.copysign(np.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def line_search(
    phi: Callable[[float], tuple[float, float, np.ndarray]],
    f0: float,
    g0: float,
    alpha1: float = 1.0,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_evals: int = 40,
) -> tuple[float, float, float, np.ndarray]:
    """Find a step satisfying the strong Wolfe conditions.

    *phi* maps a step length to ``(value, slope, gradient)``. Returns the
    step, value, slope and full gradient at the accepted point.
    """
    if g0 >= 0:
        raise LineSearchError("not a descent direction")

    evals = 0
    # best point with sufficient decrease, used if curvature cannot be met
    best: list = [None]

    def record(a, fa, ga, grad):
        if fa <= f0 + c1 * a * g0 and fa < f0 and (best[0] is None or fa < best[0][1]):
            best[0] = (a, fa, ga, grad)

    def zoom(lo, flo, glo, hi, fhi, ghi):
        nonlocal evals
        while evals < max_evals:
            lo_, hi_ = min(lo, hi), max(lo, hi)
            width = hi_ - lo_
            if width <= 1e-16 * max(1.0, hi_):
                break
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                a = _cubic_min(lo, flo, glo, hi, fhi, ghi)
            if a is None or not (lo_ + 0.1 * width <= a <= hi_ - 0.1 * width):
                a = 0.5 * (lo + hi)
            fa, ga, grad = phi(a)
            evals += 1
            record(a, fa, ga, grad)
            if fa > f0 + c1 * a * g0 or fa >= flo:
                hi, fhi, ghi = a, fa, ga
            else:
                if abs(ga) <= -c2 * g0:
                    return a, fa, ga, grad
                if ga * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo = a, fa, ga
        if best[0] is not None:
            return best[0]
        raise LineSearchError("zoom failed to satisfy the Wolfe conditions")

    a_prev, f_prev, g_prev = 0.0, f0, g0
    a = alpha1
    while evals < max_evals:
        fa, ga, grad = phi(a)
        evals += 1
        if not np.isfinite(fa):
            a = 0.5 * (a_prev + a)
            continue
        record(a, fa, ga, grad)
        if fa > f0 + c1 * a * g0 or (evals > 1 and fa >= f_prev):
            return zoom(a_prev, f_prev, g_prev, a, fa, ga)
        if abs(ga) <= -c2 * g0:
            return a, fa, ga, grad
        if ga >= 0:
            return zoom(a, fa, ga, a_prev, f_prev, g_prev)
        a_prev, f_prev, g_prev = a, fa, ga
        a = 2.0 * a
    if best[0] is not None:
        return best[0]
    raise LineSearchError("bracketing phase exceeded the evaluation budget")


def minimize(
    fun: ObjectiveFn,
    x0: np.ndarray,
    opts: OptimOptions = OptimOptions(),
    objective_tol: float | None = None,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> tuple[np.ndarray, OptimResult]:
    """Minimize a smooth function with L-BFGS.

    Stops when the gradient norm drops below ``opts.grad_tol``, the value
    drops below *objective_tol* (default ``opts.objective_tol``), or after
    ``opts.max_iters`` iterations. A line search failure ends the run with
    the best iterate and ``converged=False``.
    """
    if objective_tol is None:
        objective_tol = opts.objective_tol

    x = np.array(x0, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial point must be finite")

    f, g = fun(x)
    n_evals = 1
    pairs: deque[tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=opts.memory)

    def done(it, converged, message):
        gn = float(np.linalg.norm(g))
        return x, OptimResult(
            objective=float(f), grad_norm=gn, iters=it, converged=converged,
            message=message, n_evals=n_evals,
        )

    for it in range(opts.max_iters + 1):
        gnorm = np.linalg.norm(g)
        if gnorm <= opts.grad_tol:
            return done(it, True, "gradient tolerance reached")
        if f <= objective_tol:
            return done(it, True, "objective tolerance reached")
        if it == opts.max_iters:
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(pairs):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        if pairs:
            s, y, _ = pairs[-1]
            q *= np.dot(s, y) / np.dot(y, y)
        else:
            q *= min(1.0, 1.0 / gnorm)
        for (s, y, rho), a in zip(pairs, reversed(alphas)):
            b = rho * np.dot(y, q)
            q += (a - b) * s
        d = -q

        slope = float(np.dot(g, d))
        if slope >= 0:
            # lost positive definiteness; restart from steepest descent
            pairs.clear()
            d = -g * min(1.0, 1.0 / gnorm)
            slope = float(np.dot(g, d))

        def phi(alpha):
            nonlocal n_evals
            n_evals += 1
            fa, ga = fun(x + alpha * d)
            return fa, float(np.dot(ga, d)), ga

        try:
            alpha, f_new, _, g_new = line_search(phi, f, slope)
        except LineSearchError as exc:
            if pairs:
                pairs.clear()
                continue
            logger.debug("line search failed at iteration %d: %s", it, exc)
            return done(it, False, f"line search failed: {exc}")

        s = alpha * d
        y = g_new - g
        sy = float(np.dot(s, y))
        x = x + s
        f, g = f_new, g_new
        if sy > 1e-300:
            pairs.append((s, y, 1.0 / sy))

        if callback is not None:
            callback(it, x, f)

    return done(opts.max_iters, False, "iteration limit reached")
