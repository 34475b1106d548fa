"""Optimization-based construction of FSBP operators."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from fsbp.construct.lbfgs import OptimOptions, OptimResult, minimize
from fsbp.construct.objective import Problem, objective_and_gradient
from fsbp.construct.params import RepeatingStencil, positive_map, positive_map_inverse
from fsbp.funcspace import FunctionSpace, NodeSet, vandermonde, warn_if_not_conservative
from fsbp.operator import Banded, Dense, SBPOperator, SparsityPattern

logger = logging.getLogger(__name__)

__all__ = [
    "RegularizationSpec",
    "trapezoidal_weights",
    "initial_guess",
    "make_problem",
    "preconditioned",
    "jacobian_scaling",
    "minimize_rescaled",
    "gauss_newton_polish",
    "assemble",
    "construct_operator",
]


@dataclass(frozen=True)
class RegularizationSpec:
    """Augmented basis ``G`` and positive weights, one per function."""

    g_basis: FunctionSpace | None
    weights: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        m = 0 if self.g_basis is None else self.g_basis.dim
        w = tuple(float(v) for v in self.weights) if self.weights else (1.0,) * m
        object.__setattr__(self, "weights", w)
        if len(w) != m:
            raise ValueError(f"got {len(w)} weights for {m} augmented basis functions")
        if any(v <= 0 for v in w):
            raise ValueError("regularization weights must be positive")

    @property
    def size(self) -> int:
        return len(self.weights)


def trapezoidal_weights(nodes: NodeSet) -> np.ndarray:
    h = np.diff(nodes.nodes)
    w = np.zeros(nodes.n)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def make_problem(
    space: FunctionSpace,
    nodes: NodeSet,
    pattern: SparsityPattern,
    opts: OptimOptions = OptimOptions(),
    reg: RegularizationSpec | None = None,
    repeating: bool = False,
) -> Problem:
    pattern.validate(nodes.n)
    V, Vx = vandermonde(space, nodes)
    G = Gx = weights = None
    if reg is not None and reg.size > 0:
        G, Gx = vandermonde(reg.g_basis, nodes)
        weights = np.array(reg.weights)

    expand = None
    if repeating:
        if not isinstance(pattern, Banded):
            raise ValueError("repeating stencils require a banded pattern")
        expand = RepeatingStencil(pattern, nodes.n).E

    return Problem(V, Vx, pattern, G=G, Gx=Gx, weights=weights,
                   positive=opts.positive, expand=expand)


def initial_guess(problem: Problem, nodes: NodeSet, opts: OptimOptions) -> np.ndarray:
    """Starting point for the optimizer.

    * ``reference``: trapezoidal norm weights; for banded patterns, ``S``
      starts from the nearest-neighbour couplings ``+-1/2`` of the central
      difference, for dense patterns from zero.
    * ``zero``: ``rho = 0`` and ``sigma = 0``.
    * ``random``: trapezoidal weights and ``sigma ~ N(0, 0.1)``.
    """
    if opts.init == "zero":
        return np.zeros(problem.size)

    w = trapezoidal_weights(nodes)
    if opts.positive == "sigmoid":
        w = np.clip(w, 1e-3, 1.0 - 1e-3)
    rho = positive_map_inverse(w, opts.positive)

    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        tau = rng.normal(0.0, 0.1, size=problem.n_sigma)
    elif isinstance(problem.pattern, Dense):
        tau = np.zeros(problem.n_sigma)
    else:
        sigma = np.where(problem.cols - problem.rows == 1, 0.5, 0.0)
        if problem.expand is not None:
            tau, *_ = np.linalg.lstsq(problem.expand, sigma, rcond=None)
        else:
            tau = sigma

    return np.concatenate([rho, tau])


def preconditioned(problem: Problem) -> tuple[Problem, float]:
    """Equivalent problem in a basis orthonormal with respect to the
    stacked data ``[V; Vx]``.

    Replacing ``V, Vx`` by ``V T, Vx T`` for invertible ``T`` leaves the set
    of exact operators unchanged but removes the column scaling of
    ill-conditioned bases such as monomials. Returns the problem and
    ``||T^{-1}||_2^2``, which bounds the ratio of the original to the
    transformed objective.
    """
    if problem.V.shape[1] == 0:
        return problem, 1.0
    _, R = np.linalg.qr(np.vstack([problem.V, problem.Vx]))
    T = np.linalg.inv(R)
    work = Problem(
        problem.V @ T, problem.Vx @ T, problem.pattern,
        G=problem.G, Gx=problem.Gx, weights=problem.weights,
        positive=problem.positive, expand=problem.expand,
    )
    return work, float(np.linalg.norm(R, 2) ** 2)


def jacobian_scaling(J: np.ndarray, size: int, null_tol: float = 1e-14) -> np.ndarray:
    """Symmetric scaling ``M ~ (J^T J)^{-1/2}``, computed from the SVD of *J*.

    Directions in the (numerical) nullspace of *J* keep unit scaling
    relative to the largest singular value.
    """
    _, s, Vt = np.linalg.svd(J, full_matrices=True)
    smax = s[0] if s.size and s[0] > 0 else 1.0
    sv = np.zeros(size)
    sv[: s.size] = s
    sv = np.where(sv < null_tol * smax, smax, sv)
    return (Vt.T / sv) @ Vt


def minimize_rescaled(
    fun,
    jac,
    x0: np.ndarray,
    opts: OptimOptions,
    objective_tol: float,
    max_rounds: int = 20,
    round_iters: int = 3000,
) -> tuple[np.ndarray, OptimResult]:
    """L-BFGS in the variables ``w`` with ``x = x_r + M_r w``.

    ``M_r`` is recomputed from the residual Jacobian at the start of every
    round. Each round runs at most ``min(round_iters, opts.max_iters)``
    iterations; rounds stop once the objective tolerance is met or a round
    improves the objective by less than one percent. A round whose first
    line search fails is retried with a larger nullspace cutoff, since
    directions with tiny singular values get amplified into noise.
    """
    x = np.array(x0, dtype=np.float64)
    iters = evals = 0
    f_best = np.inf
    result = None
    budget = min(round_iters, opts.max_iters)

    for _ in range(max_rounds):
        J = jac(x)
        xr = x
        for null_tol in (1e-14, 1e-10, 1e-6):
            M = jacobian_scaling(J, x.size, null_tol)

            def scaled(w, M=M):
                f, g = fun(xr + M @ w)
                return f, M @ g

            w, result = minimize(
                scaled, np.zeros_like(x), replace(opts, max_iters=budget),
                objective_tol=objective_tol,
            )
            if result.iters > 0 or result.converged:
                break
        x = xr + M @ w
        iters += result.iters
        evals += result.n_evals
        if result.objective <= objective_tol or result.objective >= 0.99 * f_best:
            break
        f_best = result.objective

    f, g = fun(x)
    converged = f <= objective_tol or float(np.linalg.norm(g)) <= opts.grad_tol
    return x, replace(
        result, objective=f, grad_norm=float(np.linalg.norm(g)), iters=iters,
        n_evals=evals, converged=converged or result.converged,
    )


def _solve(problem: Problem, x0: np.ndarray, opts: OptimOptions, precondition: str):
    if precondition == "auto":
        precondition = "basis" if isinstance(problem.pattern, Dense) else "jacobian"

    if precondition == "basis":
        work, scale = preconditioned(problem)
        x, result = minimize(
            lambda z: objective_and_gradient(z, work), x0, opts,
            objective_tol=opts.objective_tol / scale,
        )
        # the scaled gradient can stall first; polish in the original variables
        if objective_and_gradient(x, problem)[0] > opts.objective_tol:
            remaining = max(opts.max_iters - result.iters, 0)
            x, polish = minimize(
                lambda z: objective_and_gradient(z, problem), x,
                replace(opts, max_iters=remaining),
            )
            result = replace(
                polish, iters=result.iters + polish.iters,
                n_evals=result.n_evals + polish.n_evals,
            )
        return x, result
    if precondition == "jacobian":
        return minimize_rescaled(
            lambda z: objective_and_gradient(z, problem), problem.jacobian,
            x0, opts, opts.objective_tol,
        )
    if precondition == "none":
        return minimize(lambda z: objective_and_gradient(z, problem), x0, opts)
    raise ValueError(f"unknown preconditioner: {precondition!r}")


def gauss_newton_polish(
    problem: Problem, x: np.ndarray, max_steps: int = 8, floor: float = 1e-30
) -> tuple[np.ndarray, float]:
    """Refine a near-exact point with damped Gauss-Newton steps.

    The minimum-norm step lies in the row space of the residual Jacobian,
    so the structure of ``S`` reached by the gradient iteration is kept.
    Steps are only accepted if they decrease the objective.
    """
    f = objective_and_gradient(x, problem)[0]
    for _ in range(max_steps):
        if f <= floor:
            break
        r = problem.residual(x).ravel()
        dx = np.linalg.lstsq(problem.jacobian(x), -r, rcond=None)[0]
        for alpha in 0.5 ** np.arange(12):
            f_new = objective_and_gradient(x + alpha * dx, problem)[0]
            if f_new < f:
                break
        else:
            break
        x, f = x + alpha * dx, f_new
    return x, f


def assemble(x: np.ndarray, problem: Problem, nodes: NodeSet) -> SBPOperator:
    rho, sigma = problem.split(x)
    p = positive_map(rho, problem.positive)
    return SBPOperator(nodes, p, sigma, problem.pattern)


def construct_operator(
    space: FunctionSpace,
    nodes: NodeSet,
    pattern: SparsityPattern = Dense(),
    opts: OptimOptions = OptimOptions(),
    repeating: bool = False,
    precondition: str = "auto",
    polish: bool = True,
) -> tuple[SBPOperator, OptimResult]:
    """Construct an operator exact on *space* (if one is found).

    The returned operator always satisfies positivity of the norm and the
    SBP property; ``result.exact`` reports whether exactness on *space* was
    reached to ``opts.residual_tol``.

    *precondition* selects the variable scaling used by the optimizer:
    ``"basis"`` orthonormalizes the basis data (see :func:`preconditioned`),
    ``"jacobian"`` rescales the parameters by the pseudo-inverse of the
    residual Jacobian (see :func:`minimize_rescaled`), ``"none"`` turns both
    off and ``"auto"`` uses ``"basis"`` for dense and ``"jacobian"`` for
    banded patterns. With *polish*, results within a factor 1000 of the
    residual tolerance are refined by :func:`gauss_newton_polish` before
    exactness is decided.
    """
    warn_if_not_conservative(space)
    problem = make_problem(space, nodes, pattern, opts, repeating=repeating)
    x0 = initial_guess(problem, nodes, opts)

    x, result = _solve(problem, x0, opts, precondition)

    objective = objective_and_gradient(x, problem)[0]
    if polish and objective <= (1e3 * opts.residual_tol) ** 2:
        x, objective = gauss_newton_polish(problem, x)
    exact = objective <= opts.residual_tol**2
    result = replace(
        result, objective=objective, exact=exact, converged=result.converged or exact
    )
    logger.info(
        "constructed %s operator on N = %d for %s: objective %.3e after %d iterations",
        pattern.spec(), nodes.n, space.name, result.objective, result.iters,
    )
    return assemble(x, problem, nodes), result
