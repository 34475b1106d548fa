r"""Construction objectives and their analytic gradients.

The optimization variables are stacked as ``x = [rho, sigma]`` where
``p = s(rho)`` are the norm weights and ``sigma`` the free entries of the
skew part. The exactness residual is

.. math::

    R = S(\sigma) V - P(\rho) V_x + \frac{1}{2} B V,

and the (unregularized) objective is :math:`\|R\|_F^2`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fsbp.construct.params import positive_map, positive_map_derivative
from fsbp.operator import SparsityPattern

__all__ = [
    "Problem",
    "objective_and_gradient",
    "exactness_objective",
    "regularization_and_gradient",
]


@dataclass
class Problem:
    """Data shared by all objectives of one construction run."""

    V: np.ndarray
    Vx: np.ndarray
    pattern: SparsityPattern
    G: np.ndarray | None = None
    Gx: np.ndarray | None = None
    weights: np.ndarray | None = None
    positive: str = "sigmoid"
    #: optional linear map from reduced parameters to ``sigma``
    expand: np.ndarray | None = None

    rows: np.ndarray = field(init=False, repr=False)
    cols: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.V = np.asarray(self.V, dtype=np.float64)
        self.Vx = np.asarray(self.Vx, dtype=np.float64)
        n = self.V.shape[0]
        self.rows, self.cols = self.pattern.free_positions(n)
        self.BV2 = np.zeros_like(self.V)
        self.BV2[0] = -0.5 * self.V[0]
        self.BV2[-1] = 0.5 * self.V[-1]
        if self.G is not None:
            self.G = np.asarray(self.G, dtype=np.float64)
            self.Gx = np.asarray(self.Gx, dtype=np.float64)
            self.BG2 = np.zeros_like(self.G)
            self.BG2[0] = -0.5 * self.G[0]
            self.BG2[-1] = 0.5 * self.G[-1]
            if self.weights is None:
                self.weights = np.ones(self.G.shape[1])
            self.weights = np.asarray(self.weights, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def n_sigma(self) -> int:
        if self.expand is not None:
            return self.expand.shape[1]
        return self.rows.size

    @property
    def size(self) -> int:
        return self.n + self.n_sigma

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rho, sigma = x[: self.n], x[self.n :]
        if self.expand is not None:
            sigma = self.expand @ sigma
        return rho, sigma

    def skew(self, sigma: np.ndarray) -> np.ndarray:
        S = np.zeros((self.n, self.n))
        S[self.rows, self.cols] = sigma
        S[self.cols, self.rows] = -sigma
        return S

    def residual(self, x: np.ndarray) -> np.ndarray:
        rho, sigma = self.split(x)
        p = positive_map(rho, self.positive)
        return self.skew(sigma) @ self.V - p[:, None] * self.Vx + self.BV2

    def pullback(self, rho: np.ndarray, gS: np.ndarray, gp: np.ndarray) -> np.ndarray:
        """Chain rule from gradients w.r.t. the full ``S`` and ``p`` to ``x``."""
        gsigma = gS[self.rows, self.cols] - gS[self.cols, self.rows]
        if self.expand is not None:
            gsigma = self.expand.T @ gsigma
        grho = gp * positive_map_derivative(rho, self.positive)
        return np.concatenate([grho, gsigma])

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """Jacobian of the row-major flattened residual ``R(x)``."""
        rho, _ = self.split(x)
        n, k = self.V.shape
        ds = positive_map_derivative(rho, self.positive)
        J = np.zeros((n, k, n + self.rows.size))
        J[np.arange(n), :, np.arange(n)] = -ds[:, None] * self.Vx
        cols = n + np.arange(self.rows.size)
        J[self.rows, :, cols] += self.V[self.cols]
        J[self.cols, :, cols] -= self.V[self.rows]
        J = J.reshape(n * k, -1)
        if self.expand is not None:
            J = np.hstack([J[:, :n], J[:, n:] @ self.expand])
        return J

    def residual_adjoint(self, x: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Gradient of ``<Z, R(x)>_F`` with respect to ``x``."""
        rho, _ = self.split(x)
        gS = Z @ self.V.T
        gp = -np.einsum("ij,ij->i", self.Vx, Z)
        return self.pullback(rho, gS, gp)


def objective_and_gradient(x: np.ndarray, problem: Problem) -> tuple[float, np.ndarray]:
    """Squared Frobenius norm of the exactness residual and its gradient."""
    R = problem.residual(x)
    return float(np.sum(R * R)), 2.0 * problem.residual_adjoint(x, R)


def exactness_objective(
    rho: np.ndarray,
    sigma: np.ndarray,
    V: np.ndarray,
    Vx: np.ndarray,
    pattern: SparsityPattern,
    positive: str = "sigmoid",
) -> tuple[float, np.ndarray, np.ndarray]:
    """Split form of :func:`objective_and_gradient`: returns the value and
    the gradients with respect to ``rho`` and ``sigma``."""
    problem = Problem(V, Vx, pattern, positive=positive)
    rho = np.asarray(rho, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size != problem.n_sigma:
        raise ValueError(
            f"wrong number of skew parameters: got {sigma.size}, expected {problem.n_sigma}"
        )
    value, g = objective_and_gradient(np.concatenate([rho, sigma]), problem)
    return value, g[: problem.n], g[problem.n :]


def regularization_and_gradient(x: np.ndarray, problem: Problem) -> tuple[float, np.ndarray]:
    r"""Weighted derivative error on the augmented basis,
    :math:`\sum_k \lambda_k \|D g_k - g_k'\|_2^2`, and its gradient."""
    if problem.G is None or problem.G.shape[1] == 0:
        return 0.0, np.zeros(problem.size)

    rho, sigma = problem.split(x)
    p = positive_map(rho, problem.positive)
    QG = problem.skew(sigma) @ problem.G + problem.BG2
    E = QG / p[:, None] - problem.Gx
    lam = problem.weights

    value = float(np.sum(lam * E * E))
    W = 2.0 * (E * lam) / p[:, None]
    gS = W @ problem.G.T
    gp = -np.einsum("ij,ij->i", W, QG) / p
    return value, problem.pullback(rho, gS, gp)
