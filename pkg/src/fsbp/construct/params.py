"""Unconstrained parametrizations of the norm weights and the skew part."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logit

from fsbp.operator import Banded, Dense, SparsityPattern

__all__ = [
    "positive_map",
    "positive_map_derivative",
    "positive_map_inverse",
    "unknown_count",
    "skew_from_params",
    "params_from_skew",
    "enumerate_unknowns",
    "RepeatingStencil",
]


# {{{ norm weights


def positive_map(rho, kind: str = "sigmoid"):
    """Map unconstrained parameters to positive norm weights.

    ``"sigmoid"`` is the logistic function ``1 / (1 + exp(-rho))`` with range
    ``(0, 1)``; ``"softplus"`` is ``log(1 + exp(rho))``, for domains on which
    weights may approach or exceed one.
    """
    if kind == "sigmoid":
        return expit(rho)
    if kind == "softplus":
        return np.logaddexp(0.0, rho)
    raise ValueError(f"unknown positive map: {kind!r}")


def positive_map_derivative(rho, kind: str = "sigmoid"):
    if kind == "sigmoid":
        s = expit(rho)
        return s * (1.0 - s)
    if kind == "softplus":
        return expit(rho)
    raise ValueError(f"unknown positive map: {kind!r}")


def positive_map_inverse(p, kind: str = "sigmoid"):
    p = np.asarray(p, dtype=np.float64)
    if kind == "sigmoid":
        if np.any((p <= 0) | (p >= 1)):
            raise ValueError("sigmoid inverse requires arguments in (0, 1)")
        return logit(p)
    if kind == "softplus":
        if np.any(p <= 0):
            raise ValueError("softplus inverse requires positive arguments")
        # log(exp(p) - 1), stable for large p
        return p + np.log(-np.expm1(-p))
    raise ValueError(f"unknown positive map: {kind!r}")


# }}}


# {{{ skew part


def unknown_count(n: int, pattern: SparsityPattern) -> int:
    """Number of free entries of ``S`` for *pattern* on *n* nodes."""
    return pattern.unknown_count(n)


def enumerate_unknowns(n: int, pattern: SparsityPattern) -> int:
    """Count the free entries by walking the pattern's block structure.

    Independent of :meth:`SparsityPattern.unknown_count` and
    :meth:`SparsityPattern.free_positions`.
    """
    if isinstance(pattern, Dense):
        return sum(1 for i in range(n) for j in range(n) if i < j)

    pattern.validate(n)
    b, c = pattern.b, pattern.c
    m = n - 2 * c
    count = 0
    # M1 and M2: strict upper triangles of the corner blocks
    count += 2 * sum(1 for i in range(c) for j in range(c) if i < j)
    # C1: triangle in the last b rows and first b columns
    for r in range(c):
        for s in range(m):
            if r >= c - b and s < b and s <= r - (c - b):
                count += 1
    # C2: mirror of C1
    count += sum(1 for r in range(c) for s in range(m) if r >= c - b and s < b and s <= r - (c - b))
    # A: band in the interior block
    count += sum(1 for i in range(m) for j in range(m) if 0 < j - i <= b)
    return count


def skew_from_params(pattern: SparsityPattern, sigma: np.ndarray, n: int) -> np.ndarray:
    """Assemble the dense skew-symmetric ``n x n`` matrix from *sigma*."""
    sigma = np.asarray(sigma, dtype=np.float64)
    expected = pattern.unknown_count(n)
    if sigma.shape != (expected,):
        raise ValueError(
            f"wrong number of skew parameters for {pattern.spec()} on N = {n}: "
            f"got {sigma.size}, expected {expected}"
        )
    i, j = pattern.free_positions(n)
    S = np.zeros((n, n))
    S[i, j] = sigma
    S[j, i] = -sigma
    return S


def params_from_skew(pattern: SparsityPattern, S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    i, j = pattern.free_positions(S.shape[0])
    return S[i, j].copy()


class RepeatingStencil:
    """Banded parametrization with a repeated interior stencil and mirrored
    boundary blocks.

    The unknowns are the strict upper triangle of ``M_1`` (``c(c-1)/2``
    values) and the ``b`` interior stencil coefficients; the right corner
    block is the row/column-reversed mirror of the left, which makes the
    numbers of parameters ``c(c - 1)/2 + b``. The ``C`` couplings take the
    interior stencil values.

    This is a linear map ``tau -> sigma`` onto the free entries of the
    general banded pattern.
    """

    def __init__(self, pattern: Banded, n: int) -> None:
        pattern.validate(n)
        self.pattern = pattern
        self.n = n
        b, c = pattern.b, pattern.c

        rows, cols = pattern.free_positions(n)
        index = {(int(r), int(s)): k for k, (r, s) in enumerate(zip(rows, cols))}
        nc = c * (c - 1) // 2
        self.size = nc + b

        E = np.zeros((rows.size, self.size))
        iu, ju = np.triu_indices(c, k=1)
        corner = {(int(r), int(s)): k for k, (r, s) in enumerate(zip(iu, ju))}
        for (r, s), k in index.items():
            if s < c:
                E[k, corner[r, s]] = 1.0
            elif r >= n - c:
                # mirror: S[n-1-s, n-1-r] = S[r, s] for the skew block
                E[k, corner[n - 1 - s, n - 1 - r]] = 1.0
            else:
                E[k, nc + (s - r) - 1] = 1.0
        self.E = E

    def sigma(self, tau: np.ndarray) -> np.ndarray:
        return self.E @ tau

    def pullback(self, grad_sigma: np.ndarray) -> np.ndarray:
        return self.E.T @ grad_sigma


# }}}
