r"""Diagonal-norm summation-by-parts operators.

An operator is stored as its nodes, the diagonal ``p`` of the norm matrix
:math:`P` and the free entries of the strict upper triangle of the skew part
:math:`S`. The differentiation matrix is

.. math::

    D = P^{-1} \left(S + \frac{1}{2} B\right),
    \qquad B = e_R e_R^T - e_L e_L^T,

so :math:`Q = S + B/2` satisfies :math:`Q + Q^T = B` by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from fsbp.funcspace import FunctionSpace, NodeSet, vandermonde

__all__ = [
    "SparsityPattern",
    "Dense",
    "Banded",
    "SBPOperator",
    "parse_pattern",
    "boundary_matrix",
    "differentiation_matrix",
    "exactness_residual",
    "sbp_defect",
    "quadrature",
]


# {{{ sparsity patterns


class SparsityPattern:
    """Structure of the free entries of the skew-symmetric part ``S``."""

    def validate(self, n: int) -> None:
        pass

    def free_positions(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Row and column indices (``i < j``) of the free entries, row-major."""
        raise NotImplementedError

    def unknown_count(self, n: int) -> int:
        raise NotImplementedError

    def spec(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Dense(SparsityPattern):
    def validate(self, n: int) -> None:
        if n < 2:
            raise ValueError(f"need at least 2 nodes, got {n}")

    def free_positions(self, n):
        self.validate(n)
        return np.triu_indices(n, k=1)

    def unknown_count(self, n):
        self.validate(n)
        return n * (n - 1) // 2

    def spec(self):
        return "dense"


@dataclass(frozen=True)
class Banded(SparsityPattern):
    r"""Block structure with dense ``c x c`` corner blocks and an interior
    band of half-width ``b``.

    In block form

    .. math::

        S = \begin{pmatrix}
            M_1 & C_1 & 0 \\
            -C_1^T & A & C_2 \\
            0 & -C_2^T & M_2
        \end{pmatrix},

    where the coupling blocks ``C_1`` and ``C_2`` carry a ``b x b`` triangle
    adjacent to the corner blocks, so that globally ``S[i, j]`` is free iff
    ``|i - j| <= b`` or both indices lie in the same corner block.
    """

    b: int
    c: int

    def __post_init__(self) -> None:
        if self.b < 1:
            raise ValueError(f"bandwidth must be at least 1: b = {self.b}")
        if self.c < self.b:
            raise ValueError(f"boundary block must satisfy c >= b: b = {self.b}, c = {self.c}")

    def validate(self, n: int) -> None:
        if n < 2 * self.c + self.b:
            raise ValueError(
                f"banded pattern b = {self.b}, c = {self.c} needs N >= 2c + b = "
                f"{2 * self.c + self.b} nodes, got N = {n}"
            )

    def mask(self, n: int) -> np.ndarray:
        """Boolean ``n x n`` mask of free strict-upper-triangle entries."""
        self.validate(n)
        i, j = np.triu_indices(n, k=1)
        free = (j - i <= self.b) | (j < self.c) | (i >= n - self.c)
        m = np.zeros((n, n), dtype=bool)
        m[i[free], j[free]] = True
        return m

    def free_positions(self, n):
        return np.nonzero(self.mask(n))

    def unknown_count(self, n):
        self.validate(n)
        b, c = self.b, self.c
        return n * b + b * (b + 1) // 2 + c * c - 2 * b * c - c

    def spec(self):
        return f"banded:b={self.b},c={self.c}"


def parse_pattern(text: str) -> SparsityPattern:
    """Parse ``dense``, ``banded:b=3,c=6`` or ``banded b=3 c=6``.

    If ``c`` is omitted it defaults to ``2b``.
    """
    t = text.strip()
    if t == "dense":
        return Dense()
    if t.startswith("banded"):
        rest = t[len("banded") :].replace(":", " ").replace(",", " ").split()
        kv = dict(item.split("=", 1) for item in rest)
        b = int(kv["b"])
        return Banded(b, int(kv.get("c", 2 * b)))
    raise ValueError(f"cannot parse sparsity pattern: {text!r}")


# }}}


# {{{ operator


def boundary_matrix(n: int) -> np.ndarray:
    B = np.zeros((n, n))
    B[0, 0] = -1.0
    B[-1, -1] = 1.0
    return B


@dataclass(frozen=True, eq=False)
class SBPOperator:
    """Diagonal-norm SBP operator.

    .. attribute:: nodes
    .. attribute:: p

        Diagonal of the norm matrix, all entries positive.

    .. attribute:: sigma

        Free entries of the strict upper triangle of ``S`` in the row-major
        order given by :meth:`SparsityPattern.free_positions`.

    .. attribute:: pattern
    """

    nodes: NodeSet
    p: np.ndarray
    sigma: np.ndarray
    pattern: SparsityPattern = Dense()

    def __post_init__(self) -> None:
        p = np.array(self.p, dtype=np.float64)
        sigma = np.array(self.sigma, dtype=np.float64)
        p.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "sigma", sigma)

        n = self.nodes.n
        if p.shape != (n,):
            raise ValueError(f"norm weights have shape {p.shape}, expected ({n},)")
        if not np.all(p > 0):
            i = int(np.argmin(p > 0))
            raise ValueError(f"non-positive norm weight at index {i + 1}")
        expected = self.pattern.unknown_count(n)
        if sigma.shape != (expected,):
            raise ValueError(
                f"skew storage has {sigma.size} entries, pattern "
                f"{self.pattern.spec()} expects {expected}"
            )

    @classmethod
    def from_matrices(
        cls, nodes: NodeSet, p: np.ndarray, S: np.ndarray, pattern: SparsityPattern = Dense()
    ) -> SBPOperator:
        """Build an operator from a (skew-symmetric) ``S``; only the free
        upper-triangle entries are kept."""
        i, j = pattern.free_positions(nodes.n)
        return cls(nodes, p, np.asarray(S, dtype=np.float64)[i, j], pattern)

    @property
    def n(self) -> int:
        return self.nodes.n

    @cached_property
    def S(self) -> np.ndarray:
        n = self.n
        i, j = self.pattern.free_positions(n)
        S = np.zeros((n, n))
        S[i, j] = self.sigma
        S[j, i] = -self.sigma
        return S

    @property
    def P(self) -> np.ndarray:
        return np.diag(self.p)

    @property
    def B(self) -> np.ndarray:
        return boundary_matrix(self.n)

    @cached_property
    def Q(self) -> np.ndarray:
        return self.S + 0.5 * self.B

    @cached_property
    def D(self) -> np.ndarray:
        return self.Q / self.p[:, None]

    @cached_property
    def D_sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.D)

    def apply(self, u: np.ndarray, axis: int = 0) -> np.ndarray:
        """Apply ``D`` along *axis* of *u*."""
        u = np.asarray(u)
        if isinstance(self.pattern, Banded):
            um = np.moveaxis(u, axis, 0)
            shape = um.shape
            out = self.D_sparse @ um.reshape(shape[0], -1)
            return np.moveaxis(out.reshape(shape), 0, axis)
        return np.moveaxis(np.tensordot(self.D, u, axes=(1, axis)), 0, axis)

    def mapped(self, x_L: float, x_R: float) -> SBPOperator:
        """Affinely map onto ``[x_L, x_R]``: ``P`` scales by the Jacobian,
        ``S`` is unchanged."""
        jac = (x_R - x_L) / self.nodes.length
        return SBPOperator(self.nodes.mapped(x_L, x_R), self.p * jac, self.sigma, self.pattern)

    def equals(self, other: SBPOperator) -> bool:
        """Bit-exact field-by-field comparison."""
        return (
            self.nodes == other.nodes
            and self.pattern == other.pattern
            and np.array_equal(self.p, other.p)
            and np.array_equal(self.sigma, other.sigma)
        )


def differentiation_matrix(op: SBPOperator) -> np.ndarray:
    return op.D.copy()


def exactness_residual(op: SBPOperator, space: FunctionSpace) -> np.ndarray:
    """Per-basis-function residual ``||D v_j - v_j'||_2``."""
    V, Vx = vandermonde(space, op.nodes)
    return np.linalg.norm(op.D @ V - Vx, axis=0)


def sbp_defect(op) -> float:
    """Frobenius norm of ``Q + Q^T - B``.

    *op* is an operator (anything with a ``Q`` attribute) or a square
    matrix ``Q``.
    """
    Q = np.asarray(op.Q if hasattr(op, "Q") else op, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"Q must be square, got shape {Q.shape}")
    return float(np.linalg.norm(Q + Q.T - boundary_matrix(Q.shape[0])))


def quadrature(op: SBPOperator, samples: np.ndarray) -> float:
    """Discrete integral ``sum_i p_i u_i``."""
    return float(np.dot(op.p, samples))


# }}}
